#pragma once

#include "aiv/core.hpp"

namespace aiv {

// Clamped (open) knot vector on [a,b]: boundary knots repeated order times,
// interior_knots equally spaced strictly inside. basis_size = K + order.
// The basis spans polynomials of degree order-1 on [a,b].
struct SplineSpec {
  int order = 4;               // L; polynomial degree is L-1
  int interior_knots = 0;      // K
  double range_a = 0.0;
  double range_b = 1.0;
  std::vector<double> knots;   // full clamped knot vector, size m + order

  int basis_size() const { return interior_knots + order; }
};

// Per-instrument centered basis evaluations, stacked column blocks.
struct SplineDesign {
  std::vector<SplineSpec> specs;  // one per instrument
  MatrixXd u;                     // n x (q*m), column-centered blocks
  std::vector<int> group_offsets; // column offset of instrument j's block
  MatrixXd column_means;          // q x m, subtracted means

  int q() const { return static_cast<int>(specs.size()); }
  int m() const { return specs.empty() ? 0 : specs.front().basis_size(); }
};

SplineSpec make_knots(const VectorXd& z_col, int interior_knots, int order);

// Raw normalized B-spline values (phi_1..phi_m) at one point; z is clamped
// into [a,b]. Entries are in [0,1] and sum to 1.
VectorXd eval_basis(const SplineSpec& spec, double z_point);

SplineDesign build_design(const Dataset& dataset, int interior_knots, int order);

// Centered fitted component sum_k gamma_k * (phi_k(z) - column_mean_k) on a grid.
VectorXd eval_fitted_function(const SplineDesign& design, const VectorXd& gamma_block,
                              int instrument, const VectorXd& z_grid);

// Rate-guided default K = floor(n^{1/5}) for smoothness d = 2.
int default_interior_knots(Eigen::Index n);

}  // namespace aiv
