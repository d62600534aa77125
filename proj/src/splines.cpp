#include "aiv/splines.hpp"

#include <algorithm>
#include <cmath>

namespace aiv {

int default_interior_knots(Eigen::Index n) {
  return static_cast<int>(std::floor(std::pow(static_cast<double>(n), 0.2)));
}

SplineSpec make_knots(const VectorXd& z_col, int interior_knots, int order) {
  if (z_col.size() < 2) throw InvalidInput("make_knots needs at least 2 points");
  if (interior_knots < 0) throw InvalidInput("interior knot count must be >= 0");
  if (order < 2) throw InvalidInput("spline order must be >= 2");
  const double zmin = z_col.minCoeff();
  const double zmax = z_col.maxCoeff();
  if (!(zmax > zmin)) {
    throw InvalidInput("degenerate instrument: column is constant (min == max == " +
                       std::to_string(zmin) + ")");
  }
  // Widen so every observation is strictly interior to [a,b].
  const double delta = 1e-9 * (zmax - zmin + 1.0);
  SplineSpec spec;
  spec.order = order;
  spec.interior_knots = interior_knots;
  spec.range_a = zmin - delta;
  spec.range_b = zmax + delta;

  const int m = spec.basis_size();
  spec.knots.resize(m + order);
  for (int i = 0; i < order; ++i) spec.knots[i] = spec.range_a;
  const double step = (spec.range_b - spec.range_a) / (interior_knots + 1);
  for (int t = 1; t <= interior_knots; ++t) spec.knots[order - 1 + t] = spec.range_a + t * step;
  for (int i = 0; i < order; ++i) spec.knots[m + i] = spec.range_b;
  return spec;
}

VectorXd eval_basis(const SplineSpec& spec, double z_point) {
  const int m = spec.basis_size();
  const int ord = spec.order;
  const auto& t = spec.knots;
  const double z = std::clamp(z_point, spec.range_a, spec.range_b);

  // Knot span: largest i with t[i] <= z < t[i+1]; the last span is closed.
  int span = ord - 1;              // first non-degenerate span starts here
  const int last = m - 1;          // index of the last span start
  if (z >= t[m]) {
    span = last;
  } else {
    while (span < last && z >= t[span + 1]) ++span;
  }

  // Cox-de Boor triangle over the ord nonzero functions on the span.
  std::vector<double> vals(ord, 0.0), left(ord, 0.0), right(ord, 0.0);
  vals[0] = 1.0;
  for (int d = 1; d < ord; ++d) {
    left[d] = z - t[span + 1 - d];
    right[d] = t[span + d] - z;
    double saved = 0.0;
    for (int r = 0; r < d; ++r) {
      const double denom = right[r + 1] + left[d - r];
      const double tmp = denom != 0.0 ? vals[r] / denom : 0.0;
      vals[r] = saved + right[r + 1] * tmp;
      saved = left[d - r] * tmp;
    }
    vals[d] = saved;
  }

  VectorXd phi = VectorXd::Zero(m);
  for (int r = 0; r < ord; ++r) {
    const int k = span - ord + 1 + r;
    if (k >= 0 && k < m) phi(k) = vals[r];
  }
  return phi;
}

SplineDesign build_design(const Dataset& dataset, int interior_knots, int order) {
  const Eigen::Index n = dataset.n();
  const int q = static_cast<int>(dataset.q());
  SplineDesign design;
  design.specs.reserve(q);
  for (int j = 0; j < q; ++j) {
    design.specs.push_back(make_knots(dataset.z.col(j), interior_knots, order));
  }
  const int m = design.specs.front().basis_size();
  design.u.resize(n, static_cast<Eigen::Index>(q) * m);
  design.group_offsets.resize(q);
  design.column_means.resize(q, m);

  for (int j = 0; j < q; ++j) {
    design.group_offsets[j] = j * m;
    auto block = design.u.middleCols(j * m, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      block.row(i) = eval_basis(design.specs[j], dataset.z(i, j)).transpose();
    }
    for (int k = 0; k < m; ++k) {
      double mean = block.col(k).mean();
      block.col(k).array() -= mean;
      const double rem = block.col(k).mean();
      block.col(k).array() -= rem;
      design.column_means(j, k) = mean + rem;
    }
  }
  return design;
}

VectorXd eval_fitted_function(const SplineDesign& design, const VectorXd& gamma_block,
                              int instrument, const VectorXd& z_grid) {
  const int m = design.m();
  if (gamma_block.size() != m) {
    throw InvalidInput("gamma block length " + std::to_string(gamma_block.size()) +
                       " does not match basis size " + std::to_string(m));
  }
  if (instrument < 0 || instrument >= design.q()) {
    throw InvalidInput("instrument index out of range");
  }
  const SplineSpec& spec = design.specs[instrument];
  VectorXd out(z_grid.size());
  for (Eigen::Index i = 0; i < z_grid.size(); ++i) {
    const VectorXd phi = eval_basis(spec, z_grid(i));
    double acc = 0.0;
    for (int k = 0; k < m; ++k) {
      acc += gamma_block(k) * (phi(k) - design.column_means(instrument, k));
    }
    out(i) = acc;
  }
  return out;
}

}  // namespace aiv
