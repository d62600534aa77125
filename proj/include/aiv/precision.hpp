#pragma once

#include "aiv/core.hpp"
#include "aiv/group_lasso.hpp"

namespace aiv {

// Row-wise constrained-L1 inverse of sigma_hat_f:
//   theta_l = argmin ||theta||_1  s.t.  ||sigma_hat_f theta - e_l||_inf <= upsilon.
struct PrecisionEstimate {
  MatrixXd theta_rows;               // p x p, row l = theta_l
  double upsilon = 0.0;
  MatrixXd sigma_hat_f;              // the matrix actually inverted
  std::vector<bool> feasibility_flags;

  bool all_feasible() const {
    for (bool f : feasibility_flags) {
      if (!f) return false;
    }
    return true;
  }
};

// The upsilon grid search exhausted without a fully feasible point.
class NoFeasibleUpsilon : public SolverError {
public:
  explicit NoFeasibleUpsilon(const std::string& msg) : SolverError(msg) {}
};

// X_hat' X_hat / n, symmetrized.
MatrixXd sample_sigma_f(const FirstStageFit& first_stage);

std::pair<VectorXd, bool> solve_clime_row(const MatrixXd& sigma, int ell, double upsilon);

PrecisionEstimate estimate_precision(const MatrixXd& sigma, double upsilon, int threads = 1);

// Smallest grid value for which every row is feasible and the recomputed
// max-norm defect ||sigma omega - I||_max stays within it.
double select_upsilon(const MatrixXd& sigma, const std::vector<double>& grid, int threads = 1);

// Pipeline entry point: runs the row programs on the correlation rescaling
// R = D^-1 sigma D^-1 (D = sqrt of the diagonal), with the tolerance grid
// selected on R, and maps the rows back to sigma's scale via
// omega = D^-1 Theta_R D^-1. Raw-scale sigma from the hard designs spans
// many orders of magnitude, where the unscaled program is numerically
// meaningless; theta_rows of the result satisfy the constraint in R units.
PrecisionEstimate estimate_precision_scaled(const MatrixXd& sigma, int threads = 1);

std::vector<double> default_upsilon_grid(const MatrixXd& sigma, int points = 20);

// Entrywise max norm of sigma * theta_rows' - I.
double precision_defect(const MatrixXd& sigma, const MatrixXd& theta_rows);

}  // namespace aiv
