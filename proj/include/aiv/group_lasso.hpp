#pragma once

#include "aiv/core.hpp"
#include "aiv/splines.hpp"

namespace aiv {

// One first-stage problem: (1/2n)||target - U gamma||^2 + lambda sum_j ||gamma_j||_2
// where gamma_j is instrument j's block of group_size coefficients.
struct GroupLassoProblem {
  Eigen::Ref<const MatrixXd> u;
  Eigen::Ref<const VectorXd> target;
  double lambda = 0.0;
  std::vector<int> group_offsets;
  int group_size = 0;
};

// Shared quadratic data for all treatments and the whole lambda path:
// g = U'U/n, plus the per-block majorization step sizes.
struct GroupGram {
  MatrixXd g;                     // qm x qm
  std::vector<double> block_step; // t_j = largest eigenvalue of G_jj
  std::vector<int> offsets;
  int group_size = 0;
  Eigen::Index n = 0;

  int groups() const { return static_cast<int>(offsets.size()); }
};

GroupGram make_group_gram(const MatrixXd& u, const std::vector<int>& offsets, int group_size);

// Smallest lambda for which the solution is exactly zero: max_j ||U_j' target||_2 / n.
double lambda_max_group(const Eigen::Ref<const MatrixXd>& u,
                        const Eigen::Ref<const VectorXd>& target,
                        const std::vector<int>& offsets, int group_size);

// Cyclic block coordinate descent with per-block majorization. Stops when the
// KKT residual (see kkt_residual_group) drops below tol. gamma is used as a
// warm start and overwritten.
FitDiagnostics solve_group_lasso_gram(const GroupGram& gram, const VectorXd& h,
                                      double target_sq_n, double lambda, double tol,
                                      int max_iter, VectorXd& gamma);

std::pair<VectorXd, FitDiagnostics> solve_group_lasso(const GroupLassoProblem& problem,
                                                      double tol, int max_iter);

// Max over groups of the subgradient-optimality violation at gamma.
double kkt_residual_group(const Eigen::Ref<const MatrixXd>& u,
                          const Eigen::Ref<const VectorXd>& target,
                          const std::vector<int>& offsets, int group_size, double lambda,
                          const VectorXd& gamma);

struct FirstStageFit {
  MatrixXd gamma_hat;                           // qm x p
  MatrixXd x_hat;                               // n x p, = U * gamma_hat
  VectorXd lambdas;                             // p
  std::vector<std::vector<int>> active_groups;  // selected instruments per treatment
  std::vector<FitDiagnostics> diagnostics;      // per treatment
};

FirstStageFit fit_first_stage(const SplineDesign& design, const Dataset& dataset,
                              const VectorXd& lambdas, double tol = 1e-7,
                              int max_iter = 10000, int threads = 1);

constexpr double kGroupLassoTol = 1e-7;
constexpr int kGroupLassoMaxIter = 10000;

}  // namespace aiv
