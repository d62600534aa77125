#pragma once

#include "aiv/core.hpp"
#include "aiv/group_lasso.hpp"

namespace aiv {

struct SecondStageFit {
  VectorXd beta_hat;            // p
  double mu = 0.0;
  std::vector<int> active_set;  // { l : beta_hat_l != 0 }
  double sigma0_hat = 0.0;      // n^{-1/2} ||Y - X beta_hat||_2, observed X
  FitDiagnostics diagnostics;
};

// Smallest mu with an all-zero solution: ||design' target||_inf / n.
double lambda_max_lasso(const Eigen::Ref<const MatrixXd>& design,
                        const Eigen::Ref<const VectorXd>& target);

// Cyclic coordinate descent with exact scalar soft-threshold updates.
// beta is used as a warm start and overwritten.
FitDiagnostics solve_lasso_warm(const Eigen::Ref<const MatrixXd>& design,
                                const Eigen::Ref<const VectorXd>& target, double mu,
                                double tol, int max_iter, VectorXd& beta);

std::pair<VectorXd, FitDiagnostics> solve_lasso(const Eigen::Ref<const MatrixXd>& design,
                                                const Eigen::Ref<const VectorXd>& target,
                                                double mu, double tol = 1e-8,
                                                int max_iter = 50000);

double kkt_residual_lasso(const Eigen::Ref<const MatrixXd>& design,
                          const Eigen::Ref<const VectorXd>& target, double mu,
                          const VectorXd& beta);

// Lasso of Y on the fitted treatments; sigma0 from residuals against the
// observed X.
SecondStageFit fit_second_stage(const FirstStageFit& first_stage, const Dataset& dataset,
                                double mu, double tol = 1e-8, int max_iter = 50000);

constexpr double kLassoTol = 1e-8;
constexpr int kLassoMaxIter = 50000;

}  // namespace aiv
