#pragma once

#include "aiv/core.hpp"
#include "aiv/group_lasso.hpp"
#include "aiv/lasso.hpp"
#include "aiv/precision.hpp"

namespace aiv {

struct InferenceResult {
  VectorXd beta_tilde;
  VectorXd omega_hat;
  VectorXd ci_lower;
  VectorXd ci_upper;
  double alpha = 0.05;
  double sigma0_hat = 0.0;
  int clamped_variances = 0;  // rows whose quadratic form was negative
};

// One-step update beta_hat + Omega_hat * X_hat' (Y - X beta_hat) / n.
// The residual uses the observed X; the correction direction uses X_hat.
VectorXd debias(const VectorXd& beta_hat, const PrecisionEstimate& precision,
                const FirstStageFit& first_stage, const Dataset& dataset);

struct OmegaHat {
  VectorXd values;
  int clamped = 0;
};

// omega_l = sigma0 * sqrt(theta_l' sigma_hat_f theta_l); negative quadratic
// forms (possible since precision rows are not PSD-projected) clamp to zero.
OmegaHat omega_hat(const PrecisionEstimate& precision, double sigma0_hat);

InferenceResult confidence_intervals(const VectorXd& beta_tilde, const OmegaHat& omega,
                                     Eigen::Index n, double alpha, double sigma0_hat);

// Remainder decomposition against DGP-supplied truths:
//   sqrt(n)(beta_tilde - beta) = Omega D' eta / sqrt(n) + R1 + R2 + R3 + R4.
// Returns the four sup norms; throws if the algebraic identity is violated.
struct DecompositionCheck {
  std::array<double, 4> remainder_sup;
  double identity_gap = 0.0;
};

DecompositionCheck decomposition_check(const Dataset& dataset, const FirstStageFit& first_stage,
                                       const VectorXd& beta_hat, const PrecisionEstimate& precision,
                                       const VectorXd& beta_tilde, const VectorXd& true_beta,
                                       const VectorXd& true_eta, const MatrixXd& true_d,
                                       const MatrixXd& true_omega);

}  // namespace aiv
