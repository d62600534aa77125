#include "aiv/inference.hpp"

#include <cmath>

namespace aiv {

VectorXd debias(const VectorXd& beta_hat, const PrecisionEstimate& precision,
                const FirstStageFit& first_stage, const Dataset& dataset) {
  const Eigen::Index p = dataset.p();
  if (beta_hat.size() != p || precision.theta_rows.rows() != p ||
      first_stage.x_hat.cols() != p) {
    throw InvalidInput("debias: inconsistent dimensions across pipeline artifacts");
  }
  const double n = static_cast<double>(dataset.n());
  const VectorXd resid = dataset.y - dataset.x * beta_hat;
  const VectorXd moment = first_stage.x_hat.transpose() * resid / n;
  return beta_hat + precision.theta_rows * moment;
}

OmegaHat omega_hat(const PrecisionEstimate& precision, double sigma0_hat) {
  const Eigen::Index p = precision.theta_rows.rows();
  OmegaHat out;
  out.values.resize(p);
  for (Eigen::Index l = 0; l < p; ++l) {
    const double quad = precision.theta_rows.row(l) * precision.sigma_hat_f *
                        precision.theta_rows.row(l).transpose();
    if (quad < 0.0) {
      ++out.clamped;
      out.values(l) = 0.0;
    } else {
      out.values(l) = sigma0_hat * std::sqrt(quad);
    }
  }
  return out;
}

InferenceResult confidence_intervals(const VectorXd& beta_tilde, const OmegaHat& omega,
                                     Eigen::Index n, double alpha, double sigma0_hat) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0,1)");
  if (beta_tilde.size() != omega.values.size()) {
    throw InvalidInput("beta_tilde and omega_hat lengths differ");
  }
  const double z = standard_normal_quantile(alpha);
  const double scale = z / std::sqrt(static_cast<double>(n));
  InferenceResult res;
  res.beta_tilde = beta_tilde;
  res.omega_hat = omega.values;
  res.ci_lower = beta_tilde - scale * omega.values;
  res.ci_upper = beta_tilde + scale * omega.values;
  res.alpha = alpha;
  res.sigma0_hat = sigma0_hat;
  res.clamped_variances = omega.clamped;
  return res;
}

DecompositionCheck decomposition_check(const Dataset& dataset, const FirstStageFit& first_stage,
                                       const VectorXd& beta_hat, const PrecisionEstimate& precision,
                                       const VectorXd& beta_tilde, const VectorXd& true_beta,
                                       const VectorXd& true_eta, const MatrixXd& true_d,
                                       const MatrixXd& true_omega) {
  const double n = static_cast<double>(dataset.n());
  const double sqrt_n = std::sqrt(n);
  const MatrixXd& omega_est = precision.theta_rows;
  const MatrixXd& d_est = first_stage.x_hat;

  const VectorXd r1 = (omega_est - true_omega) * (true_d.transpose() * true_eta) / sqrt_n;
  const VectorXd r2 = omega_est * ((d_est - true_d).transpose() * true_eta) / sqrt_n;
  const VectorXd delta = true_beta - beta_hat;
  const VectorXd r3 =
      omega_est * (d_est.transpose() * ((dataset.x - d_est) * delta)) / sqrt_n;
  const VectorXd r4 =
      sqrt_n * (omega_est * (precision.sigma_hat_f * delta) - delta);

  const VectorXd lead = true_omega * (true_d.transpose() * true_eta) / sqrt_n;
  const VectorXd lhs = sqrt_n * (beta_tilde - true_beta);
  const double gap = (lhs - lead - r1 - r2 - r3 - r4).lpNorm<Eigen::Infinity>();
  if (gap > 1e-8) {
    throw std::logic_error("debiasing decomposition identity violated (gap " +
                           std::to_string(gap) + "); implementation bug");
  }
  DecompositionCheck out;
  out.remainder_sup = {r1.lpNorm<Eigen::Infinity>(), r2.lpNorm<Eigen::Infinity>(),
                       r3.lpNorm<Eigen::Infinity>(), r4.lpNorm<Eigen::Infinity>()};
  out.identity_gap = gap;
  return out;
}

}  // namespace aiv
