#include "aiv/lasso.hpp"

#include <cmath>

namespace aiv {

namespace {

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

}  // namespace

double lambda_max_lasso(const Eigen::Ref<const MatrixXd>& design,
                        const Eigen::Ref<const VectorXd>& target) {
  const double n = static_cast<double>(design.rows());
  return (design.transpose() * target).lpNorm<Eigen::Infinity>() / n;
}

FitDiagnostics solve_lasso_warm(const Eigen::Ref<const MatrixXd>& design,
                                const Eigen::Ref<const VectorXd>& target, double mu,
                                double tol, int max_iter, VectorXd& beta) {
  if (mu < 0.0) throw InvalidInput("mu must be >= 0");
  if (tol <= 0.0) throw InvalidInput("tol must be > 0");
  const Eigen::Index p = design.cols();
  const double n = static_cast<double>(design.rows());
  if (beta.size() != p) beta = VectorXd::Zero(p);

  VectorXd col_sq_n(p);
  for (Eigen::Index l = 0; l < p; ++l) col_sq_n(l) = design.col(l).squaredNorm() / n;

  VectorXd r = target - design * beta;

  auto kkt = [&]() {
    double worst = 0.0;
    for (Eigen::Index l = 0; l < p; ++l) {
      const double grad = design.col(l).dot(r) / n;
      double viol;
      if (beta(l) != 0.0) {
        viol = std::abs(grad - mu * (beta(l) > 0.0 ? 1.0 : -1.0));
      } else {
        viol = std::max(0.0, std::abs(grad) - mu);
      }
      worst = std::max(worst, viol);
    }
    return worst;
  };

  const double target_kkt = 0.9 * tol;
  FitDiagnostics diag;
  int sweeps = 0;
  double res = kkt();
  while (sweeps < max_iter && res > target_kkt) {
    for (Eigen::Index l = 0; l < p; ++l) {
      if (col_sq_n(l) <= 0.0) continue;  // dead column stays at zero
      const double old = beta(l);
      const double rho = design.col(l).dot(r) / n + col_sq_n(l) * old;
      const double next = soft_threshold(rho, mu) / col_sq_n(l);
      if (next != old) {
        r.noalias() -= design.col(l) * (next - old);
        beta(l) = next;
      }
    }
    ++sweeps;
    res = kkt();
  }

  diag.iterations = sweeps;
  diag.kkt_residual = res;
  diag.converged = res <= tol;
  diag.final_objective = r.squaredNorm() / (2.0 * n) + mu * beta.lpNorm<1>();
  return diag;
}

std::pair<VectorXd, FitDiagnostics> solve_lasso(const Eigen::Ref<const MatrixXd>& design,
                                                const Eigen::Ref<const VectorXd>& target,
                                                double mu, double tol, int max_iter) {
  VectorXd beta = VectorXd::Zero(design.cols());
  FitDiagnostics diag = solve_lasso_warm(design, target, mu, tol, max_iter, beta);
  return {beta, diag};
}

double kkt_residual_lasso(const Eigen::Ref<const MatrixXd>& design,
                          const Eigen::Ref<const VectorXd>& target, double mu,
                          const VectorXd& beta) {
  const double n = static_cast<double>(design.rows());
  const VectorXd r = target - design * beta;
  double worst = 0.0;
  for (Eigen::Index l = 0; l < design.cols(); ++l) {
    const double grad = design.col(l).dot(r) / n;
    double viol;
    if (beta(l) != 0.0) {
      viol = std::abs(grad - mu * (beta(l) > 0.0 ? 1.0 : -1.0));
    } else {
      viol = std::max(0.0, std::abs(grad) - mu);
    }
    worst = std::max(worst, viol);
  }
  return worst;
}

SecondStageFit fit_second_stage(const FirstStageFit& first_stage, const Dataset& dataset,
                                double mu, double tol, int max_iter) {
  if (first_stage.x_hat.rows() != dataset.n() || first_stage.x_hat.cols() != dataset.p()) {
    throw InvalidInput("first-stage fitted treatments do not match the dataset shape");
  }
  SecondStageFit fit;
  fit.mu = mu;
  auto [beta, diag] = solve_lasso(first_stage.x_hat, dataset.y, mu, tol, max_iter);
  fit.beta_hat = std::move(beta);
  fit.diagnostics = diag;
  for (Eigen::Index l = 0; l < fit.beta_hat.size(); ++l) {
    if (fit.beta_hat(l) != 0.0) fit.active_set.push_back(static_cast<int>(l));
  }
  const VectorXd resid = dataset.y - dataset.x * fit.beta_hat;
  fit.sigma0_hat = resid.norm() / std::sqrt(static_cast<double>(dataset.n()));
  return fit;
}

}  // namespace aiv
