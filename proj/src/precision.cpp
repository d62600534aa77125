#include "aiv/precision.hpp"

#include <cmath>

#include "aiv/parallel.hpp"
#include "aiv/simplex.hpp"

namespace aiv {

MatrixXd sample_sigma_f(const FirstStageFit& first_stage) {
  const double n = static_cast<double>(first_stage.x_hat.rows());
  MatrixXd s = first_stage.x_hat.transpose() * first_stage.x_hat / n;
  return 0.5 * (s + s.transpose());
}

std::pair<VectorXd, bool> solve_clime_row(const MatrixXd& sigma, int ell, double upsilon) {
  const int p = static_cast<int>(sigma.rows());
  if (sigma.cols() != p) throw InvalidInput("sigma must be square");
  if (ell < 0 || ell >= p) throw InvalidInput("row index out of range");
  if (!(upsilon > 0.0)) throw InvalidInput("upsilon must be > 0");

  // Solve in units of sigma/s (max entry 1) to keep the tableau well scaled;
  // the constraint set is unchanged since (sigma/s)(s theta) = sigma theta.
  const double scale = std::max(sigma.cwiseAbs().maxCoeff(), 1e-300);
  const MatrixXd sigma_n = sigma / scale;

  // Split theta = theta_plus - theta_minus; the box constraint becomes two
  // banks of p inequalities.
  MatrixXd a_ub(2 * p, 2 * p);
  a_ub.topLeftCorner(p, p) = sigma_n;
  a_ub.topRightCorner(p, p) = -sigma_n;
  a_ub.bottomLeftCorner(p, p) = -sigma_n;
  a_ub.bottomRightCorner(p, p) = sigma_n;
  VectorXd b_ub(2 * p);
  for (int i = 0; i < p; ++i) {
    const double e = i == ell ? 1.0 : 0.0;
    b_ub(i) = e + upsilon;
    b_ub(p + i) = upsilon - e;
  }
  const VectorXd c = VectorXd::Ones(2 * p);

  const LpResult lp = solve_lp_inequality(a_ub, b_ub, c);
  if (lp.status == LpStatus::IterationLimit) {
    throw SolverError("simplex iteration cap hit on precision row " + std::to_string(ell));
  }
  if (lp.status != LpStatus::Optimal) {
    return {VectorXd::Zero(p), false};
  }
  VectorXd theta = (lp.x.head(p) - lp.x.tail(p)) / scale;
  VectorXd defect = sigma * theta;
  defect(ell) -= 1.0;
  // The verification itself rounds: |fl(sigma theta) - sigma theta| is of
  // order p * eps * |sigma||theta|, which dwarfs 1e-9 for ill-conditioned
  // rows whose minimal theta is huge.
  const double eval_noise = 1e-13 * (sigma.cwiseAbs() * theta.cwiseAbs()).maxCoeff();
  if (defect.lpNorm<Eigen::Infinity>() > upsilon + 1e-9 + eval_noise) {
    throw SolverError("simplex returned an out-of-tolerance point on precision row " +
                      std::to_string(ell));
  }
  return {theta, true};
}

PrecisionEstimate estimate_precision(const MatrixXd& sigma, double upsilon, int threads) {
  const int p = static_cast<int>(sigma.rows());
  PrecisionEstimate est;
  est.upsilon = upsilon;
  est.sigma_hat_f = sigma;
  est.theta_rows = MatrixXd::Zero(p, p);
  est.feasibility_flags.assign(p, false);
  std::vector<std::uint8_t> flags(p, 0);
  parallel_for(p, threads, [&](int ell) {
    auto [theta, feasible] = solve_clime_row(sigma, ell, upsilon);
    est.theta_rows.row(ell) = theta.transpose();
    flags[ell] = feasible ? 1 : 0;
  });
  for (int ell = 0; ell < p; ++ell) est.feasibility_flags[ell] = flags[ell] != 0;
  return est;
}

double precision_defect(const MatrixXd& sigma, const MatrixXd& theta_rows) {
  MatrixXd d = theta_rows * sigma.transpose();  // row l = (sigma theta_l)'
  d.diagonal().array() -= 1.0;
  return d.cwiseAbs().maxCoeff();
}

std::vector<double> default_upsilon_grid(const MatrixXd& sigma, int points) {
  if (points < 2) throw InvalidInput("upsilon grid needs at least 2 points");
  const double scale = sigma.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) throw InvalidInput("sigma is identically zero; no usable upsilon grid");
  // Tolerances of 1 and above admit theta = 0, so the useful range always
  // sits below ||e_l||_inf = 1 regardless of sigma's scale.
  const double top = std::min(scale, 0.999);
  std::vector<double> grid(points);
  const double lo = std::log(0.01 * top);
  const double hi = std::log(top);
  for (int i = 0; i < points; ++i) {
    grid[i] = std::exp(lo + (hi - lo) * i / (points - 1));
  }
  return grid;
}

PrecisionEstimate estimate_precision_scaled(const MatrixXd& sigma, int threads) {
  const int p = static_cast<int>(sigma.rows());
  VectorXd d(p);
  for (int l = 0; l < p; ++l) {
    const double v = sigma(l, l);
    if (!(v > 0.0)) {
      throw NoFeasibleUpsilon("sigma has a non-positive diagonal entry at " + std::to_string(l) +
                              "; the precision program is degenerate");
    }
    d(l) = std::sqrt(v);
  }
  MatrixXd corr = d.cwiseInverse().asDiagonal() * sigma * d.cwiseInverse().asDiagonal();
  corr = 0.5 * (corr + corr.transpose());
  const double upsilon = select_upsilon(corr, default_upsilon_grid(corr), threads);
  PrecisionEstimate est = estimate_precision(corr, upsilon, threads);
  for (int l = 0; l < p; ++l) {
    est.theta_rows.row(l) =
        (est.theta_rows.row(l).transpose().cwiseQuotient(d) / d(l)).transpose();
  }
  est.sigma_hat_f = sigma;
  return est;
}

double select_upsilon(const MatrixXd& sigma, const std::vector<double>& grid, int threads) {
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] <= grid[i - 1]) throw InvalidInput("upsilon grid must be strictly ascending");
  }
  const int p = static_cast<int>(sigma.rows());
  for (double upsilon : grid) {
    if (!(upsilon > 0.0)) throw InvalidInput("upsilon grid must be positive");
    auto defect_ok = [&](const MatrixXd& rows) {
      const double eval_noise =
          1e-13 * (rows.cwiseAbs() * sigma.cwiseAbs()).maxCoeff();
      return precision_defect(sigma, rows) <= upsilon + 1e-9 + eval_noise;
    };
    if (threads > 1) {
      PrecisionEstimate est = estimate_precision(sigma, upsilon, threads);
      if (!est.all_feasible()) continue;
      if (defect_ok(est.theta_rows)) return upsilon;
    } else {
      // Sequential scan so an infeasible row aborts the grid point early.
      MatrixXd rows(p, p);
      bool all_ok = true;
      for (int ell = 0; ell < p; ++ell) {
        auto [theta, feasible] = solve_clime_row(sigma, ell, upsilon);
        if (!feasible) {
          all_ok = false;
          break;
        }
        rows.row(ell) = theta.transpose();
      }
      if (all_ok && defect_ok(rows)) return upsilon;
    }
  }
  throw NoFeasibleUpsilon("no feasible upsilon on the grid; extend it upward (largest tried: " +
                          std::to_string(grid.empty() ? 0.0 : grid.back()) + ")");
}

}  // namespace aiv
