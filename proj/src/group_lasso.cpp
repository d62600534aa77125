#include "aiv/group_lasso.hpp"

#include <cassert>
#include <cmath>

#include "aiv/parallel.hpp"

namespace aiv {

namespace {

// Largest eigenvalue of a symmetric PSD block by power iteration.
double power_iteration_max_eig(const MatrixXd& a) {
  const int m = static_cast<int>(a.rows());
  VectorXd v = VectorXd::Constant(m, 1.0 / std::sqrt(static_cast<double>(m)));
  double eig = 0.0;
  for (int it = 0; it < 200; ++it) {
    VectorXd w = a * v;
    const double norm = w.norm();
    if (norm <= 0.0) return 0.0;
    w /= norm;
    const double next = w.dot(a * w);
    const bool settled = std::abs(next - eig) <= 1e-12 * std::max(1.0, next);
    eig = next;
    v = w;
    if (settled) break;
  }
  return eig;
}

}  // namespace

GroupGram make_group_gram(const MatrixXd& u, const std::vector<int>& offsets, int group_size) {
  GroupGram gram;
  gram.offsets = offsets;
  gram.group_size = group_size;
  gram.n = u.rows();
  gram.g.noalias() = u.transpose() * u / static_cast<double>(u.rows());
  gram.block_step.resize(offsets.size());
  for (std::size_t j = 0; j < offsets.size(); ++j) {
    const double t = power_iteration_max_eig(gram.g.block(offsets[j], offsets[j], group_size, group_size));
    gram.block_step[j] = std::max(t, 1e-12);
  }
  return gram;
}

double lambda_max_group(const Eigen::Ref<const MatrixXd>& u,
                        const Eigen::Ref<const VectorXd>& target,
                        const std::vector<int>& offsets, int group_size) {
  const double n = static_cast<double>(u.rows());
  double best = 0.0;
  for (int off : offsets) {
    best = std::max(best, (u.middleCols(off, group_size).transpose() * target).norm() / n);
  }
  return best;
}

namespace {

struct BlockState {
  VectorXd gv;  // G * gamma, kept in sync with gamma
};

// One pass over the given blocks; returns max block change (sup of ||delta||_inf).
double sweep_blocks(const GroupGram& gram, const VectorXd& h, double lambda, VectorXd& gamma,
                    VectorXd& gv, const std::vector<int>& blocks) {
  const int m = gram.group_size;
  double max_change = 0.0;
  for (int j : blocks) {
    const int off = gram.offsets[j];
    const double t = gram.block_step[j];
    VectorXd gamma_j = gamma.segment(off, m);
    // Gradient step on the smooth part, then group soft-threshold.
    VectorXd step = gamma_j + (h.segment(off, m) - gv.segment(off, m)) / t;
    const double norm = step.norm();
    VectorXd next;
    if (norm > lambda / t) {
      next = (1.0 - lambda / (t * norm)) * step;
    } else {
      next = VectorXd::Zero(m);
    }
    VectorXd delta = next - gamma_j;
    const double change = delta.lpNorm<Eigen::Infinity>();
    if (change > 0.0) {
      gamma.segment(off, m) = next;
      gv.noalias() += gram.g.middleCols(off, m) * delta;
      max_change = std::max(max_change, change);
    }
  }
  return max_change;
}

// KKT violation from the gram representation: grad_j = h_j - (G gamma)_j.
// Cheap (O(qm)) since gv is maintained incrementally.
double kkt_blocks(const GroupGram& gram, const VectorXd& h, double lambda, const VectorXd& gamma,
                  const VectorXd& gv, const std::vector<int>& blocks) {
  const int m = gram.group_size;
  double worst = 0.0;
  for (int j : blocks) {
    const int off = gram.offsets[j];
    const VectorXd grad = h.segment(off, m) - gv.segment(off, m);
    const double gnorm = gamma.segment(off, m).norm();
    double viol;
    if (gnorm > 0.0) {
      viol = (grad - lambda * gamma.segment(off, m) / gnorm).norm();
    } else {
      viol = std::max(0.0, grad.norm() - lambda);
    }
    worst = std::max(worst, viol);
  }
  return worst;
}

}  // namespace

FitDiagnostics solve_group_lasso_gram(const GroupGram& gram, const VectorXd& h,
                                      double target_sq_n, double lambda, double tol,
                                      int max_iter, VectorXd& gamma) {
  if (lambda < 0.0) throw InvalidInput("lambda must be >= 0");
  if (tol <= 0.0) throw InvalidInput("tol must be > 0");
  const int q = gram.groups();
  const int m = gram.group_size;
  if (gamma.size() != static_cast<Eigen::Index>(q) * m) gamma = VectorXd::Zero(q * m);

  VectorXd gv = gram.g * gamma;
  std::vector<int> all_blocks(q);
  for (int j = 0; j < q; ++j) all_blocks[j] = j;

  // Stop slightly inside tol so independent recomputation still certifies.
  const double target = 0.9 * tol;
  FitDiagnostics diag;
  int sweeps = 0;
  double kkt = kkt_blocks(gram, h, lambda, gamma, gv, all_blocks);
#ifndef NDEBUG
  auto objective = [&]() {
    double pen = 0.0;
    for (int j = 0; j < q; ++j) pen += gamma.segment(gram.offsets[j], m).norm();
    return 0.5 * (target_sq_n - 2.0 * h.dot(gamma) + gamma.dot(gv)) + lambda * pen;
  };
  double prev_obj = objective();
#endif
  while (sweeps < max_iter && kkt > target) {
    sweep_blocks(gram, h, lambda, gamma, gv, all_blocks);
    ++sweeps;
#ifndef NDEBUG
    {
      const double obj = objective();
      assert(obj <= prev_obj + 1e-10 * std::max(1.0, std::abs(prev_obj)));
      prev_obj = obj;
    }
#endif
    // Work the active set until its own KKT residual clears, then re-check
    // all blocks.
    std::vector<int> active;
    for (int j = 0; j < q; ++j) {
      if (gamma.segment(gram.offsets[j], m).squaredNorm() > 0.0) active.push_back(j);
    }
    while (sweeps < max_iter && !active.empty()) {
      sweep_blocks(gram, h, lambda, gamma, gv, active);
      ++sweeps;
      if (kkt_blocks(gram, h, lambda, gamma, gv, active) <= target) break;
    }
    kkt = kkt_blocks(gram, h, lambda, gamma, gv, all_blocks);
  }

  diag.iterations = sweeps;
  diag.kkt_residual = kkt;
  diag.converged = kkt <= tol;
  diag.final_objective =
      0.5 * (target_sq_n - 2.0 * h.dot(gamma) + gamma.dot(gv));
  double penalty = 0.0;
  for (int j = 0; j < q; ++j) penalty += gamma.segment(gram.offsets[j], m).norm();
  diag.final_objective += lambda * penalty;
  return diag;
}

std::pair<VectorXd, FitDiagnostics> solve_group_lasso(const GroupLassoProblem& problem,
                                                      double tol, int max_iter) {
  const GroupGram gram = make_group_gram(problem.u, problem.group_offsets, problem.group_size);
  const double n = static_cast<double>(problem.u.rows());
  const VectorXd h = problem.u.transpose() * problem.target / n;
  const double target_sq_n = problem.target.squaredNorm() / n;
  VectorXd gamma = VectorXd::Zero(problem.u.cols());
  FitDiagnostics diag =
      solve_group_lasso_gram(gram, h, target_sq_n, problem.lambda, tol, max_iter, gamma);
  return {gamma, diag};
}

double kkt_residual_group(const Eigen::Ref<const MatrixXd>& u,
                          const Eigen::Ref<const VectorXd>& target,
                          const std::vector<int>& offsets, int group_size, double lambda,
                          const VectorXd& gamma) {
  const double n = static_cast<double>(u.rows());
  const VectorXd r = target - u * gamma;
  double worst = 0.0;
  for (int off : offsets) {
    const VectorXd grad = u.middleCols(off, group_size).transpose() * r / n;
    const double gnorm = gamma.segment(off, group_size).norm();
    double viol;
    if (gnorm > 0.0) {
      viol = (grad - lambda * gamma.segment(off, group_size) / gnorm).norm();
    } else {
      viol = std::max(0.0, grad.norm() - lambda);
    }
    worst = std::max(worst, viol);
  }
  return worst;
}

FirstStageFit fit_first_stage(const SplineDesign& design, const Dataset& dataset,
                              const VectorXd& lambdas, double tol, int max_iter, int threads) {
  const Eigen::Index p = dataset.p();
  if (lambdas.size() != p) {
    throw InvalidInput("need one lambda per treatment: got " + std::to_string(lambdas.size()) +
                       " for p = " + std::to_string(p));
  }
  const int m = design.m();
  const GroupGram gram = make_group_gram(design.u, design.group_offsets, m);

  FirstStageFit fit;
  fit.gamma_hat = MatrixXd::Zero(design.u.cols(), p);
  fit.lambdas = lambdas;
  fit.active_groups.resize(p);
  fit.diagnostics.resize(p);

  const double n = static_cast<double>(dataset.n());
  parallel_for(static_cast<int>(p), threads, [&](int l) {
    const VectorXd h = design.u.transpose() * dataset.x.col(l) / n;
    const double target_sq_n = dataset.x.col(l).squaredNorm() / n;
    VectorXd gamma = VectorXd::Zero(design.u.cols());
    fit.diagnostics[l] =
        solve_group_lasso_gram(gram, h, target_sq_n, lambdas(l), tol, max_iter, gamma);
    fit.gamma_hat.col(l) = gamma;
    for (int j = 0; j < design.q(); ++j) {
      if (gamma.segment(design.group_offsets[j], m).squaredNorm() > 0.0) {
        fit.active_groups[l].push_back(j);
      }
    }
  });
  fit.x_hat.noalias() = design.u * fit.gamma_hat;
  return fit;
}

}  // namespace aiv
