#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aiv/core.hpp"
#include "aiv/group_lasso.hpp"
#include "aiv/splines.hpp"
#include "oracles.hpp"

using namespace aiv;

namespace {

struct Instance {
  MatrixXd u;
  VectorXd x;
  std::vector<int> offsets;
  int m;
};

Instance random_instance(int n, int q, int m, std::uint64_t seed) {
  SeededRng rng(seed, 0);
  Instance inst;
  inst.m = m;
  inst.u.resize(n, q * m);
  inst.x.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < q * m; ++c) inst.u(i, c) = rng.next_normal();
    inst.x(i) = rng.next_normal();
  }
  for (int j = 0; j < q; ++j) inst.offsets.push_back(j * m);
  return inst;
}

GroupLassoProblem problem_of(const Instance& inst, double lambda) {
  return GroupLassoProblem{inst.u, inst.x, lambda, inst.offsets, inst.m};
}

}  // namespace

TEST_CASE("lambda_max_group null threshold") {
  const Instance inst = random_instance(40, 3, 4, 1);
  CHECK(lambda_max_group(inst.u, VectorXd::Zero(40), inst.offsets, inst.m) == 0.0);

  const double lmax = lambda_max_group(inst.u, inst.x, inst.offsets, inst.m);
  // KKT certificate for zero: every block gradient within lambda
  const double n = 40.0;
  for (int off : inst.offsets) {
    CHECK((inst.u.middleCols(off, inst.m).transpose() * inst.x / n).norm() <= lmax + 1e-12);
  }

  auto [gamma, diag] = solve_group_lasso(problem_of(inst, lmax * 1.001), 1e-9, 1000);
  CHECK(diag.converged);
  CHECK(gamma.lpNorm<Eigen::Infinity>() == 0.0);  // exactly zero, not just small

  auto [gamma_below, diag_below] = solve_group_lasso(problem_of(inst, lmax * 0.999), 1e-9, 5000);
  CHECK(diag_below.converged);
  CHECK(gamma_below.lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("single orthonormal-scaled group has a closed form") {
  // Build U with U'U/n = I via QR.
  SeededRng rng(2, 0);
  const int n = 50, m = 4;
  MatrixXd raw(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) raw(i, j) = rng.next_normal();
  }
  Eigen::HouseholderQR<MatrixXd> qr(raw);
  MatrixXd u = qr.householderQ() * MatrixXd::Identity(n, m) * std::sqrt(static_cast<double>(n));
  VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = rng.next_normal();

  const VectorXd g = u.transpose() * x / n;
  CHECK(lambda_max_group(u, x, {0}, m) == doctest::Approx(g.norm()).epsilon(1e-12));

  for (double lambda : {0.01, 0.5 * g.norm(), 2.0 * g.norm()}) {
    GroupLassoProblem prob{u, x, lambda, {0}, m};
    auto [gamma, diag] = solve_group_lasso(prob, 1e-10, 5000);
    CHECK(diag.converged);
    const double shrink = std::max(0.0, 1.0 - lambda / g.norm());
    CHECK((gamma - shrink * g).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("lambda 0 on a well-conditioned design gives least squares") {
  const Instance inst = random_instance(60, 3, 4, 3);
  auto [gamma, diag] = solve_group_lasso(problem_of(inst, 0.0), 1e-10, 20000);
  CHECK(diag.converged);
  const VectorXd ls = inst.u.colPivHouseholderQr().solve(inst.x);
  CHECK((gamma - ls).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("objective matches the long-run subgradient oracle") {
  for (std::uint64_t seed : {10, 11, 12}) {
    const Instance inst = random_instance(40, 3, 4, seed);
    const double lmax = lambda_max_group(inst.u, inst.x, inst.offsets, inst.m);
    const double lambda = 0.3 * lmax;
    auto [gamma, diag] = solve_group_lasso(problem_of(inst, lambda), 1e-10, 50000);
    REQUIRE(diag.converged);
    const double obj = oracle::group_objective(inst.u, inst.x, lambda, inst.offsets, inst.m, gamma);
    const double oracle_obj =
        oracle::group_lasso_subgradient(inst.u, inst.x, lambda, inst.offsets, inst.m, 1000000);
    CHECK(std::abs(obj - oracle_obj) <= 1e-5 * std::max(1.0, std::abs(oracle_obj)));
    CHECK(obj <= oracle_obj + 1e-9);  // ours cannot be worse than a feasible point
  }
}

TEST_CASE("KKT certificate and active-block stationarity hold at the solution") {
  const Instance inst = random_instance(50, 4, 3, 21);
  const double lambda = 0.2 * lambda_max_group(inst.u, inst.x, inst.offsets, inst.m);
  const double tol = 1e-8;
  auto [gamma, diag] = solve_group_lasso(problem_of(inst, lambda), tol, 50000);
  REQUIRE(diag.converged);
  CHECK(diag.kkt_residual <= tol);
  CHECK(kkt_residual_group(inst.u, inst.x, inst.offsets, inst.m, lambda, gamma) <= tol);

  const VectorXd r = inst.x - inst.u * gamma;
  for (int off : inst.offsets) {
    if (gamma.segment(off, inst.m).squaredNorm() > 0.0) {
      const double grad_norm = (inst.u.middleCols(off, inst.m).transpose() * r / 50.0).norm();
      CHECK(std::abs(grad_norm - lambda) <= tol * 10);
    }
  }
}

TEST_CASE("permuting instrument blocks permutes the solution") {
  const Instance inst = random_instance(45, 3, 4, 33);
  const double lambda = 0.15 * lambda_max_group(inst.u, inst.x, inst.offsets, inst.m);
  auto [gamma, diag] = solve_group_lasso(problem_of(inst, lambda), 1e-10, 50000);
  REQUIRE(diag.converged);

  // swap blocks 0 and 2
  Instance swapped = inst;
  swapped.u.middleCols(0, inst.m) = inst.u.middleCols(2 * inst.m, inst.m);
  swapped.u.middleCols(2 * inst.m, inst.m) = inst.u.middleCols(0, inst.m);
  auto [gamma2, diag2] = solve_group_lasso(problem_of(swapped, lambda), 1e-10, 50000);
  REQUIRE(diag2.converged);
  CHECK((gamma2.segment(0, inst.m) - gamma.segment(2 * inst.m, inst.m)).lpNorm<Eigen::Infinity>() <
        1e-7);
  CHECK((gamma2.segment(2 * inst.m, inst.m) - gamma.segment(0, inst.m)).lpNorm<Eigen::Infinity>() <
        1e-7);
  CHECK((gamma2.segment(inst.m, inst.m) - gamma.segment(inst.m, inst.m)).lpNorm<Eigen::Infinity>() <
        1e-7);
}

TEST_CASE("iteration cap flags non-convergence without failing") {
  const Instance inst = random_instance(50, 4, 3, 77);
  const double lambda = 1e-6 * lambda_max_group(inst.u, inst.x, inst.offsets, inst.m);
  auto [gamma, diag] = solve_group_lasso(problem_of(inst, lambda), 1e-14, 3);
  CHECK(!diag.converged);
  CHECK(gamma.allFinite());
  CHECK(diag.kkt_residual > 0.0);
}

TEST_CASE("fit_first_stage composes per-treatment solves and tracks actives") {
  SeededRng rng(7, 0);
  const int n = 120, q = 4, p = 3;
  MatrixXd z(n, q), x(n, p);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < q; ++j) z(i, j) = rng.next_normal();
    y(i) = rng.next_normal();
  }
  // x1 driven by instrument 0, x2 by instrument 2, x3 pure noise
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 2.0 * z(i, 0) + 0.1 * rng.next_normal();
    x(i, 1) = z(i, 2) * z(i, 2) + 0.1 * rng.next_normal();
    x(i, 2) = rng.next_normal();
  }
  const Dataset data = load_dataset(y, x, z);
  const SplineDesign design = build_design(data, 2, 4);

  VectorXd lambdas(p);
  lambdas << 0.05, 0.05, 10.0;
  const FirstStageFit fit = fit_first_stage(design, data, lambdas, 1e-7, 10000, 2);

  CHECK((fit.x_hat - design.u * fit.gamma_hat).lpNorm<Eigen::Infinity>() < 1e-10);
  // group j inactive <=> zero block
  for (int l = 0; l < p; ++l) {
    for (int j = 0; j < q; ++j) {
      const bool active = fit.gamma_hat.col(l)
                              .segment(design.group_offsets[j], design.m())
                              .squaredNorm() > 0.0;
      const bool listed = std::find(fit.active_groups[l].begin(), fit.active_groups[l].end(), j) !=
                          fit.active_groups[l].end();
      CHECK(active == listed);
    }
  }
  // heavy penalty silences the pure-noise treatment entirely
  CHECK(fit.active_groups[2].empty());
  CHECK(fit.x_hat.col(2).lpNorm<Eigen::Infinity>() == 0.0);

  // single treatment reduces to solve_group_lasso on that column
  GroupLassoProblem prob{design.u, data.x.col(0), lambdas(0), design.group_offsets, design.m()};
  auto [gamma_single, diag_single] = solve_group_lasso(prob, 1e-7, 10000);
  CHECK((gamma_single - fit.gamma_hat.col(0)).lpNorm<Eigen::Infinity>() < 1e-9);

  // parallel equals sequential
  const FirstStageFit fit_seq = fit_first_stage(design, data, lambdas, 1e-7, 10000, 1);
  CHECK((fit_seq.gamma_hat - fit.gamma_hat).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("noiseless linear signal is screened reliably") {
  int hits = 0;
  const int runs = 20;
  for (int rep = 0; rep < runs; ++rep) {
    SeededRng rng(100 + rep, 0);
    const int n = 400, q = 6;
    MatrixXd z(n, q), x(n, 1);
    VectorXd y = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < q; ++j) z(i, j) = rng.next_normal();
    }
    for (int i = 0; i < n; ++i) x(i, 0) = 1.5 * z(i, 1) + 0.9 * z(i, 4);
    y(0) = 1.0;
    const Dataset data = load_dataset(y, x, z);
    const SplineDesign design = build_design(data, 2, 4);
    VectorXd lambdas(1);
    lambdas << 0.02;
    const FirstStageFit fit = fit_first_stage(design, data, lambdas, 1e-6, 5000, 1);
    const auto& act = fit.active_groups[0];
    const bool has1 = std::find(act.begin(), act.end(), 1) != act.end();
    const bool has4 = std::find(act.begin(), act.end(), 4) != act.end();
    if (has1 && has4) ++hits;
  }
  CHECK(hits >= 19);  // >= 95% of runs
}
