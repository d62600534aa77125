#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aiv/core.hpp"
#include "aiv/precision.hpp"
#include "aiv/simplex.hpp"
#include "oracles.hpp"

using namespace aiv;

TEST_CASE("simplex solves a textbook LP") {
  // max x + y s.t. x + 2y <= 4, 3x + y <= 6  ->  min -(x+y)
  MatrixXd a(2, 2);
  a << 1, 2, 3, 1;
  VectorXd b(2);
  b << 4, 6;
  VectorXd c(2);
  c << -1, -1;
  const LpResult res = solve_lp_inequality(a, b, c);
  REQUIRE(res.status == LpStatus::Optimal);
  CHECK(res.x(0) == doctest::Approx(1.6));
  CHECK(res.x(1) == doctest::Approx(1.2));
  CHECK(res.objective == doctest::Approx(-2.8));
}

TEST_CASE("simplex detects infeasible and unbounded problems") {
  MatrixXd a(2, 1);
  a << 1, -1;
  VectorXd b(2);
  b << 1, -3;  // x <= 1 and x >= 3
  VectorXd c(1);
  c << 1;
  CHECK(solve_lp_inequality(a, b, c).status == LpStatus::Infeasible);

  MatrixXd a2(1, 2);
  a2 << 1, -1;
  VectorXd b2(1);
  b2 << 1;
  VectorXd c2(2);
  c2 << -1, -1;  // maximize x+y with x - y <= 1: unbounded
  CHECK(solve_lp_inequality(a2, b2, c2).status == LpStatus::Unbounded);
}

TEST_CASE("simplex matches basic-solution enumeration on random LPs") {
  SeededRng rng(31, 0);
  for (int rep = 0; rep < 30; ++rep) {
    const int m = 3 + static_cast<int>(rng.next_u64() % 3);
    const int n = 2 + static_cast<int>(rng.next_u64() % 3);
    MatrixXd a(m, n);
    VectorXd b(m), c(n);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) a(i, j) = rng.next_normal();
      b(i) = rng.next_normal() + 1.0;
    }
    for (int j = 0; j < n; ++j) c(j) = std::abs(rng.next_normal()) + 0.1;
    const LpResult res = solve_lp_inequality(a, b, c);
    const double brute = oracle::lp_basic_enumeration(a, b, c);
    if (res.status == LpStatus::Optimal) {
      REQUIRE(std::isfinite(brute));
      CHECK(res.objective == doctest::Approx(brute).epsilon(1e-8));
    } else if (res.status == LpStatus::Infeasible) {
      CHECK(!std::isfinite(brute));
    }
  }
}

TEST_CASE("identity sigma has the analytic CLIME solution") {
  const MatrixXd sigma = MatrixXd::Identity(4, 4);
  for (int ell = 0; ell < 4; ++ell) {
    auto [theta, feasible] = solve_clime_row(sigma, ell, 0.1);
    REQUIRE(feasible);
    for (int i = 0; i < 4; ++i) {
      CHECK(theta(i) == doctest::Approx(i == ell ? 0.9 : 0.0).epsilon(1e-9));
    }
  }
  // upsilon >= 1 makes zero feasible and optimal
  auto [theta0, ok] = solve_clime_row(sigma, 2, 1.0);
  REQUIRE(ok);
  CHECK(theta0.lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("diagonal sigma scales rows as (1-upsilon)/d") {
  VectorXd d(3);
  d << 0.5, 2.0, 4.0;
  const MatrixXd sigma = d.asDiagonal();
  const double upsilon = 0.3;
  const PrecisionEstimate est = estimate_precision(sigma, upsilon, 2);
  REQUIRE(est.all_feasible());
  for (int ell = 0; ell < 3; ++ell) {
    for (int i = 0; i < 3; ++i) {
      const double expect = i == ell ? (1.0 - upsilon) / d(ell) : 0.0;
      CHECK(est.theta_rows(ell, i) == doctest::Approx(expect).epsilon(1e-9));
    }
  }
}

TEST_CASE("CLIME rows match vertex enumeration on small SPD matrices") {
  SeededRng rng(32, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const int p = 3 + static_cast<int>(rng.next_u64() % 2);
    MatrixXd a(p, p);
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < p; ++j) a(i, j) = rng.next_normal();
    }
    const MatrixXd sigma = a * a.transpose() / p + 0.5 * MatrixXd::Identity(p, p);
    const double upsilon = 0.05;
    for (int ell = 0; ell < p; ++ell) {
      auto [theta, feasible] = solve_clime_row(sigma, ell, upsilon);
      const double brute = oracle::clime_vertex_enumeration(sigma, ell, upsilon);
      if (feasible) {
        REQUIRE(std::isfinite(brute));
        CHECK(theta.lpNorm<1>() == doctest::Approx(brute).epsilon(1e-7));
      } else {
        CHECK(!std::isfinite(brute));
      }
    }
  }
}

TEST_CASE("constraint satisfaction within upsilon plus slack") {
  SeededRng rng(33, 0);
  const int p = 5;
  MatrixXd a(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) a(i, j) = rng.next_normal();
  }
  const MatrixXd sigma = a * a.transpose() / p + 0.2 * MatrixXd::Identity(p, p);
  const double upsilon = 0.07;
  const PrecisionEstimate est = estimate_precision(sigma, upsilon, 1);
  for (int ell = 0; ell < p; ++ell) {
    if (!est.feasibility_flags[ell]) continue;
    VectorXd defect = sigma * est.theta_rows.row(ell).transpose();
    defect(ell) -= 1.0;
    CHECK(defect.lpNorm<Eigen::Infinity>() <= upsilon + 1e-9);
  }
  CHECK(precision_defect(sigma, est.theta_rows) <= upsilon + 1e-9);
}

TEST_CASE("LP rescaling identity solve(c sigma, u) = solve(sigma, u)/c") {
  // Substituting theta = phi/c in ||c Sigma theta - e|| <= u leaves the
  // tolerance unchanged and divides the solution by c.
  SeededRng rng(34, 0);
  const int p = 4;
  MatrixXd a(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) a(i, j) = rng.next_normal();
  }
  const MatrixXd sigma = a * a.transpose() / p + 0.4 * MatrixXd::Identity(p, p);
  const double c = 2.7;
  const double upsilon = 0.12;
  for (int ell = 0; ell < p; ++ell) {
    auto [theta_scaled, ok1] = solve_clime_row(c * sigma, ell, upsilon);
    auto [theta_base, ok2] = solve_clime_row(sigma, ell, upsilon);
    REQUIRE(ok1 == ok2);
    if (ok1) {
      CHECK((theta_scaled - theta_base / c).lpNorm<Eigen::Infinity>() < 1e-8);
    }
  }
}

TEST_CASE("select_upsilon returns the smallest workable grid point") {
  const MatrixXd identity = MatrixXd::Identity(3, 3);
  CHECK(select_upsilon(identity, {0.05, 0.1}) == doctest::Approx(0.05));

  // removing the winner moves the answer to the next feasible point
  SeededRng rng(35, 0);
  MatrixXd a(4, 4);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) a(i, j) = rng.next_normal();
  }
  const MatrixXd sigma = a * a.transpose() / 4 + 0.3 * MatrixXd::Identity(4, 4);
  const std::vector<double> grid = {0.01, 0.05, 0.2, 0.6};
  const double chosen = select_upsilon(sigma, grid);
  std::vector<double> without;
  for (double g : grid) {
    if (g != chosen) without.push_back(g);
  }
  const double next = select_upsilon(sigma, without);
  CHECK(next > chosen);

  // exhaustive check: every grid point below the winner is infeasible for
  // some row or fails the defect condition
  for (double g : grid) {
    if (g >= chosen) break;
    const PrecisionEstimate est = estimate_precision(sigma, g, 1);
    const bool works = est.all_feasible() && precision_defect(sigma, est.theta_rows) <= g + 1e-9;
    CHECK(!works);
  }
}

TEST_CASE("rank-deficient sigma needs a large upsilon but stays within contract") {
  MatrixXd sigma = MatrixXd::Zero(3, 3);
  sigma(0, 0) = 1.0;
  sigma(1, 1) = 1.0;  // third row/col identically zero
  const std::vector<double> grid = {0.1, 0.5, 1.05};
  const double upsilon = select_upsilon(sigma, grid);
  CHECK(upsilon == doctest::Approx(1.05));
  const PrecisionEstimate est = estimate_precision(sigma, upsilon, 1);
  CHECK(est.all_feasible());
  CHECK(precision_defect(sigma, est.theta_rows) <= upsilon + 1e-9);

  CHECK_THROWS_AS(select_upsilon(sigma, {0.1, 0.5}), NoFeasibleUpsilon);
}

TEST_CASE("sample_sigma_f equals the triple product and is symmetric") {
  SeededRng rng(36, 0);
  const int n = 30, qm = 8, p = 4;
  MatrixXd u(n, qm);
  MatrixXd gamma(qm, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < qm; ++j) u(i, j) = rng.next_normal();
  }
  for (int i = 0; i < qm; ++i) {
    for (int j = 0; j < p; ++j) gamma(i, j) = rng.next_normal();
  }
  FirstStageFit fit;
  fit.gamma_hat = gamma;
  fit.x_hat = u * gamma;
  const MatrixXd sigma = sample_sigma_f(fit);
  const MatrixXd direct = gamma.transpose() * (u.transpose() * u) * gamma / n;
  CHECK((sigma - direct).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK((sigma - sigma.transpose()).lpNorm<Eigen::Infinity>() < 1e-12);

  FirstStageFit zero;
  zero.x_hat = MatrixXd::Zero(n, p);
  CHECK(sample_sigma_f(zero).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("determinism: identical inputs give identical precision output") {
  SeededRng rng(37, 0);
  const int p = 5;
  MatrixXd a(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) a(i, j) = rng.next_normal();
  }
  const MatrixXd sigma = a * a.transpose() / p + 0.3 * MatrixXd::Identity(p, p);
  const PrecisionEstimate e1 = estimate_precision(sigma, 0.08, 1);
  const PrecisionEstimate e2 = estimate_precision(sigma, 0.08, 4);
  CHECK((e1.theta_rows - e2.theta_rows).lpNorm<Eigen::Infinity>() == 0.0);
}
