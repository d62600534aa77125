#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aiv/core.hpp"
#include "oracles.hpp"

using namespace aiv;

TEST_CASE("load_dataset centers y and x") {
  VectorXd y(2);
  y << 1.0, 3.0;
  MatrixXd x(2, 1);
  x << 2.0, 2.0;
  MatrixXd z(2, 1);
  z << 0.1, 0.9;
  const Dataset d = load_dataset(y, x, z);
  CHECK(d.y(0) == doctest::Approx(-1.0));
  CHECK(d.y(1) == doctest::Approx(1.0));
  CHECK(d.center_y == doctest::Approx(2.0));
  CHECK(d.x(0, 0) == 0.0);
  CHECK(d.x(1, 0) == 0.0);
  CHECK(d.z(0, 0) == 0.1);  // instruments untouched
}

TEST_CASE("load_dataset centering is exact and idempotent") {
  VectorXd y(3);
  y << 0.5, 1.5, 2.5;
  MatrixXd x(3, 2);
  x << 1.0, 4.0, 2.0, 5.0, 3.0, 9.0;
  MatrixXd z(3, 1);
  z << 0.0, 0.5, 1.0;
  const Dataset d = load_dataset(y, x, z);
  CHECK(std::abs(d.y.mean()) < 1e-12);
  for (int l = 0; l < 2; ++l) CHECK(std::abs(d.x.col(l).mean()) < 1e-12);

  const Dataset d2 = load_dataset(d.y, d.x, d.z);
  CHECK((d2.y - d.y).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((d2.x - d.x).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("load_dataset rejects bad input") {
  VectorXd y(2);
  y << 1.0, 2.0;
  MatrixXd x(3, 1);
  x.setZero();
  MatrixXd z(2, 1);
  z.setZero();
  CHECK_THROWS_AS(load_dataset(y, x, z), InvalidInput);

  MatrixXd x2(2, 1);
  x2 << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(load_dataset(y, x2, z),
                       doctest::Contains("row 2, column 1"), InvalidInput);

  VectorXd y1(1);
  y1 << 1.0;
  MatrixXd one(1, 1);
  one.setZero();
  CHECK_THROWS_AS(load_dataset(y1, one, one), InvalidInput);
}

TEST_CASE("standard normal quantile matches the bisection oracle") {
  CHECK(standard_normal_quantile(0.05) == doctest::Approx(1.95996398).epsilon(1e-8));
  CHECK(standard_normal_quantile(0.32) == doctest::Approx(0.99445788).epsilon(1e-8));
  for (double alpha : {0.01, 0.05, 0.10, 0.32, 0.5, 0.9}) {
    const double z = standard_normal_quantile(alpha);
    const double z_oracle = oracle::normal_icdf_bisect(1.0 - alpha / 2.0);
    CHECK(std::abs(z - z_oracle) < 1e-9);
    CHECK(std::abs(standard_normal_cdf(z) - (1.0 - alpha / 2.0)) < 1e-8);
  }
  // alpha -> 1 pushes the quantile to 0
  CHECK(std::abs(standard_normal_quantile(0.999999)) < 1e-5);
  CHECK_THROWS_AS(standard_normal_quantile(0.0), InvalidInput);
  CHECK_THROWS_AS(standard_normal_quantile(1.0), InvalidInput);
}

TEST_CASE("rng streams reproduce bitwise") {
  SeededRng a(42, 7);
  SeededRng b(42, 7);
  for (int i = 0; i < 10000; ++i) REQUIRE(a.next_u64() == b.next_u64());

  SeededRng c(42, 8);
  SeededRng d(42, 7);
  int differ = 0;
  for (int i = 0; i < 100; ++i) {
    if (c.next_u64() != d.next_u64()) ++differ;
  }
  CHECK(differ > 90);  // different stream, different sequence
}

TEST_CASE("rng derive is deterministic and order-insensitive") {
  SeededRng root(9, 1);
  SeededRng d1 = root.derive(3);
  root.next_u64();  // advancing the parent must not affect derived streams
  SeededRng d2 = root.derive(3);
  for (int i = 0; i < 100; ++i) REQUIRE(d1.next_u64() == d2.next_u64());
}

TEST_CASE("rng uniform and normal are sane") {
  SeededRng rng(1, 0);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.next_uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));

  double nsum = 0.0, nsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.next_normal();
    nsum += v;
    nsq += v * v;
  }
  CHECK(std::abs(nsum / n) < 0.02);
  CHECK(nsq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("shuffle and subsampling cover the range") {
  SeededRng rng(5, 5);
  const auto idx = rng.shuffled_indices(17);
  std::vector<bool> seen(17, false);
  for (int i : idx) seen[i] = true;
  for (bool s : seen) CHECK(s);

  const auto sub = rng.sample_without_replacement(10, 4);
  CHECK(sub.size() == 4);
  std::vector<bool> used(10, false);
  for (int i : sub) {
    CHECK(!used[i]);
    used[i] = true;
  }
}
