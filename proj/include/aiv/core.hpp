#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace aiv {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Bad user-supplied data (dimensions, non-finite cells, out-of-range options).
class InvalidInput : public std::runtime_error {
public:
  explicit InvalidInput(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure inside an iterative solver (cycling, iteration cap on
// an exact method). Distinct from non-convergence, which is reported via
// FitDiagnostics.
class SolverError : public std::runtime_error {
public:
  explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FitDiagnostics {
  int iterations = 0;
  double final_objective = 0.0;
  double kkt_residual = 0.0;
  bool converged = false;
};

// Outcome/treatments are mean-centered at load; instruments stay on their
// raw scale (the spline basis is centered later, per instrument).
struct Dataset {
  VectorXd y;        // n, centered
  MatrixXd x;        // n x p, column-centered
  MatrixXd z;        // n x q, raw
  double center_y = 0.0;
  VectorXd center_x; // p

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return x.cols(); }
  Eigen::Index q() const { return z.cols(); }
};

Dataset load_dataset(const VectorXd& y_raw, const MatrixXd& x_raw, const MatrixXd& z_raw);

// Phi, its inverse, and the two-sided normal quantile z_alpha = Phi^{-1}(1 - alpha/2).
double standard_normal_cdf(double x);
double standard_normal_icdf(double p);
double standard_normal_quantile(double alpha);

// Splittable counter-style generator: the draw sequence is a pure function
// of (seed, stream_id), so per-task streams are order-insensitive.
class SeededRng {
public:
  SeededRng(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64();
  double next_uniform();  // strictly inside (0,1)
  double next_normal();   // inverse-CDF transform of next_uniform()

  // Independent child stream; deterministic in (seed, stream_id, tag).
  SeededRng derive(std::uint64_t tag) const;

  // Fisher-Yates permutation of 0..n-1.
  std::vector<int> shuffled_indices(int n);
  // k distinct values from 0..n-1, in draw order.
  std::vector<int> sample_without_replacement(int n, int k);

private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t state_;
  std::uint64_t inc_;
};

}  // namespace aiv
