#include "aiv/core.hpp"

#include <cmath>

namespace aiv {

namespace {

void check_finite(const MatrixXd& m, const char* name) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (!std::isfinite(m(i, j))) {
        throw InvalidInput(std::string("non-finite entry in ") + name + " at row " +
                           std::to_string(i + 1) + ", column " + std::to_string(j + 1));
      }
    }
  }
}

// Two-pass centering so the residual mean is at the rounding floor even for
// large offsets.
void center_in_place(Eigen::Ref<VectorXd> v, double& center) {
  center = v.mean();
  v.array() -= center;
  const double rem = v.mean();
  v.array() -= rem;
  center += rem;
}

}  // namespace

Dataset load_dataset(const VectorXd& y_raw, const MatrixXd& x_raw, const MatrixXd& z_raw) {
  const Eigen::Index n = y_raw.size();
  if (n < 2) throw InvalidInput("need at least 2 observations, got " + std::to_string(n));
  if (x_raw.rows() != n || z_raw.rows() != n) {
    throw InvalidInput("row count mismatch: y has " + std::to_string(n) + ", x has " +
                       std::to_string(x_raw.rows()) + ", z has " + std::to_string(z_raw.rows()));
  }
  if (x_raw.cols() < 1) throw InvalidInput("x must have at least one column");
  if (z_raw.cols() < 1) throw InvalidInput("z must have at least one column");
  check_finite(y_raw, "y");
  check_finite(x_raw, "x");
  check_finite(z_raw, "z");

  Dataset d;
  d.y = y_raw;
  d.x = x_raw;
  d.z = z_raw;
  d.center_x.resize(x_raw.cols());
  center_in_place(d.y, d.center_y);
  for (Eigen::Index l = 0; l < d.x.cols(); ++l) {
    center_in_place(d.x.col(l), d.center_x(l));
  }
  return d;
}

double standard_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

namespace {

// Acklam's rational approximation, then one Halley step against erfc-based Phi.
double norm_icdf_impl(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double u = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
        ((((dd[0] * u + dd[1]) * u + dd[2]) * u + dd[3]) * u + 1.0);
  } else if (p <= 1.0 - plow) {
    const double u = p - 0.5;
    const double t = u * u;
    x = (((((a[0] * t + a[1]) * t + a[2]) * t + a[3]) * t + a[4]) * t + a[5]) * u /
        (((((b[0] * t + b[1]) * t + b[2]) * t + b[3]) * t + b[4]) * t + 1.0);
  } else {
    const double u = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * u + c[1]) * u + c[2]) * u + c[3]) * u + c[4]) * u + c[5]) /
        ((((dd[0] * u + dd[1]) * u + dd[2]) * u + dd[3]) * u + 1.0);
  }
  // Halley refinement.
  const double e = standard_normal_cdf(x) - p;
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  if (pdf > 0.0) {
    const double u = e / pdf;
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

}  // namespace

double standard_normal_icdf(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidInput("normal inverse CDF requires p in (0,1), got " + std::to_string(p));
  }
  return norm_icdf_impl(p);
}

double standard_normal_quantile(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InvalidInput("alpha must lie in (0,1), got " + std::to_string(alpha));
  }
  return standard_normal_icdf(1.0 - alpha / 2.0);
}

namespace {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t splitmix64(std::uint64_t& s) {
  return mix64(s += 0x9e3779b97f4a7c15ULL);
}

}  // namespace

// SplitMix-style splittable stream: state walks an arithmetic progression
// with a per-stream odd gamma; outputs go through the mix64 finalizer.
SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  std::uint64_t s = mix64(seed ^ 0x5851f42d4c957f2dULL) ^ mix64(stream_id);
  state_ = splitmix64(s);
  inc_ = splitmix64(s) | 1ULL;
}

std::uint64_t SeededRng::next_u64() {
  state_ += inc_;
  return mix64(state_);
}

double SeededRng::next_uniform() {
  const std::uint64_t bits = next_u64() >> 11;  // 53 bits
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double SeededRng::next_normal() {
  return norm_icdf_impl(next_uniform());
}

SeededRng SeededRng::derive(std::uint64_t tag) const {
  std::uint64_t s = stream_id_ ^ (tag * 0x2545f4914f6cdd1dULL + 0x9e3779b97f4a7c15ULL);
  return SeededRng(seed_, splitmix64(s));
}

std::vector<int> SeededRng::shuffled_indices(int n) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

std::vector<int> SeededRng::sample_without_replacement(int n, int k) {
  if (k > n) throw InvalidInput("cannot sample " + std::to_string(k) + " from " + std::to_string(n));
  std::vector<int> idx = shuffled_indices(n);
  idx.resize(k);
  return idx;
}

}  // namespace aiv
