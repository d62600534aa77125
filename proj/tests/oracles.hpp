// Test-only reference implementations, kept independent of the library's
// solver paths: textbook recursions, brute-force enumeration, long-run
// subgradient descent. Slow on purpose.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Plain recursive Cox-de Boor: N_{k,order} over the full knot vector, with
// the closed right end handled by treating the last knot as inclusive.
inline double bspline_recursive(const std::vector<double>& t, int order, int k, double z) {
  if (order == 1) {
    const bool last = t[k + 1] >= t[t.size() - 1];
    if (z >= t[k] && (z < t[k + 1] || (last && z <= t[k + 1]))) return t[k] < t[k + 1] ? 1.0 : 0.0;
    return 0.0;
  }
  double left = 0.0, right = 0.0;
  const double dl = t[k + order - 1] - t[k];
  const double dr = t[k + order] - t[k + 1];
  if (dl > 0.0) left = (z - t[k]) / dl * bspline_recursive(t, order - 1, k, z);
  if (dr > 0.0) right = (t[k + order] - z) / dr * bspline_recursive(t, order - 1, k + 1, z);
  return left + right;
}

// Bisection inverse of Phi built on erfc only.
inline double normal_icdf_bisect(double p) {
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double cdf = 0.5 * std::erfc(-mid / std::sqrt(2.0));
    (cdf < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Group-lasso objective.
inline double group_objective(const MatrixXd& u, const VectorXd& x, double lambda,
                              const std::vector<int>& offsets, int m, const VectorXd& gamma) {
  const double n = static_cast<double>(u.rows());
  double obj = (x - u * gamma).squaredNorm() / (2.0 * n);
  for (int off : offsets) obj += lambda * gamma.segment(off, m).norm();
  return obj;
}

// Subgradient descent with the strongly-convex step schedule 2/(sigma_min (t+1)).
// Returns the best objective seen. Only meaningful when U'U/n is positive
// definite (n > qm instances).
inline double group_lasso_subgradient(const MatrixXd& u, const VectorXd& x, double lambda,
                                      const std::vector<int>& offsets, int m, long iterations) {
  const double n = static_cast<double>(u.rows());
  const MatrixXd g = u.transpose() * u / n;
  const VectorXd h = u.transpose() * x / n;
  const double xsq = x.squaredNorm() / n;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(g);
  const double sigma_min = eig.eigenvalues().minCoeff();

  VectorXd gamma = VectorXd::Zero(g.rows());
  double best = 0.5 * xsq;  // objective at zero
  for (long t = 1; t <= iterations; ++t) {
    VectorXd grad = g * gamma - h;
    for (int off : offsets) {
      const double norm = gamma.segment(off, m).norm();
      if (norm > 0.0) {
        grad.segment(off, m) += lambda * gamma.segment(off, m) / norm;
      }
      // at zero the subgradient 0 is valid for the penalty
    }
    const double step = 2.0 / (sigma_min * static_cast<double>(t + 1));
    gamma -= step * grad;
    double obj = 0.5 * (xsq - 2.0 * h.dot(gamma) + gamma.dot(g * gamma));
    for (int off : offsets) obj += lambda * gamma.segment(off, m).norm();
    if (obj < best) best = obj;
  }
  return best;
}

// Exact lasso optimum for small p: enumerate sign patterns, solve each
// restricted stationarity system, keep the best objective among candidates.
inline double lasso_sign_enumeration(const MatrixXd& x, const VectorXd& y, double mu,
                                     VectorXd* best_beta = nullptr) {
  const int p = static_cast<int>(x.cols());
  const double n = static_cast<double>(x.rows());
  auto objective = [&](const VectorXd& b) {
    return (y - x * b).squaredNorm() / (2.0 * n) + mu * b.lpNorm<1>();
  };
  VectorXd best = VectorXd::Zero(p);
  double best_obj = objective(best);

  std::vector<int> signs(p, 0);
  long total = 1;
  for (int i = 0; i < p; ++i) total *= 3;
  for (long code = 1; code < total; ++code) {
    long rem = code;
    std::vector<int> active;
    for (int i = 0; i < p; ++i) {
      signs[i] = static_cast<int>(rem % 3) - 1;  // -1, 0, +1
      rem /= 3;
      if (signs[i] != 0) active.push_back(i);
    }
    const int a = static_cast<int>(active.size());
    MatrixXd xa(x.rows(), a);
    VectorXd sa(a);
    for (int i = 0; i < a; ++i) {
      xa.col(i) = x.col(active[i]);
      sa(i) = signs[active[i]];
    }
    const MatrixXd gram = xa.transpose() * xa / n;
    const VectorXd rhs = xa.transpose() * y / n - mu * sa;
    Eigen::FullPivLU<MatrixXd> lu(gram);
    if (!lu.isInvertible()) continue;
    const VectorXd ba = lu.solve(rhs);
    bool consistent = true;
    for (int i = 0; i < a; ++i) {
      if (ba(i) * sa(i) <= 0.0) {
        consistent = false;
        break;
      }
    }
    if (!consistent) continue;
    VectorXd b = VectorXd::Zero(p);
    for (int i = 0; i < a; ++i) b(active[i]) = ba(i);
    const double obj = objective(b);
    if (obj < best_obj) {
      best_obj = obj;
      best = b;
    }
  }
  if (best_beta) *best_beta = best;
  return best_obj;
}

// Brute-force optimum of min 1'x s.t. a x <= b, x >= 0 by enumerating basic
// solutions of the slack-augmented equality system. Infeasible -> +inf.
inline double lp_basic_enumeration(const MatrixXd& a_ub, const VectorXd& b_ub,
                                   const VectorXd& c) {
  const int m = static_cast<int>(a_ub.rows());
  const int n = static_cast<int>(a_ub.cols());
  const int total = n + m;
  MatrixXd a(m, total);
  a.leftCols(n) = a_ub;
  a.rightCols(m) = MatrixXd::Identity(m, m);

  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(m);
  std::vector<int> comb(m);
  for (int i = 0; i < m; ++i) comb[i] = i;
  while (true) {
    MatrixXd basis(m, m);
    for (int i = 0; i < m; ++i) basis.col(i) = a.col(comb[i]);
    Eigen::FullPivLU<MatrixXd> lu(basis);
    if (lu.isInvertible()) {
      const VectorXd xb = lu.solve(b_ub);
      if (xb.minCoeff() >= -1e-9) {
        double obj = 0.0;
        for (int i = 0; i < m; ++i) {
          if (comb[i] < n) obj += c(comb[i]) * xb(i);
        }
        if (obj < best) best = obj;
      }
    }
    // next combination
    int i = m - 1;
    while (i >= 0 && comb[i] == total - m + i) --i;
    if (i < 0) break;
    ++comb[i];
    for (int j = i + 1; j < m; ++j) comb[j] = comb[j - 1] + 1;
  }
  return best;
}

// CLIME row optimum by basic-solution enumeration on the split formulation.
inline double clime_vertex_enumeration(const MatrixXd& sigma, int ell, double upsilon) {
  const int p = static_cast<int>(sigma.rows());
  MatrixXd a_ub(2 * p, 2 * p);
  a_ub.topLeftCorner(p, p) = sigma;
  a_ub.topRightCorner(p, p) = -sigma;
  a_ub.bottomLeftCorner(p, p) = -sigma;
  a_ub.bottomRightCorner(p, p) = sigma;
  VectorXd b_ub(2 * p);
  for (int i = 0; i < p; ++i) {
    const double e = i == ell ? 1.0 : 0.0;
    b_ub(i) = e + upsilon;
    b_ub(p + i) = upsilon - e;
  }
  return lp_basic_enumeration(a_ub, b_ub, VectorXd::Ones(2 * p));
}

}  // namespace oracle
