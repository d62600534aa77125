#include "aiv/simplex.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace aiv {

namespace {

constexpr double kCostTol = 1e-9;    // entering eligibility
constexpr double kPivotTol = 1e-11;  // ratio-test eligibility
constexpr int kDegenerateStreak = 64;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Tableau {
  RowMajor t;               // m x (cols+1); last column is the rhs
  VectorXd cost;            // cols+1 reduced-cost row (last entry: -objective)
  std::vector<int> basis;   // basic variable per row
  std::vector<bool> banned; // columns excluded from entering
  int rows = 0;
  int cols = 0;
  bool bland = false;
  int degenerate_streak = 0;
  int iterations = 0;

  void pivot(int r, int c) {
    t.row(r) /= t(r, c);
    for (int i = 0; i < rows; ++i) {
      if (i == r) continue;
      const double f = t(i, c);
      if (f != 0.0) t.row(i) -= f * t.row(r);
    }
    const double fc = cost(c);
    if (fc != 0.0) cost -= fc * t.row(r).transpose();
    basis[r] = c;
  }

  int choose_entering() const {
    if (bland) {
      for (int j = 0; j < cols; ++j) {
        if (!banned[j] && cost(j) < -kCostTol) return j;
      }
      return -1;
    }
    int best = -1;
    double best_cost = -kCostTol;
    for (int j = 0; j < cols; ++j) {
      if (!banned[j] && cost(j) < best_cost) {
        best_cost = cost(j);
        best = j;
      }
    }
    return best;
  }

  int choose_leaving(int c) const {
    int best = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < rows; ++i) {
      const double a = t(i, c);
      if (a > kPivotTol) {
        const double ratio = t(i, cols) / a;
        if (ratio < best_ratio - 1e-12 ||
            (ratio < best_ratio + 1e-12 && (best < 0 || basis[i] < basis[best]))) {
          best_ratio = ratio;
          best = i;
        }
      }
    }
    return best;
  }

  // Runs simplex until optimal/unbounded/iteration cap.
  LpStatus run(int max_iter) {
    while (iterations < max_iter) {
      const int c = choose_entering();
      if (c < 0) return LpStatus::Optimal;
      const int r = choose_leaving(c);
      if (r < 0) return LpStatus::Unbounded;
      const double before = cost(cols);
      pivot(r, c);
      ++iterations;
      if (!bland) {
        if (cost(cols) <= before + 1e-14) {
          if (++degenerate_streak >= kDegenerateStreak) bland = true;
        } else {
          degenerate_streak = 0;
        }
      }
    }
    return LpStatus::IterationLimit;
  }
};

}  // namespace

LpResult solve_lp_inequality(const MatrixXd& a_ub_raw, const VectorXd& b_ub, const VectorXd& c_raw,
                             int max_iter) {
  const int m = static_cast<int>(a_ub_raw.rows());
  const int n = static_cast<int>(a_ub_raw.cols());
  if (b_ub.size() != m || c_raw.size() != n) throw InvalidInput("LP dimension mismatch");
  if (max_iter <= 0) max_iter = 200 * (m + n) + 5000;

  // Column equilibration: substitute x_j = d_j * x~_j so every column has
  // unit max-norm. Exact reparametrization; keeps basis matrices from mixing
  // wildly different scales.
  VectorXd col_scale(n);
  for (int j = 0; j < n; ++j) {
    const double top = a_ub_raw.col(j).cwiseAbs().maxCoeff();
    col_scale(j) = top > 0.0 ? 1.0 / top : 1.0;
  }
  const MatrixXd a_ub = a_ub_raw * col_scale.asDiagonal();
  const VectorXd c = c_raw.cwiseProduct(col_scale);

  // Equality form with slacks; flip rows so the rhs is nonnegative. Flipped
  // rows get a -1 slack, so they need an artificial basis variable.
  std::vector<bool> flipped(m);
  int n_artificial = 0;
  for (int i = 0; i < m; ++i) {
    flipped[i] = b_ub(i) < 0.0;
    if (flipped[i]) ++n_artificial;
  }

  Tableau tab;
  tab.rows = m;
  tab.cols = n + m + n_artificial;
  tab.t = RowMajor::Zero(m, tab.cols + 1);
  tab.basis.assign(m, -1);
  tab.banned.assign(tab.cols, false);

  int art = n + m;
  for (int i = 0; i < m; ++i) {
    const double sign = flipped[i] ? -1.0 : 1.0;
    tab.t.row(i).head(n) = sign * a_ub.row(i);
    tab.t(i, n + i) = sign;  // slack
    tab.t(i, tab.cols) = sign * b_ub(i);
    if (flipped[i]) {
      tab.t(i, art) = 1.0;
      tab.basis[i] = art++;
    } else {
      tab.basis[i] = n + i;
    }
  }

  LpResult result;
  result.x = VectorXd::Zero(n);

  // Unpivoted copy of the equality system for the final refinement step.
  const RowMajor eq0 = tab.t;

  // Phase 1: minimize the artificial sum.
  if (n_artificial > 0) {
    tab.cost = VectorXd::Zero(tab.cols + 1);
    for (int i = 0; i < m; ++i) {
      if (tab.basis[i] >= n + m) tab.cost -= tab.t.row(i).transpose();
    }
    for (int j = n + m; j < tab.cols; ++j) tab.cost(j) += 1.0;

    const LpStatus s1 = tab.run(max_iter);
    result.iterations = tab.iterations;
    if (s1 == LpStatus::IterationLimit) {
      result.status = s1;
      return result;
    }
    const double artificial_sum = -tab.cost(tab.cols);
    if (artificial_sum > 1e-8 * std::max(1.0, b_ub.cwiseAbs().maxCoeff())) {
      result.status = LpStatus::Infeasible;
      return result;
    }
    // Pivot lingering artificials out; a row with no real pivot is redundant
    // and its artificial stays basic at zero with the column banned.
    for (int i = 0; i < m; ++i) {
      if (tab.basis[i] < n + m) continue;
      int col = -1;
      for (int j = 0; j < n + m; ++j) {
        if (std::abs(tab.t(i, j)) > 1e-9) {
          col = j;
          break;
        }
      }
      if (col >= 0) tab.pivot(i, col);
    }
    for (int j = n + m; j < tab.cols; ++j) tab.banned[j] = true;
  }

  // Phase 2.
  tab.cost = VectorXd::Zero(tab.cols + 1);
  tab.cost.head(n) = c;
  for (int i = 0; i < m; ++i) {
    const int b = tab.basis[i];
    if (b < n && c(b) != 0.0) tab.cost -= c(b) * tab.t.row(i).transpose();
  }
  tab.bland = false;
  tab.degenerate_streak = 0;

  const LpStatus s2 = tab.run(max_iter);
  result.iterations = tab.iterations;
  result.status = s2;
  if (s2 != LpStatus::Optimal) return result;

  // Refine: recompute the basic solution from a fresh factorization of the
  // unpivoted equality columns, dropping the tableau's accumulated drift.
  MatrixXd basis_mat(m, m);
  for (int i = 0; i < m; ++i) basis_mat.col(i) = eq0.col(tab.basis[i]);
  Eigen::FullPivLU<MatrixXd> lu(basis_mat);
  VectorXd xb;
  if (lu.isInvertible()) {
    xb = lu.solve(eq0.col(tab.cols));
  } else {
    xb.resize(m);
    for (int i = 0; i < m; ++i) xb(i) = tab.t(i, tab.cols);
  }
  for (int i = 0; i < m; ++i) {
    const int b = tab.basis[i];
    if (b < n) result.x(b) = std::max(0.0, xb(i)) * col_scale(b);
  }
  result.objective = c_raw.dot(result.x);
  return result;
}

}  // namespace aiv
