#pragma once

#include "aiv/core.hpp"

namespace aiv {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

struct LpResult {
  VectorXd x;
  double objective = 0.0;
  LpStatus status = LpStatus::IterationLimit;
  int iterations = 0;
};

// Minimize c'x subject to a_ub x <= b_ub, x >= 0, by a dense two-phase
// tableau simplex. Entering column: most negative reduced cost with
// smallest-index tie-break; after a long degenerate streak the pivot rule
// switches to Bland's, which guarantees termination. Deterministic.
LpResult solve_lp_inequality(const MatrixXd& a_ub, const VectorXd& b_ub, const VectorXd& c,
                             int max_iter = 0);

}  // namespace aiv
