#pragma once

namespace aiv {

// Exit codes: 0 success, 2 input error, 3 solver non-convergence under
// --strict, 4 no feasible precision tolerance.
int run_cli(int argc, const char* const* argv);

}  // namespace aiv
