#pragma once

#include "aiv/core.hpp"
#include "aiv/group_lasso.hpp"
#include "aiv/lasso.hpp"
#include "aiv/splines.hpp"

namespace aiv {

struct TuningConfig {
  std::vector<int> k_grid;          // empty: centered on floor(n^{1/5})
  int lambda_path_size = 50;
  double lambda_path_ratio = 0.01;
  int mu_path_size = 50;
  double mu_path_ratio = 0.01;
  int cv_folds = 5;
  int stability_subsamples = 100;
  double stability_threshold = 0.5;
  // Stability selection unions active sets over the upper part of the mu
  // path only; running it to the CV floor would saturate the selection.
  double stability_mu_ratio = 0.1;
  bool shared_lambda = false;       // one lambda across treatments instead of per-l
  int spline_order = 4;
  double group_tol = kGroupLassoTol;
  int group_max_iter = kGroupLassoMaxIter;
  double lasso_tol = kLassoTol;
  int lasso_max_iter = kLassoMaxIter;
  int threads = 1;
};

double bic_score(Eigen::Index n, double rss, double df);

// Disjoint folds covering all rows, sizes differing by at most one.
std::vector<std::vector<int>> make_cv_folds(Eigen::Index n, int folds, SeededRng& rng);

// Log-spaced descending path from max_value to ratio*max_value.
std::vector<double> log_path(double max_value, double ratio, int size);

std::vector<int> auto_k_grid(Eigen::Index n);

struct FirstStageSelection {
  int interior_knots = 0;  // selected K
  SplineDesign design;
  FirstStageFit fit;
  double bic_total = 0.0;
};

// BIC over (K, lambda): per-treatment warm-started lambda paths at each K,
// df = m * (number of active groups); K minimizing the summed BIC wins.
FirstStageSelection select_first_stage(const Dataset& dataset, const TuningConfig& config);

struct MuSelection {
  double mu = 0.0;
  SecondStageFit fit;
  std::vector<double> mu_path;
  std::vector<double> cv_errors;
};

MuSelection select_mu_cv(const FirstStageFit& first_stage, const Dataset& dataset,
                         const TuningConfig& config, SeededRng& rng);

// Selection frequency per coordinate over subsamples of size floor(n/2);
// a coordinate counts as selected when it is active at any mu on the path.
VectorXd stability_selection(const Dataset& dataset, const TuningConfig& config, SeededRng& rng);

// CV-selected lasso on an arbitrary design (used by the PLS baseline and the
// second stage alike).
struct CvLasso {
  double mu = 0.0;
  VectorXd beta;
  FitDiagnostics diagnostics;
  std::vector<double> mu_path;
  std::vector<double> cv_errors;
};

CvLasso cv_lasso(const Eigen::Ref<const MatrixXd>& design, const Eigen::Ref<const VectorXd>& target,
                 const TuningConfig& config, SeededRng& rng);

// BIC-selected lasso along a warm-started path with a shared gram matrix;
// used for the linear first stage of the 2SLS-L baseline.
struct BicLasso {
  double lambda = 0.0;
  VectorXd beta;
  double bic = 0.0;
};

BicLasso bic_lasso_path(const GroupGram& singleton_gram, const VectorXd& h, double target_sq_n,
                        Eigen::Index n, const TuningConfig& config);

}  // namespace aiv
