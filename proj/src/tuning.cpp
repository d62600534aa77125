#include "aiv/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aiv/parallel.hpp"

namespace aiv {

double bic_score(Eigen::Index n, double rss, double df) {
  if (rss < 0.0) throw InvalidInput("negative residual sum of squares");
  if (df < 0.0) throw InvalidInput("negative degrees of freedom");
  if (rss == 0.0) return -std::numeric_limits<double>::infinity();
  const double dn = static_cast<double>(n);
  return dn * std::log(rss / dn) + df * std::log(dn);
}

std::vector<double> log_path(double max_value, double ratio, int size) {
  if (size < 1) throw InvalidInput("path size must be >= 1");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw InvalidInput("path ratio must lie in (0,1]");
  if (max_value <= 0.0) return {0.0};
  if (size == 1) return {max_value};
  std::vector<double> path(size);
  const double hi = std::log(max_value);
  const double lo = std::log(max_value * ratio);
  for (int i = 0; i < size; ++i) {
    path[i] = std::exp(hi + (lo - hi) * i / (size - 1));
  }
  return path;
}

std::vector<int> auto_k_grid(Eigen::Index n) {
  const int k0 = default_interior_knots(n);
  std::vector<int> grid;
  for (int k = std::max(0, k0 - 1); k <= k0 + 1; ++k) grid.push_back(k);
  return grid;
}

namespace {

struct TreatmentPathResult {
  double lambda = 0.0;
  double bic = std::numeric_limits<double>::infinity();
  VectorXd gamma;
  FitDiagnostics diagnostics;
};

double group_penalty(const GroupGram& gram, const VectorXd& gamma) {
  double pen = 0.0;
  for (int off : gram.offsets) pen += gamma.segment(off, gram.group_size).norm();
  return pen;
}

int active_group_count(const GroupGram& gram, const VectorXd& gamma) {
  int count = 0;
  for (int off : gram.offsets) {
    if (gamma.segment(off, gram.group_size).squaredNorm() > 0.0) ++count;
  }
  return count;
}

// rss recovered from the optimal objective: obj = rss/(2n) + lambda * penalty.
double rss_from_objective(const GroupGram& gram, const FitDiagnostics& diag, double lambda,
                          const VectorXd& gamma) {
  const double rss = 2.0 * static_cast<double>(gram.n) *
                     (diag.final_objective - lambda * group_penalty(gram, gamma));
  return std::max(rss, 0.0);
}

// Path points are explored with a lighter sweep cap; the winner is refit at
// the full tolerance below.
constexpr int kPathMaxIter = 500;
// Stop descending lambda once BIC has risen this many scored points in a row.
constexpr int kBicPatience = 8;

TreatmentPathResult best_bic_on_path(const GroupGram& gram, const VectorXd& h,
                                     double target_sq_n, const std::vector<double>& path,
                                     const TuningConfig& config) {
  TreatmentPathResult best;
  VectorXd gamma = VectorXd::Zero(gram.g.rows());
  int rises = 0;
  for (double lambda : path) {
    const FitDiagnostics diag =
        solve_group_lasso_gram(gram, h, target_sq_n, lambda, config.group_tol,
                               std::min(config.group_max_iter, kPathMaxIter), gamma);
    const double df = static_cast<double>(gram.group_size) * active_group_count(gram, gamma);
    // Near-saturated fits can chase the rss toward zero, where n*log(rss/n)
    // stops being a likelihood proxy; the rest of the path only gets worse.
    if (df >= 0.5 * static_cast<double>(gram.n)) break;
    const double rss = rss_from_objective(gram, diag, lambda, gamma);
    const double bic = bic_score(gram.n, rss, df);
    if (bic < best.bic) {
      best.bic = bic;
      best.lambda = lambda;
      best.gamma = gamma;
      best.diagnostics = diag;
      rises = 0;
    } else if (++rises >= kBicPatience) {
      break;
    }
  }
  if (best.gamma.size() == 0) {
    // nothing scoreable on the path: keep the null fit at the largest lambda
    best.lambda = path.front();
    best.gamma = VectorXd::Zero(gram.g.rows());
    best.diagnostics = solve_group_lasso_gram(gram, h, target_sq_n, best.lambda, config.group_tol,
                                              config.group_max_iter, best.gamma);
    best.bic = bic_score(gram.n, rss_from_objective(gram, best.diagnostics, best.lambda,
                                                    best.gamma),
                         static_cast<double>(gram.group_size) *
                             active_group_count(gram, best.gamma));
    return best;
  }
  // refit the winner at the full iteration budget
  best.diagnostics = solve_group_lasso_gram(gram, h, target_sq_n, best.lambda, config.group_tol,
                                            config.group_max_iter, best.gamma);
  return best;
}

// Relaxed refit on the BIC-selected support: the penalty at the selection
// point is calibrated for support recovery and over-shrinks the retained
// blocks, which attenuates the fitted treatments and inflates the second
// stage. Cross-validate the relaxation factor on x-prediction error over the
// frozen support, then refit on all rows. Deterministic round-robin folds.
constexpr double kRelaxFactors[] = {1.0, 0.7, 0.5, 0.35, 0.25, 0.15, 0.1};

void relax_on_support(const SplineDesign& design, const Eigen::Ref<const VectorXd>& target,
                      const TuningConfig& config, TreatmentPathResult& best) {
  const int m = design.m();
  std::vector<int> support;
  for (int j = 0; j < design.q(); ++j) {
    if (best.gamma.segment(design.group_offsets[j], m).squaredNorm() > 0.0) support.push_back(j);
  }
  if (support.empty()) return;
  const Eigen::Index n = design.u.rows();
  const int cols = static_cast<int>(support.size()) * m;
  MatrixXd u_s(n, cols);
  std::vector<int> offsets_s(support.size());
  for (std::size_t s = 0; s < support.size(); ++s) {
    offsets_s[s] = static_cast<int>(s) * m;
    u_s.middleCols(offsets_s[s], m) = design.u.middleCols(design.group_offsets[support[s]], m);
  }

  const int folds = std::max(2, std::min(config.cv_folds, static_cast<int>(n) / 4));
  std::vector<double> cv_err(std::size(kRelaxFactors), 0.0);
  for (int f = 0; f < folds; ++f) {
    const Eigen::Index n_val = (n - 1 - f) / folds + 1;
    MatrixXd u_train(n - n_val, cols), u_val(n_val, cols);
    VectorXd t_train(n - n_val), t_val(n_val);
    Eigen::Index it = 0, iv = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i % folds == f) {
        u_val.row(iv) = u_s.row(i);
        t_val(iv++) = target(i);
      } else {
        u_train.row(it) = u_s.row(i);
        t_train(it++) = target(i);
      }
    }
    const GroupGram gram_f = make_group_gram(u_train, offsets_s, m);
    const VectorXd h_f = u_train.transpose() * t_train / static_cast<double>(u_train.rows());
    const double tsq_f = t_train.squaredNorm() / static_cast<double>(u_train.rows());
    VectorXd gamma_f = VectorXd::Zero(cols);
    for (std::size_t k = 0; k < std::size(kRelaxFactors); ++k) {
      solve_group_lasso_gram(gram_f, h_f, tsq_f, kRelaxFactors[k] * best.lambda,
                             config.group_tol, kPathMaxIter, gamma_f);
      cv_err[k] += (t_val - u_val * gamma_f).squaredNorm();
    }
  }
  std::size_t pick = 0;
  for (std::size_t k = 1; k < cv_err.size(); ++k) {
    if (cv_err[k] < cv_err[pick]) pick = k;  // ties keep the larger factor
  }

  const GroupGram gram_s = make_group_gram(u_s, offsets_s, m);
  const VectorXd h_s = u_s.transpose() * target / static_cast<double>(n);
  const double tsq_s = target.squaredNorm() / static_cast<double>(n);
  VectorXd gamma_s = VectorXd::Zero(cols);
  for (std::size_t s = 0; s < support.size(); ++s) {
    gamma_s.segment(offsets_s[s], m) = best.gamma.segment(design.group_offsets[support[s]], m);
  }
  best.lambda *= kRelaxFactors[pick];
  best.diagnostics = solve_group_lasso_gram(gram_s, h_s, tsq_s, best.lambda, config.group_tol,
                                            config.group_max_iter, gamma_s);
  best.gamma.setZero();
  for (std::size_t s = 0; s < support.size(); ++s) {
    best.gamma.segment(design.group_offsets[support[s]], m) = gamma_s.segment(offsets_s[s], m);
  }
}

}  // namespace

FirstStageSelection select_first_stage(const Dataset& dataset, const TuningConfig& config) {
  const Eigen::Index p = dataset.p();
  const double n = static_cast<double>(dataset.n());
  const std::vector<int> k_grid =
      config.k_grid.empty() ? auto_k_grid(dataset.n()) : config.k_grid;

  FirstStageSelection best;
  best.bic_total = std::numeric_limits<double>::infinity();
  bool have_best = false;
  std::vector<TreatmentPathResult> best_results;

  for (int k : k_grid) {
    SplineDesign design = build_design(dataset, k, config.spline_order);
    const GroupGram gram = make_group_gram(design.u, design.group_offsets, design.m());

    // Per-treatment sufficient statistics.
    MatrixXd h_all = design.u.transpose() * dataset.x / n;
    VectorXd target_sq(p);
    for (Eigen::Index l = 0; l < p; ++l) target_sq(l) = dataset.x.col(l).squaredNorm() / n;

    std::vector<TreatmentPathResult> results(p);
    if (config.shared_lambda) {
      double lmax = 0.0;
      for (Eigen::Index l = 0; l < p; ++l) {
        for (int off : gram.offsets) {
          lmax = std::max(lmax, h_all.col(l).segment(off, gram.group_size).norm());
        }
      }
      const std::vector<double> path =
          log_path(lmax, config.lambda_path_ratio, config.lambda_path_size);
      // One shared path point minimizing summed BIC; warm starts per treatment.
      std::vector<VectorXd> gammas(p, VectorXd::Zero(design.u.cols()));
      std::vector<FitDiagnostics> diags(p);
      double best_sum = std::numeric_limits<double>::infinity();
      std::vector<VectorXd> best_gammas(p, VectorXd::Zero(design.u.cols()));
      double best_lambda = path.front();
      std::vector<FitDiagnostics> best_diags(p);
      for (double lambda : path) {
        double sum = 0.0;
        parallel_for(static_cast<int>(p), config.threads, [&](int l) {
          diags[l] = solve_group_lasso_gram(gram, h_all.col(l), target_sq(l), lambda,
                                            config.group_tol,
                                            std::min(config.group_max_iter, kPathMaxIter),
                                            gammas[l]);
        });
        double max_df = 0.0;
        for (Eigen::Index l = 0; l < p; ++l) {
          const double df =
              static_cast<double>(gram.group_size) * active_group_count(gram, gammas[l]);
          max_df = std::max(max_df, df);
          const double rss = rss_from_objective(gram, diags[l], lambda, gammas[l]);
          sum += bic_score(gram.n, rss, df);
        }
        if (max_df >= 0.5 * static_cast<double>(gram.n)) break;  // saturation guard
        if (sum < best_sum) {
          best_sum = sum;
          best_gammas = gammas;
          best_lambda = lambda;
          best_diags = diags;
        }
      }
      parallel_for(static_cast<int>(p), config.threads, [&](int l) {
        best_diags[l] = solve_group_lasso_gram(gram, h_all.col(l), target_sq(l), best_lambda,
                                               config.group_tol, config.group_max_iter,
                                               best_gammas[l]);
      });
      for (Eigen::Index l = 0; l < p; ++l) {
        results[l].lambda = best_lambda;
        results[l].gamma = best_gammas[l];
        results[l].diagnostics = best_diags[l];
        results[l].bic = best_sum / static_cast<double>(p);
      }
    } else {
      parallel_for(static_cast<int>(p), config.threads, [&](int l) {
        double lmax = 0.0;
        for (int off : gram.offsets) {
          lmax = std::max(lmax, h_all.col(l).segment(off, gram.group_size).norm());
        }
        const std::vector<double> path =
            log_path(lmax, config.lambda_path_ratio, config.lambda_path_size);
        results[l] = best_bic_on_path(gram, h_all.col(l), target_sq(l), path, config);
      });
    }

    double total = 0.0;
    for (const auto& r : results) total += r.bic;
    if (!have_best || total < best.bic_total) {
      have_best = true;
      best.bic_total = total;
      best.interior_knots = k;
      best_results = std::move(results);
      best.design = std::move(design);
    }
  }

  // Relax the shrinkage on the winning support before assembling the fit.
  parallel_for(static_cast<int>(p), config.threads, [&](int l) {
    relax_on_support(best.design, dataset.x.col(l), config, best_results[l]);
  });

  best.fit.gamma_hat.resize(best.design.u.cols(), p);
  best.fit.lambdas.resize(p);
  best.fit.active_groups.assign(p, {});
  best.fit.diagnostics.resize(p);
  for (Eigen::Index l = 0; l < p; ++l) {
    best.fit.gamma_hat.col(l) = best_results[l].gamma;
    best.fit.lambdas(l) = best_results[l].lambda;
    best.fit.diagnostics[l] = best_results[l].diagnostics;
    for (int j = 0; j < best.design.q(); ++j) {
      if (best_results[l].gamma.segment(best.design.group_offsets[j], best.design.m())
              .squaredNorm() > 0.0) {
        best.fit.active_groups[l].push_back(j);
      }
    }
  }
  best.fit.x_hat.noalias() = best.design.u * best.fit.gamma_hat;
  return best;
}

std::vector<std::vector<int>> make_cv_folds(Eigen::Index n, int folds, SeededRng& rng) {
  if (folds < 2) throw InvalidInput("need at least 2 CV folds");
  if (folds > n) throw InvalidInput("more folds than rows");
  const std::vector<int> perm = rng.shuffled_indices(static_cast<int>(n));
  std::vector<std::vector<int>> out(folds);
  for (int i = 0; i < static_cast<int>(n); ++i) out[i % folds].push_back(perm[i]);
  for (const auto& fold : out) {
    if (fold.size() < 2) throw InvalidInput("a CV fold has fewer than 2 rows");
  }
  return out;
}

CvLasso cv_lasso(const Eigen::Ref<const MatrixXd>& design, const Eigen::Ref<const VectorXd>& target,
                 const TuningConfig& config, SeededRng& rng) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  const auto folds = make_cv_folds(n, config.cv_folds, rng);

  const double mu_max = lambda_max_lasso(design, target);
  const std::vector<double> path = log_path(mu_max, config.mu_path_ratio, config.mu_path_size);

  std::vector<double> cv_err(path.size(), 0.0);
  for (const auto& holdout : folds) {
    std::vector<char> in_fold(n, 0);
    for (int i : holdout) in_fold[i] = 1;
    const Eigen::Index n_train = n - static_cast<Eigen::Index>(holdout.size());
    MatrixXd dtrain(n_train, p);
    VectorXd ttrain(n_train);
    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!in_fold[i]) {
        dtrain.row(row) = design.row(i);
        ttrain(row) = target(i);
        ++row;
      }
    }
    VectorXd beta = VectorXd::Zero(p);
    for (std::size_t k = 0; k < path.size(); ++k) {
      solve_lasso_warm(dtrain, ttrain, path[k], config.lasso_tol, config.lasso_max_iter, beta);
      double err = 0.0;
      for (int i : holdout) {
        const double pred = design.row(i).dot(beta);
        err += (target(i) - pred) * (target(i) - pred);
      }
      cv_err[k] += err;
    }
  }
  for (double& e : cv_err) e /= static_cast<double>(n);

  std::size_t best = 0;
  for (std::size_t k = 1; k < path.size(); ++k) {
    if (cv_err[k] < cv_err[best]) best = k;  // ties keep the larger mu
  }

  CvLasso out;
  out.mu = path[best];
  out.mu_path = path;
  out.cv_errors = cv_err;
  auto [beta, diag] = solve_lasso(design, target, out.mu, config.lasso_tol, config.lasso_max_iter);
  out.beta = std::move(beta);
  out.diagnostics = diag;
  return out;
}

MuSelection select_mu_cv(const FirstStageFit& first_stage, const Dataset& dataset,
                         const TuningConfig& config, SeededRng& rng) {
  CvLasso cv = cv_lasso(first_stage.x_hat, dataset.y, config, rng);
  MuSelection sel;
  sel.mu = cv.mu;
  sel.mu_path = std::move(cv.mu_path);
  sel.cv_errors = std::move(cv.cv_errors);
  sel.fit = fit_second_stage(first_stage, dataset, cv.mu, config.lasso_tol, config.lasso_max_iter);
  return sel;
}

BicLasso bic_lasso_path(const GroupGram& singleton_gram, const VectorXd& h, double target_sq_n,
                        Eigen::Index n, const TuningConfig& config) {
  double lmax = 0.0;
  for (Eigen::Index j = 0; j < h.size(); ++j) lmax = std::max(lmax, std::abs(h(j)));
  const std::vector<double> path = log_path(lmax, config.lambda_path_ratio, config.lambda_path_size);

  BicLasso best;
  double best_bic = std::numeric_limits<double>::infinity();
  VectorXd beta = VectorXd::Zero(h.size());
  // Literal BIC over the whole path: a perfect fit wins, so in the q >= n
  // regime the selected fit may (near-)interpolate.
  for (double lambda : path) {
    const FitDiagnostics diag =
        solve_group_lasso_gram(singleton_gram, h, target_sq_n, lambda, config.lasso_tol,
                               std::min(config.lasso_max_iter, kPathMaxIter), beta);
    const double rss = rss_from_objective(singleton_gram, diag, lambda, beta);
    const double df = static_cast<double>((beta.array() != 0.0).count());
    const double bic = bic_score(n, rss, df);
    if (bic < best_bic) {
      best_bic = bic;
      best.lambda = lambda;
      best.beta = beta;
      best.bic = bic;
    }
  }
  return best;
}

VectorXd stability_selection(const Dataset& dataset, const TuningConfig& config, SeededRng& rng) {
  const Eigen::Index n = dataset.n();
  const Eigen::Index p = dataset.p();
  if (n < 4) throw InvalidInput("stability selection needs at least 4 rows");
  if (config.stability_subsamples < 1) throw InvalidInput("need at least one subsample");
  const int half = static_cast<int>(n / 2);

  const int b_total = config.stability_subsamples;
  std::vector<VectorXd> selected(b_total);
  std::vector<SeededRng> streams;
  streams.reserve(b_total);
  for (int b = 0; b < b_total; ++b) streams.push_back(rng.derive(static_cast<std::uint64_t>(b)));

  // Subsample fits run sequentially here; the heavy inner loops already
  // parallelize over treatments.
  TuningConfig sub_config = config;
  parallel_for(b_total, 1, [&](int b) {
    SeededRng stream = streams[b];
    const std::vector<int> rows = stream.sample_without_replacement(static_cast<int>(n), half);
    VectorXd y_sub(half);
    MatrixXd x_sub(half, p);
    MatrixXd z_sub(half, dataset.q());
    for (int i = 0; i < half; ++i) {
      y_sub(i) = dataset.y(rows[i]);
      x_sub.row(i) = dataset.x.row(rows[i]);
      z_sub.row(i) = dataset.z.row(rows[i]);
    }
    const Dataset sub = load_dataset(y_sub, x_sub, z_sub);
    const FirstStageSelection first = select_first_stage(sub, sub_config);

    const double mu_max = lambda_max_lasso(first.fit.x_hat, sub.y);
    const std::vector<double> path =
        log_path(mu_max, config.stability_mu_ratio, config.mu_path_size);
    VectorXd any_active = VectorXd::Zero(p);
    VectorXd beta = VectorXd::Zero(p);
    for (double mu : path) {
      solve_lasso_warm(first.fit.x_hat, sub.y, mu, config.lasso_tol, config.lasso_max_iter, beta);
      for (Eigen::Index l = 0; l < p; ++l) {
        if (beta(l) != 0.0) any_active(l) = 1.0;
      }
    }
    selected[b] = any_active;
  });

  VectorXd prob = VectorXd::Zero(p);
  for (int b = 0; b < b_total; ++b) prob += selected[b];
  prob /= static_cast<double>(b_total);
  return prob;
}

}  // namespace aiv
