#include "aiv/simulation.hpp"

#include <chrono>
#include <cmath>

#include "aiv/inference.hpp"
#include "aiv/parallel.hpp"
#include "aiv/precision.hpp"

namespace aiv {

std::string to_string(DesignKind kind) {
  switch (kind) {
    case DesignKind::Linear: return "linear";
    case DesignKind::Nonlinear: return "nonlinear";
    case DesignKind::NonlinearHard: return "nonlinear-hard";
  }
  return "unknown";
}

std::string to_string(Method method) {
  switch (method) {
    case Method::AdditiveIV: return "additive-iv";
    case Method::TwoSLSLasso: return "2sls-l";
    case Method::PLS: return "pls";
  }
  return "unknown";
}

DesignKind design_kind_from_string(const std::string& s) {
  if (s == "linear") return DesignKind::Linear;
  if (s == "nonlinear") return DesignKind::Nonlinear;
  if (s == "nonlinear-hard") return DesignKind::NonlinearHard;
  throw InvalidInput("unknown design kind: " + s);
}

Method method_from_string(const std::string& s) {
  if (s == "additive-iv") return Method::AdditiveIV;
  if (s == "2sls-l") return Method::TwoSLSLasso;
  if (s == "pls") return Method::PLS;
  throw InvalidInput("unknown method: " + s);
}

MatrixXd ar1_covariance(int dim, double base) {
  if (dim < 1) throw InvalidInput("covariance dimension must be >= 1");
  if (!(base >= 0.0 && base < 1.0)) throw InvalidInput("AR base must lie in [0,1)");
  MatrixXd s(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) s(i, j) = std::pow(base, std::abs(i - j));
  }
  return s;
}

namespace {

bool min_eig_at_least(const MatrixXd& s, double floor_value) {
  const MatrixXd shifted = s - floor_value * MatrixXd::Identity(s.rows(), s.cols());
  return Eigen::LLT<MatrixXd>(shifted).info() == Eigen::Success;
}

}  // namespace

NoiseCovariance build_noise_covariance(int p, const DgpConfig& config, SeededRng& rng) {
  if (p < 6 + config.n_extra_endog) {
    throw InvalidInput("need p >= 6 + n_extra_endog = " +
                       std::to_string(6 + config.n_extra_endog) + ", got p = " +
                       std::to_string(p));
  }
  const int dim = p + 1;
  MatrixXd sigma = MatrixXd::Zero(dim, dim);
  sigma(0, 0) = 1.0;
  sigma.bottomRightCorner(p, p) = ar1_covariance(p, config.noise_corr_base);

  VectorXd couplings = VectorXd::Zero(dim);
  for (int l = 1; l <= 5; ++l) couplings(l) = config.endogeneity_value;
  if (config.n_extra_endog > 0) {
    const std::vector<int> extra = rng.sample_without_replacement(p - 5, config.n_extra_endog);
    for (int idx : extra) couplings(6 + idx) = config.endogeneity_value;
  }

  auto with_shrink = [&](double c) {
    MatrixXd s = sigma;
    for (int l = 1; l < dim; ++l) {
      s(0, l) = c * couplings(l);
      s(l, 0) = c * couplings(l);
    }
    return s;
  };

  NoiseCovariance out;
  out.sigma = with_shrink(1.0);
  out.shrink = 1.0;
  if (!min_eig_at_least(out.sigma, 1e-6)) {
    double lo = 0.0, hi = 1.0;  // lo is always feasible: block-diagonal
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (min_eig_at_least(with_shrink(mid), 1e-6)) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    out.shrink = lo;
    out.sigma = with_shrink(lo);
  }
  return out;
}

namespace {

// n x dim matrix of correlated normal rows via the Cholesky factor.
MatrixXd sample_gaussian_rows(int n, const MatrixXd& cov, SeededRng& rng) {
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw SolverError("covariance is not positive definite");
  const MatrixXd l = llt.matrixL();
  MatrixXd out(n, cov.rows());
  VectorXd u(cov.rows());
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < u.size(); ++j) u(j) = rng.next_normal();
    out.row(i) = (l * u).transpose();
  }
  return out;
}

void center_columns(MatrixXd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    m.col(j).array() -= m.col(j).mean();
    m.col(j).array() -= m.col(j).mean();
  }
}

double uniform_075_1(SeededRng& rng) { return 0.75 + 0.25 * rng.next_uniform(); }

// log(z^2) floor: keep |z| away from zero so the hard design stays finite.
double floored(double z) {
  if (std::abs(z) >= 1e-8) return z;
  return z >= 0.0 ? 1e-8 : -1e-8;
}

}  // namespace

void validate_dgp(const DgpConfig& config) {
  if (config.n < 2 || config.p < 1 || config.q < 1) {
    throw InvalidInput("invalid simulation dimensions");
  }
  if (config.r > config.q) throw InvalidInput("r cannot exceed q");
  if (config.s > config.p) throw InvalidInput("s cannot exceed p");
  if (config.design_kind != DesignKind::Linear && config.q < 5) {
    throw InvalidInput("nonlinear designs need q >= 5");
  }
  if (!(config.z_corr_base >= 0.0 && config.z_corr_base < 1.0) ||
      !(config.noise_corr_base >= 0.0 && config.noise_corr_base < 1.0)) {
    throw InvalidInput("correlation bases must lie in [0,1)");
  }
  if (config.n_extra_endog < 0) throw InvalidInput("n_extra_endog must be >= 0");
  if (config.p < 6 + config.n_extra_endog) {
    throw InvalidInput("need p >= 6 + n_extra_endog = " +
                       std::to_string(6 + config.n_extra_endog) + ", got p = " +
                       std::to_string(config.p));
  }
}

SimulatedData simulate(const DgpConfig& config, std::uint64_t stream_id, int n_override) {
  DgpConfig checked = config;
  if (n_override > 0) checked.n = n_override;
  validate_dgp(checked);
  const int n = checked.n;
  const int p = config.p;
  const int q = config.q;

  SeededRng root(config.seed, stream_id);
  SeededRng rng_z = root.derive(1);
  SeededRng rng_cov = root.derive(2);
  SeededRng rng_noise = root.derive(3);
  SeededRng rng_gamma = root.derive(4);
  SeededRng rng_beta = root.derive(5);

  const MatrixXd z = sample_gaussian_rows(n, ar1_covariance(q, config.z_corr_base), rng_z);

  const NoiseCovariance noise_cov = build_noise_covariance(p, config, rng_cov);
  const MatrixXd noise = sample_gaussian_rows(n, noise_cov.sigma, rng_noise);
  const VectorXd eta_raw = noise.col(0);
  const MatrixXd eps_raw = noise.rightCols(p);

  SimulatedData sim;
  sim.spd_shrink_factor = noise_cov.shrink;
  sim.true_support_first.resize(p);

  MatrixXd f(n, p);
  if (config.design_kind == DesignKind::Linear) {
    sim.true_gamma = MatrixXd::Zero(q, p);
    for (int l = 0; l < p; ++l) {
      std::vector<int> rows = rng_gamma.sample_without_replacement(q, config.r);
      std::sort(rows.begin(), rows.end());
      for (int j : rows) sim.true_gamma(j, l) = uniform_075_1(rng_gamma);
      sim.true_support_first[l] = rows;
    }
    f.noalias() = z * sim.true_gamma;
  } else {
    // Five fixed component shapes on a per-treatment random support of five
    // instruments, sampled like the linear design's column supports. A
    // common fixed support would make F rank-5 and leave beta unidentified.
    sim.true_gamma = MatrixXd::Zero(5, p);
    for (int l = 0; l < p; ++l) {
      std::vector<int> rows = rng_gamma.sample_without_replacement(q, 5);
      std::sort(rows.begin(), rows.end());
      for (int j = 0; j < 5; ++j) sim.true_gamma(j, l) = uniform_075_1(rng_gamma);
      sim.true_support_first[l] = rows;
    }
    for (int i = 0; i < n; ++i) {
      for (int l = 0; l < p; ++l) {
        const double* g = sim.true_gamma.col(l).data();
        const auto& sup = sim.true_support_first[l];
        const double z1 = z(i, sup[0]), z2 = z(i, sup[1]), z3 = z(i, sup[2]),
                     z4 = z(i, sup[3]), z5 = z(i, sup[4]);
        double v;
        if (config.design_kind == DesignKind::Nonlinear) {
          v = g[0] * z1 * z1 + g[1] * z2 + g[2] * z3 * z3 + g[3] * std::sin(M_PI * z4) +
              g[4] * z5 * z5;
        } else {
          const double zf = floored(z3);
          v = -8.0 * g[0] * z1 * z1 + g[1] * std::sin(M_PI * z2) + 2.0 * g[2] * std::log(zf * zf) +
              g[3] * std::pow(10.0 * z4, 3) + g[4] * z5 * z5;
        }
        f(i, l) = v;
      }
    }
  }

  sim.true_beta = VectorXd::Zero(p);
  std::vector<int> beta_rows = rng_beta.sample_without_replacement(p, config.s);
  std::sort(beta_rows.begin(), beta_rows.end());
  for (int l : beta_rows) {
    const double sign = rng_beta.next_uniform() < 0.5 ? -1.0 : 1.0;
    sim.true_beta(l) = sign * uniform_075_1(rng_beta);
  }
  sim.true_support_second = beta_rows;

  const MatrixXd x_raw = f + eps_raw;
  const VectorXd y_raw = x_raw * sim.true_beta + eta_raw;
  sim.dataset = load_dataset(y_raw, x_raw, z);

  // Center the truth the same way, then define the residual pieces by exact
  // differences so the stored identities hold bitwise.
  sim.true_d = f;
  center_columns(sim.true_d);
  sim.true_eps = sim.dataset.x - sim.true_d;
  sim.true_eta = sim.dataset.y - sim.dataset.x * sim.true_beta;
  return sim;
}

VectorXd baseline_pls(const SimulatedData& simdata, const TuningConfig& config, SeededRng& rng) {
  return cv_lasso(simdata.dataset.x, simdata.dataset.y, config, rng).beta;
}

VectorXd baseline_2sls_lasso(const SimulatedData& simdata, const TuningConfig& config,
                             SeededRng& rng) {
  const Dataset& data = simdata.dataset;
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  const Eigen::Index q = data.q();

  // Linear first stage on column-centered instruments (no intercept anywhere).
  MatrixXd z_c = data.z;
  for (Eigen::Index j = 0; j < q; ++j) {
    z_c.col(j).array() -= z_c.col(j).mean();
    z_c.col(j).array() -= z_c.col(j).mean();
  }
  std::vector<int> offsets(q);
  for (Eigen::Index j = 0; j < q; ++j) offsets[j] = static_cast<int>(j);
  const GroupGram gram = make_group_gram(z_c, offsets, 1);

  MatrixXd x_hat_lin(n, p);
  for (Eigen::Index l = 0; l < p; ++l) {
    const VectorXd h = z_c.transpose() * data.x.col(l) / static_cast<double>(n);
    const double tsq = data.x.col(l).squaredNorm() / static_cast<double>(n);
    const BicLasso first = bic_lasso_path(gram, h, tsq, n, config);
    x_hat_lin.col(l) = z_c * first.beta;
  }
  return cv_lasso(x_hat_lin, data.y, config, rng).beta;
}

namespace {

struct TaskOutcome {
  ReplicationRecord record;
  double seconds = 0.0;
};

TaskOutcome run_one(const DgpConfig& config, Method method, int rep,
                    const ExperimentOptions& options) {
  TaskOutcome out;
  out.record.replication = rep;
  const auto start = std::chrono::steady_clock::now();
  try {
    const SimulatedData sim = simulate(config, static_cast<std::uint64_t>(rep));
    SeededRng task_rng = SeededRng(config.seed, static_cast<std::uint64_t>(rep))
                             .derive(100 + static_cast<std::uint64_t>(method));
    TuningConfig tuning = options.tuning;
    tuning.threads = 1;  // parallelism lives at the replication level

    VectorXd beta_est;
    if (method == Method::AdditiveIV) {
      const FirstStageSelection first = select_first_stage(sim.dataset, tuning);
      const MuSelection second = select_mu_cv(first.fit, sim.dataset, tuning, task_rng);
      beta_est = second.fit.beta_hat;
      if (options.with_inference) {
        const MatrixXd sigma = sample_sigma_f(first.fit);
        const PrecisionEstimate prec = estimate_precision_scaled(sigma, 1);
        const VectorXd beta_tilde = debias(second.fit.beta_hat, prec, first.fit, sim.dataset);
        const OmegaHat omega = omega_hat(prec, second.fit.sigma0_hat);
        const InferenceResult ci = confidence_intervals(beta_tilde, omega, sim.dataset.n(),
                                                        options.alpha, second.fit.sigma0_hat);
        int covered = 0;
        double length = 0.0;
        for (Eigen::Index l = 0; l < sim.true_beta.size(); ++l) {
          if (ci.ci_lower(l) <= sim.true_beta(l) && sim.true_beta(l) <= ci.ci_upper(l)) ++covered;
          length += ci.ci_upper(l) - ci.ci_lower(l);
        }
        out.record.coverage = static_cast<double>(covered) / sim.true_beta.size();
        out.record.ci_length = length / sim.true_beta.size();
      }
    } else if (method == Method::TwoSLSLasso) {
      beta_est = baseline_2sls_lasso(sim, tuning, task_rng);
    } else {
      beta_est = baseline_pls(sim, tuning, task_rng);
    }
    out.record.l1_error = (beta_est - sim.true_beta).lpNorm<1>();
  } catch (const std::exception& e) {
    out.record.failed = true;
    out.record.error = e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace

std::vector<ExperimentReport> run_experiment(const std::vector<DgpConfig>& configs,
                                             const std::vector<Method>& methods,
                                             int replications, const ExperimentOptions& options) {
  if (replications < 1) throw InvalidInput("need at least one replication");
  if (configs.empty() || methods.empty()) throw InvalidInput("nothing to run");

  struct Task {
    int config_idx;
    int method_idx;
    int rep;
  };
  std::vector<Task> tasks;
  for (int c = 0; c < static_cast<int>(configs.size()); ++c) {
    for (int m = 0; m < static_cast<int>(methods.size()); ++m) {
      for (int k = 0; k < replications; ++k) tasks.push_back({c, m, k});
    }
  }
  std::vector<TaskOutcome> outcomes(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), options.threads, [&](int i) {
    const Task& t = tasks[i];
    outcomes[i] = run_one(configs[t.config_idx], methods[t.method_idx], t.rep, options);
  });

  std::vector<ExperimentReport> reports;
  std::size_t cursor = 0;
  for (const auto& config : configs) {
    for (const auto& method : methods) {
      ExperimentReport rep;
      rep.config = config;
      rep.method = method;
      double sum = 0.0, cov_sum = 0.0, len_sum = 0.0;
      int ok = 0, cov_n = 0;
      for (int k = 0; k < replications; ++k, ++cursor) {
        const TaskOutcome& o = outcomes[cursor];
        rep.wall_time_seconds += o.seconds;
        rep.records.push_back(o.record);
        if (o.record.failed) {
          ++rep.failures;
          continue;
        }
        ++ok;
        sum += o.record.l1_error;
        if (o.record.coverage >= 0.0) {
          ++cov_n;
          cov_sum += o.record.coverage;
          len_sum += o.record.ci_length;
        }
      }
      rep.replications = ok;
      if (ok > 0) {
        rep.l1_error_mean = sum / ok;
        double ss = 0.0;
        for (const auto& r : rep.records) {
          if (!r.failed) ss += (r.l1_error - rep.l1_error_mean) * (r.l1_error - rep.l1_error_mean);
        }
        rep.l1_error_sd = ok > 1 ? std::sqrt(ss / (ok - 1)) : 0.0;
        rep.sd_degenerate = ok == 1;
      }
      if (cov_n > 0) {
        rep.coverage_mean = cov_sum / cov_n;
        rep.ci_length_mean = len_sum / cov_n;
      }
      reports.push_back(std::move(rep));
    }
  }
  return reports;
}

}  // namespace aiv
