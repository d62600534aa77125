#include "aiv/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "aiv/csv.hpp"
#include "aiv/inference.hpp"
#include "aiv/parallel.hpp"
#include "aiv/precision.hpp"
#include "aiv/simulation.hpp"
#include "aiv/tuning.hpp"

namespace aiv {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitConvergence = 3;
constexpr int kExitInfeasible = 4;

struct CommonOptions {
  std::string y_path, x_path, z_path;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  int threads = 0;
  double alpha = 0.05;
  std::string format = "json";
  bool strict = false;
  std::vector<int> k_grid;
  int folds = 5;
  int subsamples = 100;
  double threshold = 0.5;
  bool shared_lambda = false;
  int max_iter = 0;  // 0: solver defaults
};

int resolved_threads(int flag_value) {
  return flag_value > 0 ? flag_value : default_threads();
}

TuningConfig make_tuning(const CommonOptions& opt) {
  TuningConfig t;
  t.k_grid = opt.k_grid;
  t.cv_folds = opt.folds;
  t.stability_subsamples = opt.subsamples;
  t.stability_threshold = opt.threshold;
  t.shared_lambda = opt.shared_lambda;
  t.threads = resolved_threads(opt.threads);
  if (opt.max_iter > 0) {
    t.group_max_iter = opt.max_iter;
    t.lasso_max_iter = opt.max_iter;
  }
  return t;
}

Dataset load_inputs(const CommonOptions& opt) {
  if (opt.y_path.empty() || opt.x_path.empty() || opt.z_path.empty()) {
    throw InvalidInput("--y, --x and --z are all required");
  }
  const VectorXd y = read_csv_vector(opt.y_path);
  const MatrixXd x = read_csv_matrix(opt.x_path);
  const MatrixXd z = read_csv_matrix(opt.z_path);
  return load_dataset(y, x, z);
}

json diagnostics_json(const FitDiagnostics& d) {
  return json{{"iterations", d.iterations},
              {"final_objective", d.final_objective},
              {"kkt_residual", d.kkt_residual},
              {"converged", d.converged}};
}

json vector_json(const VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

json tuning_json(const TuningConfig& t) {
  return json{{"k_grid", t.k_grid},
              {"lambda_path_size", t.lambda_path_size},
              {"lambda_path_ratio", t.lambda_path_ratio},
              {"mu_path_size", t.mu_path_size},
              {"mu_path_ratio", t.mu_path_ratio},
              {"cv_folds", t.cv_folds},
              {"stability_subsamples", t.stability_subsamples},
              {"stability_threshold", t.stability_threshold},
              {"stability_mu_ratio", t.stability_mu_ratio},
              {"shared_lambda", t.shared_lambda},
              {"spline_order", t.spline_order},
              {"threads", t.threads}};
}

json dgp_json(const DgpConfig& c) {
  return json{{"n", c.n},
              {"p", c.p},
              {"q", c.q},
              {"r", c.r},
              {"s", c.s},
              {"design", to_string(c.design_kind)},
              {"z_corr_base", c.z_corr_base},
              {"noise_corr_base", c.noise_corr_base},
              {"endogeneity_value", c.endogeneity_value},
              {"n_extra_endog", c.n_extra_endog},
              {"seed", c.seed}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

bool all_converged(const FirstStageFit& fit, const SecondStageFit& second) {
  for (const auto& d : fit.diagnostics) {
    if (!d.converged) return false;
  }
  return second.diagnostics.converged;
}

struct FitArtifacts {
  Dataset dataset;
  FirstStageSelection first;
  MuSelection second;
  TuningConfig tuning;
};

FitArtifacts run_fit_pipeline(const CommonOptions& opt) {
  FitArtifacts art;
  art.dataset = load_inputs(opt);
  art.tuning = make_tuning(opt);
  SeededRng rng(opt.seed, 0);
  art.first = select_first_stage(art.dataset, art.tuning);
  SeededRng cv_rng = rng.derive(7);
  art.second = select_mu_cv(art.first.fit, art.dataset, art.tuning, cv_rng);
  return art;
}

json fit_report_json(const CommonOptions& opt, const FitArtifacts& art) {
  json first_diag = json::array();
  for (const auto& d : art.first.fit.diagnostics) first_diag.push_back(diagnostics_json(d));
  json active_groups = json::array();
  for (const auto& groups : art.first.fit.active_groups) active_groups.push_back(groups);
  return json{{"version", 1},
              {"kind", "fit"},
              {"seed", opt.seed},
              {"alpha", opt.alpha},
              {"tuning", tuning_json(art.tuning)},
              {"selected",
               json{{"interior_knots", art.first.interior_knots},
                    {"lambdas", vector_json(art.first.fit.lambdas)},
                    {"mu", art.second.mu}}},
              {"beta_hat", vector_json(art.second.fit.beta_hat)},
              {"sigma0_hat", art.second.fit.sigma0_hat},
              {"active_set", art.second.fit.active_set},
              {"active_groups", active_groups},
              {"diagnostics",
               json{{"first_stage", first_diag},
                    {"second_stage", diagnostics_json(art.second.fit.diagnostics)}}}};
}

void write_components_csv(const fs::path& path, const FitArtifacts& art) {
  const int grid_points = 100;
  const SplineDesign& design = art.first.design;
  const int m = design.m();
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << "treatment,instrument,z,value\n";
  for (Eigen::Index l = 0; l < art.dataset.p(); ++l) {
    for (int j : art.first.fit.active_groups[l]) {
      const SplineSpec& spec = design.specs[j];
      VectorXd grid(grid_points);
      for (int g = 0; g < grid_points; ++g) {
        grid(g) = spec.range_a + (spec.range_b - spec.range_a) * g / (grid_points - 1);
      }
      const VectorXd gamma_block =
          art.first.fit.gamma_hat.col(l).segment(design.group_offsets[j], m);
      const VectorXd values = eval_fitted_function(design, gamma_block, j, grid);
      for (int g = 0; g < grid_points; ++g) {
        out << (l + 1) << "," << (j + 1) << "," << format_full(grid(g)) << ","
            << format_full(values(g)) << "\n";
      }
    }
  }
}

void write_beta_csv(const fs::path& path, const VectorXd& beta) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << "coordinate,beta\n";
  for (Eigen::Index l = 0; l < beta.size(); ++l) {
    out << (l + 1) << "," << format_full(beta(l)) << "\n";
  }
}

int cmd_fit(const CommonOptions& opt) {
  const FitArtifacts art = run_fit_pipeline(opt);
  fs::create_directories(opt.out_dir);
  write_json(fs::path(opt.out_dir) / "fit.json", fit_report_json(opt, art));
  write_components_csv(fs::path(opt.out_dir) / "components.csv", art);
  if (opt.format == "csv") {
    write_beta_csv(fs::path(opt.out_dir) / "fit.csv", art.second.fit.beta_hat);
  }
  if (opt.strict && !all_converged(art.first.fit, art.second.fit)) {
    std::cerr << "solver did not converge (strict mode)\n";
    return kExitConvergence;
  }
  return kExitOk;
}

int cmd_infer(const CommonOptions& opt) {
  const FitArtifacts art = run_fit_pipeline(opt);
  const int threads = art.tuning.threads;

  const MatrixXd sigma = sample_sigma_f(art.first.fit);
  const PrecisionEstimate prec = estimate_precision_scaled(sigma, threads);
  const double upsilon = prec.upsilon;
  const VectorXd beta_tilde = debias(art.second.fit.beta_hat, prec, art.first.fit, art.dataset);
  const OmegaHat omega = omega_hat(prec, art.second.fit.sigma0_hat);
  const InferenceResult ci = confidence_intervals(beta_tilde, omega, art.dataset.n(), opt.alpha,
                                                  art.second.fit.sigma0_hat);

  json report = fit_report_json(opt, art);
  report["kind"] = "infer";
  report["upsilon"] = upsilon;
  report["feasibility_flags"] = prec.feasibility_flags;
  report["beta_tilde"] = vector_json(ci.beta_tilde);
  report["omega_hat"] = vector_json(ci.omega_hat);
  report["ci_lower"] = vector_json(ci.ci_lower);
  report["ci_upper"] = vector_json(ci.ci_upper);
  report["clamped_variances"] = ci.clamped_variances;

  fs::create_directories(opt.out_dir);
  write_json(fs::path(opt.out_dir) / "infer.json", report);
  write_components_csv(fs::path(opt.out_dir) / "components.csv", art);

  // Intervals sorted by |beta_tilde|, flagging those excluding zero.
  std::vector<int> order(ci.beta_tilde.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(ci.beta_tilde(a)) > std::abs(ci.beta_tilde(b));
  });
  std::ofstream intervals(fs::path(opt.out_dir) / "intervals.csv");
  intervals << "coordinate,beta_tilde,omega_hat,ci_lower,ci_upper,excludes_zero\n";
  for (int l : order) {
    const bool excludes = ci.ci_lower(l) > 0.0 || ci.ci_upper(l) < 0.0;
    intervals << (l + 1) << "," << format_full(ci.beta_tilde(l)) << ","
              << format_full(ci.omega_hat(l)) << "," << format_full(ci.ci_lower(l)) << ","
              << format_full(ci.ci_upper(l)) << "," << (excludes ? 1 : 0) << "\n";
  }
  if (opt.format == "csv") {
    write_beta_csv(fs::path(opt.out_dir) / "fit.csv", art.second.fit.beta_hat);
  }
  if (opt.strict && !all_converged(art.first.fit, art.second.fit)) {
    std::cerr << "solver did not converge (strict mode)\n";
    return kExitConvergence;
  }
  return kExitOk;
}

DgpConfig dgp_from_json(const json& j) {
  DgpConfig c;
  if (j.contains("n")) c.n = j.at("n").get<int>();
  if (j.contains("p")) c.p = j.at("p").get<int>();
  if (j.contains("q")) c.q = j.at("q").get<int>();
  if (j.contains("r")) c.r = j.at("r").get<int>();
  if (j.contains("s")) c.s = j.at("s").get<int>();
  if (j.contains("design")) c.design_kind = design_kind_from_string(j.at("design").get<std::string>());
  if (j.contains("z_corr_base")) c.z_corr_base = j.at("z_corr_base").get<double>();
  if (j.contains("noise_corr_base")) c.noise_corr_base = j.at("noise_corr_base").get<double>();
  if (j.contains("endogeneity_value")) c.endogeneity_value = j.at("endogeneity_value").get<double>();
  if (j.contains("n_extra_endog")) c.n_extra_endog = j.at("n_extra_endog").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

struct SimulateOptions {
  CommonOptions common;
  std::string dgp_spec;  // inline JSON or a path
  int n = 0, p = 0, q = 0;
  std::string design = "nonlinear";
  int reps = 20;
  std::vector<std::string> method_names;
  bool with_inference = false;
};

int cmd_simulate(const SimulateOptions& opt) {
  DgpConfig config;
  if (!opt.dgp_spec.empty()) {
    json j;
    if (!opt.dgp_spec.empty() && opt.dgp_spec.front() == '{') {
      j = json::parse(opt.dgp_spec);
    } else {
      std::ifstream in(opt.dgp_spec);
      if (!in) throw InvalidInput("cannot open DGP config: " + opt.dgp_spec);
      in >> j;
    }
    config = dgp_from_json(j);
  }
  if (opt.n > 0) config.n = opt.n;
  if (opt.p > 0) config.p = opt.p;
  if (opt.q > 0) config.q = opt.q;
  if (!opt.design.empty()) config.design_kind = design_kind_from_string(opt.design);
  config.seed = opt.common.seed;
  validate_dgp(config);

  std::vector<Method> methods;
  if (opt.method_names.empty()) {
    methods = {Method::AdditiveIV, Method::TwoSLSLasso, Method::PLS};
  } else {
    for (const auto& name : opt.method_names) methods.push_back(method_from_string(name));
  }

  ExperimentOptions exp;
  exp.tuning = make_tuning(opt.common);
  exp.with_inference = opt.with_inference;
  exp.alpha = opt.common.alpha;
  exp.threads = resolved_threads(opt.common.threads);

  const std::vector<ExperimentReport> reports =
      run_experiment({config}, methods, opt.reps, exp);

  fs::create_directories(opt.common.out_dir);
  json out = json::array();
  for (const auto& r : reports) {
    out.push_back(json{{"config", dgp_json(r.config)},
                       {"method", to_string(r.method)},
                       {"replications", r.replications},
                       {"failures", r.failures},
                       {"l1_error_mean", r.l1_error_mean},
                       {"l1_error_sd", r.l1_error_sd},
                       {"sd_degenerate", r.sd_degenerate},
                       {"coverage_mean", r.coverage_mean},
                       {"ci_length_mean", r.ci_length_mean},
                       {"wall_time_seconds", r.wall_time_seconds}});
  }
  write_json(fs::path(opt.common.out_dir) / "experiment_report.json",
             json{{"version", 1}, {"kind", "experiment"}, {"reports", out}});

  std::ofstream results(fs::path(opt.common.out_dir) / "results.csv");
  results << "design,n,p,q,method,replication,metric,value\n";
  for (const auto& r : reports) {
    const std::string prefix = to_string(r.config.design_kind) + "," +
                               std::to_string(r.config.n) + "," + std::to_string(r.config.p) +
                               "," + std::to_string(r.config.q) + "," + to_string(r.method);
    for (const auto& rec : r.records) {
      if (rec.failed) {
        results << prefix << "," << rec.replication << ",failed,1\n";
        continue;
      }
      results << prefix << "," << rec.replication << ",l1_error," << format_full(rec.l1_error)
              << "\n";
      if (rec.coverage >= 0.0) {
        results << prefix << "," << rec.replication << ",coverage," << format_full(rec.coverage)
                << "\n";
        results << prefix << "," << rec.replication << ",ci_length,"
                << format_full(rec.ci_length) << "\n";
      }
    }
  }
  return kExitOk;
}

int cmd_stability(const CommonOptions& opt) {
  const Dataset dataset = load_inputs(opt);
  TuningConfig tuning = make_tuning(opt);
  SeededRng rng(opt.seed, 0);
  const VectorXd prob = stability_selection(dataset, tuning, rng);

  fs::create_directories(opt.out_dir);
  std::ofstream out(fs::path(opt.out_dir) / "stability.csv");
  if (!out) throw InvalidInput("cannot write stability.csv");
  out << "coordinate,probability,selected\n";
  for (Eigen::Index l = 0; l < prob.size(); ++l) {
    // Strictly above the threshold counts as selected.
    out << (l + 1) << "," << format_full(prob(l)) << ","
        << (prob(l) > tuning.stability_threshold ? 1 : 0) << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Two-stage additive instrumental-variables regression"};
  app.require_subcommand(1);

  CommonOptions fit_opt, infer_opt, stab_opt;
  SimulateOptions sim_opt;

  auto add_data_flags = [](CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--y", opt.y_path, "outcome CSV (single column)")->required();
    cmd->add_option("--x", opt.x_path, "treatment matrix CSV")->required();
    cmd->add_option("--z", opt.z_path, "instrument matrix CSV")->required();
  };
  auto add_common_flags = [](CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--out", opt.out_dir, "output directory");
    cmd->add_option("--seed", opt.seed, "RNG seed");
    cmd->add_option("--threads", opt.threads, "worker threads (0: ADDITIVE_IV_THREADS or hardware)");
    cmd->add_option("--alpha", opt.alpha, "two-sided confidence level");
    cmd->add_option("--k-grid", opt.k_grid, "candidate interior knot counts")->delimiter(',');
    cmd->add_option("--folds", opt.folds, "cross-validation folds");
    cmd->add_option("--format", opt.format, "report format: json or csv")
        ->check(CLI::IsMember({"json", "csv"}));
    cmd->add_flag("--strict", opt.strict, "exit 3 if any solver fails to converge");
    cmd->add_flag("--shared-lambda", opt.shared_lambda, "one first-stage lambda across treatments");
    cmd->add_option("--max-iter", opt.max_iter, "solver sweep cap (0: defaults)");
  };

  CLI::App* fit = app.add_subcommand("fit", "two-stage fit on CSV data");
  add_data_flags(fit, fit_opt);
  add_common_flags(fit, fit_opt);

  CLI::App* infer = app.add_subcommand("infer", "fit plus debiased confidence intervals");
  add_data_flags(infer, infer_opt);
  add_common_flags(infer, infer_opt);

  CLI::App* simulate = app.add_subcommand("simulate", "Monte-Carlo experiments");
  add_common_flags(simulate, sim_opt.common);
  simulate->add_option("--dgp", sim_opt.dgp_spec, "DGP config: inline JSON or a path");
  simulate->add_option("--n", sim_opt.n, "sample size");
  simulate->add_option("--p", sim_opt.p, "number of treatments");
  simulate->add_option("--q", sim_opt.q, "number of instruments");
  simulate->add_option("--design", sim_opt.design, "linear|nonlinear|nonlinear-hard")
      ->check(CLI::IsMember({"linear", "nonlinear", "nonlinear-hard"}));
  simulate->add_option("--reps", sim_opt.reps, "replications");
  simulate->add_option("--method", sim_opt.method_names, "additive-iv|2sls-l|pls (repeatable)")
      ->check(CLI::IsMember({"additive-iv", "2sls-l", "pls"}));
  simulate->add_flag("--with-inference", sim_opt.with_inference,
                     "also compute debiased CIs and coverage (additive-iv)");

  CLI::App* stability = app.add_subcommand("stability", "stability selection probabilities");
  add_data_flags(stability, stab_opt);
  add_common_flags(stability, stab_opt);
  stability->add_option("--subsamples", stab_opt.subsamples, "number of half subsamples");
  stability->add_option("--threshold", stab_opt.threshold, "reporting threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitInput;
  }

  try {
    if (fit->parsed()) return cmd_fit(fit_opt);
    if (infer->parsed()) return cmd_infer(infer_opt);
    if (simulate->parsed()) return cmd_simulate(sim_opt);
    if (stability->parsed()) return cmd_stability(stab_opt);
    return kExitInput;
  } catch (const NoFeasibleUpsilon& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace aiv
