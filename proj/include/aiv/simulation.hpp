#pragma once

#include "aiv/core.hpp"
#include "aiv/tuning.hpp"

namespace aiv {

enum class DesignKind { Linear, Nonlinear, NonlinearHard };
enum class Method { AdditiveIV, TwoSLSLasso, PLS };

std::string to_string(DesignKind kind);
std::string to_string(Method method);
DesignKind design_kind_from_string(const std::string& s);
Method method_from_string(const std::string& s);

struct DgpConfig {
  int n = 300;
  int p = 100;
  int q = 100;
  int r = 5;  // active instruments per treatment
  int s = 5;  // nonzero outcome coefficients
  DesignKind design_kind = DesignKind::Nonlinear;
  double z_corr_base = 0.2;
  double noise_corr_base = 0.2;
  double endogeneity_value = 0.3;
  int n_extra_endog = 5;
  std::uint64_t seed = 1;
};

struct SimulatedData {
  Dataset dataset;
  VectorXd true_beta;
  MatrixXd true_gamma;   // Linear: q x p; nonlinear designs: 5 x p component coefficients
  MatrixXd true_d;       // n x p, column-centered noiseless treatment means
  VectorXd true_eta;     // exactly y - x * beta on the centered data
  MatrixXd true_eps;     // exactly x - true_d
  std::vector<std::vector<int>> true_support_first;
  std::vector<int> true_support_second;
  double spd_shrink_factor = 1.0;  // 1 = noise covariance needed no repair
};

MatrixXd ar1_covariance(int dim, double base);

struct NoiseCovariance {
  MatrixXd sigma;   // (p+1) x (p+1); index 0 = outcome noise
  double shrink = 1.0;
};

// AR block for the treatment noises plus endogeneity couplings in the first
// row/column; shrunk toward block-diagonal if the raw matrix is not SPD.
NoiseCovariance build_noise_covariance(int p, const DgpConfig& config, SeededRng& rng);

// Rejects structurally invalid configurations (dimension and range checks).
void validate_dgp(const DgpConfig& config);

SimulatedData simulate(const DgpConfig& config, std::uint64_t stream_id = 0, int n_override = 0);

struct ReplicationRecord {
  int replication = 0;
  bool failed = false;
  std::string error;
  double l1_error = 0.0;
  double coverage = -1.0;   // < 0: not an inference run
  double ci_length = -1.0;
};

struct ExperimentReport {
  DgpConfig config;
  Method method = Method::AdditiveIV;
  int replications = 0;     // successful ones
  int failures = 0;
  double l1_error_mean = 0.0;
  double l1_error_sd = 0.0;
  double coverage_mean = -1.0;
  double ci_length_mean = -1.0;
  double wall_time_seconds = 0.0;
  bool sd_degenerate = false;  // single successful replication
  std::vector<ReplicationRecord> records;
};

struct ExperimentOptions {
  TuningConfig tuning;
  bool with_inference = false;
  double alpha = 0.05;
  int threads = 1;
};

VectorXd baseline_pls(const SimulatedData& simdata, const TuningConfig& config, SeededRng& rng);
VectorXd baseline_2sls_lasso(const SimulatedData& simdata, const TuningConfig& config,
                             SeededRng& rng);

// Per (config, method): seeded replications; replication k depends only on
// (config.seed, k), so the report is identical for any thread count.
std::vector<ExperimentReport> run_experiment(const std::vector<DgpConfig>& configs,
                                             const std::vector<Method>& methods,
                                             int replications, const ExperimentOptions& options);

}  // namespace aiv
