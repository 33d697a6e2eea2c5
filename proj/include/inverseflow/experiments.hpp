#pragma once

#include "inverseflow/artifacts.hpp"
#include "inverseflow/cinn_train.hpp"
#include "inverseflow/inversion.hpp"
#include "inverseflow/metrics.hpp"
#include "inverseflow/mfgp.hpp"
#include "inverseflow/pca.hpp"
#include "inverseflow/problems.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace inverseflow {

nlohmann::json gp_fit_config_to_json(const GpFitConfig& c);
GpFitConfig gp_fit_config_from_json(const nlohmann::json& j, GpFitConfig defaults = {});

// ---------------------------------------------------------------- toy
struct ToyConfig {
  double noise_std = 0.5;
  double L_x = 4.0;
  CinnArch arch = default_arch();
  TrainConfig train = default_train();
  std::vector<double> targets{0.0, 2.0, 10.0};
  Eigen::Index samples = 1000;
  Eigen::Index calibration_size = 10000;
  Eigen::Index oracle_samples = 4000;
  int hist_bins = 50;
  double hist_half_width = 2.5;

  static CinnArch default_arch();
  static TrainConfig default_train();
  nlohmann::json to_json() const;
  static ToyConfig from_json(const nlohmann::json& j);
};

struct ToyTargetStats {
  double y = 0.0;
  SummaryStats radius;
  SummaryStats oracle_radius;
  double median_abs_radius_error = 0.0;  // median |r - sqrt(y)|
  double mean_abs_forward_error = 0.0;   // mean |f(x) - y|, noiseless f
  double fraction_inside_2 = 0.0;        // samples with r < 2
};

struct ToyReport {
  std::vector<ToyTargetStats> targets;
  std::vector<double> epoch_nll;
  double initial_nll = 0.0;
  CinnModel model;
};

ToyReport run_toy(const ToyConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------- MF study
struct MfStudyConfig {
  int repetitions = 5;
  double budget = 12.0;  // equivalent cost for the MFGP run
  std::vector<double> sf_budgets{4.0, 6.0, 8.0, 10.0, 12.0};
  double cost_ratio = 5.0;
  Eigen::Index n_high_init = 3;
  Eigen::Index n_low_init = 10;  // 0 selects the degenerate high-only mode
  Eigen::Index candidates = 200;
  int refit_every = 3;
  Eigen::Index holdout_points = 101;
  GpFitConfig gp = default_gp();
  bool fit_scale = true;

  static GpFitConfig default_gp();
  nlohmann::json to_json() const;
  static MfStudyConfig from_json(const nlohmann::json& j);
};

struct MfCurvePoint {
  int repetition = 0;
  std::string method;  // "mfgp" or "sfgp"
  Eigen::Index n_high = 0;
  Eigen::Index n_low = 0;
  double cost = 0.0;
  double nrmse = 0.0;
};

struct MfStudyReport {
  std::vector<MfCurvePoint> curve;
  std::vector<double> mf_nrmse;  // at the final budget, per repetition
  std::vector<double> sf_nrmse;  // single-fidelity at the matched budget
  std::vector<double> rho;
  int mf_wins = 0;
  bool degenerate = false;
};

MfStudyReport run_mf_study(const MfStudyConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------- blade-like
struct BladeConfig {
  std::uint64_t problem_seed = 7;
  // DOE
  Eigen::Index n_high_init = 120;
  Eigen::Index n_low_init = 240;
  int adaptive_rounds = 20;
  int refit_every = 10;
  Eigen::Index candidates = 500;
  double cost_ratio = 5.0;
  double holdout_fraction = 0.1;
  GpFitConfig gp = default_gp();
  // Reduction
  double pca_threshold = 0.90;
  Eigen::Index pca_max_components = 8;
  ProfileCodec::Mode pca_mode = ProfileCodec::Mode::Joint;
  // Inverse surrogate
  Eigen::Index pairs = 10000;
  bool sampled_pairs = false;  // posterior draws instead of the posterior mean
  CinnArch arch = default_arch();
  TrainConfig train = default_train();
  // Validation
  Eigen::Index targets = 100;
  Eigen::Index samples = 1000;
  bool box_filter = true;
  double r2_threshold = 0.9;
  Eigen::Index profile_exports = 5;

  static GpFitConfig default_gp();
  static CinnArch default_arch();
  static TrainConfig default_train();
  nlohmann::json to_json() const;
  static BladeConfig from_json(const nlohmann::json& j);
};

struct MetricRow {
  std::string name;
  double nrmse = 0.0;
  double r2 = 0.0;
  double mean_spread = 0.0;  // mean over targets of the candidate std (inverse rows only)
};

struct ValidationReport {
  std::vector<MetricRow> forward_rows;  // Efficiency, Pseudo reaction, PCA-1..k
  std::vector<MetricRow> inverse_rows;  // Efficiency, Pseudo Reaction
  double pca_energy = 0.0;
  Eigen::Index pca_components = 0;
  Eigen::Index candidates_kept = 0;
  Eigen::Index candidates_total = 0;
  bool passed = false;
  // Per target: mean and spread over candidates of every surrogate output.
  Mat output_mean;
  Mat output_spread;

  nlohmann::ordered_json to_json() const;
};

struct BladeReport {
  ValidationReport validation;
  std::vector<double> epoch_nll;
  Eigen::Index n_high = 0;
  Eigen::Index n_low = 0;
};

BladeReport run_blade_like(const BladeConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir);

// Inverse-consistency check shared by run_blade_like and the validate command.
// targets holds one observation per row; its leading columns are the scalar
// objectives that the surrogate's leading outputs predict.
ValidationReport validate_inverse(const CinnModel& model, const MultiOutputSurrogate& surrogate, const Mat& targets,
                                  Eigen::Index samples, std::uint64_t seed, bool box_filter, double r2_threshold);

}  // namespace inverseflow
