#pragma once

#include "inverseflow/common.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace inverseflow {

// Squared-exponential kernel hyperparameters: signal std, per-dimension inverse
// length scales, residual std.
struct GpHyper {
  double sigma = 1.0;
  Vec beta;
  double lambda = 0.0;

  void validate(Eigen::Index dim) const;
};

struct LogNormal {
  double mean_log = 0.0;
  double std_log = 1.0;

  double log_density(double x) const;
};

struct HyperPrior {
  LogNormal sigma{0.0, 1.0};
  std::vector<LogNormal> beta{LogNormal{0.0, 1.0}};  // one entry is broadcast to every dimension
  LogNormal lambda{std::log(0.1), 1.0};
  bool lambda_fixed = false;  // fixed lambda contributes no prior term

  const LogNormal& beta_prior(Eigen::Index k) const;
  double log_density(const GpHyper& h) const;

  nlohmann::json to_json() const;
  static HyperPrior from_json(const nlohmann::json& j);
};

double kernel_eval(const Vec& a, const Vec& b, const GpHyper& h, bool same_index);

// K(i,j) = k(x_i, x_j) with lambda^2 on the diagonal only. No jitter.
Mat build_cov(const Mat& x, const GpHyper& h);

inline constexpr double kJitterStart = 1e-8;
inline constexpr double kJitterMax = 1e-4;

struct CovFactor {
  Mat lower;
  double jitter = 0.0;  // absolute value added to the diagonal
};

// Cholesky of K + jitter*I with jitter escalated from 1e-8 sigma^2 to 1e-4 sigma^2.
CovFactor factorize_cov(const Mat& k, double sigma);

// log N(y | 0, K + jitter I), 2*pi constant included.
double log_likelihood(const Mat& x, const Vec& y, const GpHyper& h);
double log_posterior(const Mat& x, const Vec& y, const GpHyper& h, const HyperPrior& prior);

struct McmcConfig {
  int n_steps = 5000;
  int n_burn = 2000;
  int n_keep = 50;
  std::uint64_t seed = 0;
  double target_accept = 0.25;
  double init_step = 0.1;

  void validate() const;
  nlohmann::json to_json() const;
  static McmcConfig from_json(const nlohmann::json& j);
};

struct McmcChain {
  std::vector<Vec> kept;
  std::vector<double> kept_log_target;
  double acceptance_rate = 0.0;  // post burn-in
  std::vector<std::string> warnings;
};

// Adaptive random-walk Metropolis. The proposal scale is tuned toward
// target_accept during burn-in, then frozen.
McmcChain adaptive_metropolis(const std::function<double(const Vec&)>& log_target, const Vec& init,
                              const McmcConfig& config);

struct Normalization {
  Vec x_mean;
  Vec x_scale;
  double y_mean = 0.0;
  double y_scale = 1.0;

  static Normalization identity(Eigen::Index dim);
  static Normalization fit(const Mat& x, const Vec& y);
  Mat apply_x(const Mat& x) const;
  Vec apply_x(const Vec& x) const;
};

struct GpPrediction {
  double mean = 0.0;
  double var = 0.0;
};

struct GpFitConfig {
  HyperPrior prior;
  McmcConfig mcmc;
  std::optional<double> fixed_lambda;  // normalized-units value
  bool normalize = true;
};

// Fully Bayesian GP: a set of retained hyperparameter draws, each with its own
// cached factorization. Predictions are mixtures over the draws.
class GpModel {
 public:
  struct Sample {
    GpHyper hyper;  // normalized units
    double log_post = 0.0;
    CovFactor factor;
    Vec alpha;
  };

  static GpModel fit(const Mat& x, const Vec& y, const GpFitConfig& config);
  static GpModel with_hypers(const Mat& x, const Vec& y, const std::vector<GpHyper>& hypers,
                             const Normalization& norm, const HyperPrior& prior = {});

  GpPrediction predict(const Vec& x) const;
  GpPrediction predict_sample(const Vec& x, std::size_t sample) const;
  // Batched prediction; parallel selects the OpenMP kernels.
  void predict_batch(const Mat& x, Vec& mean, Vec& var, bool parallel = true) const;

  // Copy holding only the highest-posterior draw.
  GpModel map_only() const;
  // Same hyperparameters refactorized on new data (no MCMC).
  GpModel refit_data(const Mat& x, const Vec& y) const;

  Eigen::Index dim() const { return x_.cols(); }
  std::size_t sample_count() const { return samples_.size(); }
  const Sample& sample(std::size_t i) const { return samples_[i]; }
  const Normalization& normalization() const { return norm_; }
  const Mat& train_x() const { return x_; }  // normalized
  const Vec& train_y() const { return y_; }  // normalized
  const HyperPrior& prior() const { return prior_; }
  double acceptance_rate() const { return acceptance_rate_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  // A draw expressed in the caller's original units.
  GpHyper hyper_in_original_units(std::size_t i) const;

  nlohmann::json to_json() const;
  static GpModel from_json(const nlohmann::json& j);

 private:
  void build_caches();

  Mat x_;
  Vec y_;
  Normalization norm_;
  HyperPrior prior_;
  std::vector<Sample> samples_;
  double acceptance_rate_ = 1.0;
  std::vector<std::string> warnings_;
};

}  // namespace inverseflow
