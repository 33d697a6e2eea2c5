#pragma once

#include "inverseflow/dataset.hpp"
#include "inverseflow/gp.hpp"

#include <span>
#include <vector>

namespace inverseflow {

// Two-stage Kennedy-O'Hagan surrogate: y(x) = rho * eta(x) + delta(x) + eps,
// where eta is fitted on low-fidelity rows and delta on high-fidelity
// residuals. eps is absorbed into delta's lambda. rho is 1 unless the fit is
// asked to estimate it.
struct MfgpModel {
  GpModel eta;
  GpModel delta;
  double epsilon_var = 0.0;  // delta's mean lambda^2, original units
  bool degenerate = false;   // eta came from seed points only
  double rho = 1.0;

  Eigen::Index dim() const { return eta.dim(); }
  nlohmann::json to_json() const;
  static MfgpModel from_json(const nlohmann::json& j);
};

struct MfgpFitConfig {
  GpFitConfig eta;
  GpFitConfig delta;
  // Pick rho from scale_grid by delta's profile log posterior.
  bool fit_scale = false;
  std::vector<double> scale_grid{0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0};
};

MfgpModel mfgp_fit(const Dataset& data, Eigen::Index output, const MfgpFitConfig& config);

// Refactorizes both stages on `data` with the hyperparameter draws already in `model`.
MfgpModel mfgp_refit_data(const MfgpModel& model, const Dataset& data, Eigen::Index output);

struct MfgpPrediction {
  double mean = 0.0;
  double var = 0.0;
  double eta_var = 0.0;  // rho^2 times eta's own variance
  double delta_var = 0.0;
};

MfgpPrediction mfgp_predict(const MfgpModel& model, const Vec& x);

struct MfgpBatch {
  Vec mean, var, eta_var, delta_var;
};
MfgpBatch mfgp_predict_batch(const MfgpModel& model, const Mat& x, bool parallel = true);

// Block covariance [[K_y,0,0],[0,K_u,K_uw],[0,K_uw^T,K_w]] on the dataset's raw
// inputs. High-fidelity rows come first (y then u), followed by low-fidelity w.
Mat mf_cov(const Dataset& data, const GpHyper& eta, const GpHyper& delta);

struct AcquisitionResult {
  Vec x;
  Fidelity fidelity = Fidelity::Low;
  double score = 0.0;
  Eigen::Index index = 0;
  Mat scores;  // C x 2, columns (low, high)
};

// Variance per unit cost: low scores eta_var / 1, high scores
// (eta_var + delta_var) / cost_ratio. Ties go to the lowest index, low first.
AcquisitionResult adaptive_select(const MfgpModel& model, const Mat& candidates, double cost_ratio);

// Multi-output form: per-output variances are divided by that output's squared
// scale before summing, so outputs in different units weigh equally.
AcquisitionResult adaptive_select(std::span<const MfgpModel> models, const Mat& candidates, double cost_ratio);

// Argmax over a precomputed score table with the same tie-breaking rule.
AcquisitionResult select_from_scores(const Mat& candidates, Mat scores);

}  // namespace inverseflow
