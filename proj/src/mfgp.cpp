#include "inverseflow/mfgp.hpp"

#include "inverseflow/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace inverseflow {

namespace {

constexpr int kQuickSteps = 1000;

void split_fidelities(const Dataset& data, Eigen::Index output, Mat& x_low, Vec& y_low, Mat& x_high,
                      Vec& y_high) {
  const auto low = data.rows_with(Fidelity::Low);
  const auto high = data.rows_with(Fidelity::High);
  if (low.size() < 2 || high.size() < 2) {
    throw ConfigError("MFGP needs >= 2 low- and >= 2 high-fidelity rows (have " + std::to_string(low.size()) +
                      " low, " + std::to_string(high.size()) + " high)");
  }
  require_shape(output >= 0 && output < data.outputs(), "MFGP output index out of range");
  x_low.resize(static_cast<Eigen::Index>(low.size()), data.dim());
  y_low.resize(static_cast<Eigen::Index>(low.size()));
  for (std::size_t i = 0; i < low.size(); ++i) {
    x_low.row(static_cast<Eigen::Index>(i)) = data.x.row(low[i]);
    y_low(static_cast<Eigen::Index>(i)) = data.y(low[i], output);
  }
  x_high.resize(static_cast<Eigen::Index>(high.size()), data.dim());
  y_high.resize(static_cast<Eigen::Index>(high.size()));
  for (std::size_t i = 0; i < high.size(); ++i) {
    x_high.row(static_cast<Eigen::Index>(i)) = data.x.row(high[i]);
    y_high(static_cast<Eigen::Index>(i)) = data.y(high[i], output);
  }
}

Vec eta_mean_at(const GpModel& eta, const Mat& x) {
  Vec mean, var;
  eta.predict_batch(x, mean, var, false);
  return mean;
}

// Profile log posterior of delta at its best retained draw, expressed in the
// caller's output units so fits with different residual scales compare.
double profile_score(const GpModel& delta) {
  const GpModel map = delta.map_only();
  const double n = static_cast<double>(map.train_y().size());
  return log_posterior(map.train_x(), map.train_y(), map.sample(0).hyper, map.prior()) -
         n * std::log(map.normalization().y_scale);
}

double mean_lambda2(const GpModel& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < g.sample_count(); ++i) {
    const double l = g.hyper_in_original_units(i).lambda;
    s += l * l;
  }
  return s / static_cast<double>(g.sample_count());
}

}  // namespace

MfgpModel mfgp_fit(const Dataset& data, Eigen::Index output, const MfgpFitConfig& config) {
  data.validate();
  Mat x_low, x_high;
  Vec y_low, y_high;
  split_fidelities(data, output, x_low, y_low, x_high, y_high);
  MfgpModel m{GpModel::fit(x_low, y_low, config.eta), {}, 0.0, false, 1.0};
  const Vec em = eta_mean_at(m.eta, x_high);
  GpFitConfig delta_cfg = config.delta;
  delta_cfg.mcmc.seed = derive_seed(config.delta.mcmc.seed, 1);
  if (config.fit_scale) {
    // Grid search on rho with short chains, then a full fit at the winner.
    GpFitConfig quick = delta_cfg;
    quick.mcmc.n_steps = std::min(quick.mcmc.n_steps, kQuickSteps);
    quick.mcmc.n_burn = std::min(quick.mcmc.n_burn, kQuickSteps / 2);
    quick.mcmc.n_keep = std::min(quick.mcmc.n_keep, 10);
    double best = -std::numeric_limits<double>::infinity();
    for (double rho : config.scale_grid) {
      const double score = profile_score(GpModel::fit(x_high, y_high - rho * em, quick));
      if (score > best) {
        best = score;
        m.rho = rho;
      }
    }
  }
  m.delta = GpModel::fit(x_high, y_high - m.rho * em, delta_cfg);
  m.epsilon_var = mean_lambda2(m.delta);
  return m;
}

MfgpModel mfgp_refit_data(const MfgpModel& model, const Dataset& data, Eigen::Index output) {
  Mat x_low, x_high;
  Vec y_low, y_high;
  split_fidelities(data, output, x_low, y_low, x_high, y_high);
  MfgpModel m = model;
  m.eta = model.eta.refit_data(x_low, y_low);
  m.delta = model.delta.refit_data(x_high, y_high - m.rho * eta_mean_at(m.eta, x_high));
  return m;
}

MfgpPrediction mfgp_predict(const MfgpModel& model, const Vec& x) {
  const GpPrediction e = model.eta.predict(x);
  const GpPrediction d = model.delta.predict(x);
  const double r2 = model.rho * model.rho;
  return {model.rho * e.mean + d.mean, r2 * e.var + d.var, r2 * e.var, d.var};
}

MfgpBatch mfgp_predict_batch(const MfgpModel& model, const Mat& x, bool parallel) {
  MfgpBatch b;
  Vec em, dm;
  model.eta.predict_batch(x, em, b.eta_var, parallel);
  model.delta.predict_batch(x, dm, b.delta_var, parallel);
  b.eta_var *= model.rho * model.rho;
  b.mean = model.rho * em + dm;
  b.var = b.eta_var + b.delta_var;
  return b;
}

Mat mf_cov(const Dataset& data, const GpHyper& eta, const GpHyper& delta) {
  data.validate();
  eta.validate(data.dim());
  delta.validate(data.dim());
  const auto high = data.rows_with(Fidelity::High);
  const auto low = data.rows_with(Fidelity::Low);
  const auto nh = static_cast<Eigen::Index>(high.size());
  const auto nl = static_cast<Eigen::Index>(low.size());
  Mat xh(nh, data.dim()), xl(nl, data.dim());
  for (Eigen::Index i = 0; i < nh; ++i) xh.row(i) = data.x.row(high[static_cast<std::size_t>(i)]);
  for (Eigen::Index i = 0; i < nl; ++i) xl.row(i) = data.x.row(low[static_cast<std::size_t>(i)]);

  Mat k = Mat::Zero(2 * nh + nl, 2 * nh + nl);
  if (nh > 0) {
    k.block(0, 0, nh, nh) = build_cov(xh, delta);
    GpHyper latent = eta;
    latent.lambda = 0.0;  // u is eta itself, no residual term
    k.block(nh, nh, nh, nh) = build_cov(xh, latent);
  }
  if (nl > 0) k.block(2 * nh, 2 * nh, nl, nl) = build_cov(xl, eta);
  if (nh > 0 && nl > 0) {
    Mat kuw;
    kernels::serial::sq_exp_cross(xh, xl, eta.sigma * eta.sigma, eta.beta, kuw);
    k.block(nh, 2 * nh, nh, nl) = kuw;
    k.block(2 * nh, nh, nl, nh) = kuw.transpose();
  }
  return k;
}

AcquisitionResult select_from_scores(const Mat& candidates, Mat scores) {
  require_shape(scores.rows() == candidates.rows() && scores.cols() == 2, "score table shape mismatch");
  if (candidates.rows() == 0) throw ConfigError("adaptive_select: empty candidate set");
  AcquisitionResult r;
  r.score = scores(0, 0);
  r.index = 0;
  r.fidelity = Fidelity::Low;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    for (int f = 0; f < 2; ++f) {
      if (scores(i, f) > r.score) {
        r.score = scores(i, f);
        r.index = i;
        r.fidelity = f == 0 ? Fidelity::Low : Fidelity::High;
      }
    }
  }
  r.x = candidates.row(r.index).transpose();
  r.scores = std::move(scores);
  return r;
}

AcquisitionResult adaptive_select(const MfgpModel& model, const Mat& candidates, double cost_ratio) {
  return adaptive_select(std::span<const MfgpModel>(&model, 1), candidates, cost_ratio);
}

AcquisitionResult adaptive_select(std::span<const MfgpModel> models, const Mat& candidates, double cost_ratio) {
  if (candidates.rows() == 0) throw ConfigError("adaptive_select: empty candidate set");
  if (models.empty()) throw ConfigError("adaptive_select: no models");
  if (!(cost_ratio > 0.0)) throw ConfigError("adaptive_select: cost_ratio must be positive");
  Mat scores = Mat::Zero(candidates.rows(), 2);
  for (const auto& m : models) {
    const MfgpBatch b = mfgp_predict_batch(m, candidates);
    double w = 1.0;
    if (models.size() > 1) {
      const double s = m.eta.normalization().y_scale;
      w = 1.0 / (s * s);
    }
    scores.col(0) += w * b.eta_var;
    scores.col(1) += w * (b.eta_var + b.delta_var) / cost_ratio;
  }
  return select_from_scores(candidates, std::move(scores));
}

nlohmann::json MfgpModel::to_json() const {
  return {{"schema_version", 1},
          {"kind", "mfgp"},
          {"eta", eta.to_json()},
          {"delta", delta.to_json()},
          {"epsilon_var", epsilon_var},
          {"degenerate", degenerate},
          {"rho", rho}};
}

MfgpModel MfgpModel::from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != 1) throw ConfigError("unsupported MfgpModel schema version");
  MfgpModel m{GpModel::from_json(j.at("eta")), GpModel::from_json(j.at("delta")),
              j.value("epsilon_var", 0.0), j.value("degenerate", false), j.value("rho", 1.0)};
  require_shape(m.eta.dim() == m.delta.dim(), "MFGP stages disagree on input dimension");
  return m;
}

}  // namespace inverseflow
