#include "inverseflow/gp.hpp"

#include "inverseflow/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace inverseflow {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

void GpHyper::validate(Eigen::Index dim) const {
  require_shape(beta.size() == dim, "GpHyper beta has " + std::to_string(beta.size()) +
                                        " entries, input dimension is " + std::to_string(dim));
  if (!(sigma > 0.0) || !(lambda >= 0.0) || !(beta.array() > 0.0).all() || !std::isfinite(sigma) ||
      !std::isfinite(lambda) || !beta.allFinite()) {
    throw ConfigError("GP hyperparameters must be positive and finite (lambda >= 0)");
  }
}

double LogNormal::log_density(double x) const {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  const double z = (std::log(x) - mean_log) / std_log;
  return -std::log(x) - std::log(std_log) - 0.5 * kLog2Pi - 0.5 * z * z;
}

const LogNormal& HyperPrior::beta_prior(Eigen::Index k) const {
  if (beta.size() == 1) return beta.front();
  require_shape(k < static_cast<Eigen::Index>(beta.size()), "beta prior missing for dimension");
  return beta[static_cast<std::size_t>(k)];
}

double HyperPrior::log_density(const GpHyper& h) const {
  double s = sigma.log_density(h.sigma);
  for (Eigen::Index k = 0; k < h.beta.size(); ++k) s += beta_prior(k).log_density(h.beta(k));
  if (!lambda_fixed) s += lambda.log_density(h.lambda);
  return s;
}

nlohmann::json HyperPrior::to_json() const {
  auto ln = [](const LogNormal& p) { return nlohmann::json{{"mean_log", p.mean_log}, {"std_log", p.std_log}}; };
  nlohmann::json b = nlohmann::json::array();
  for (const auto& p : beta) b.push_back(ln(p));
  return {{"sigma", ln(sigma)}, {"beta", b}, {"lambda", ln(lambda)}, {"lambda_fixed", lambda_fixed}};
}

HyperPrior HyperPrior::from_json(const nlohmann::json& j) {
  auto ln = [](const nlohmann::json& p) {
    LogNormal out{p.at("mean_log").get<double>(), p.at("std_log").get<double>()};
    if (!(out.std_log > 0.0)) throw ConfigError("prior std must be positive");
    return out;
  };
  HyperPrior p;
  if (j.contains("sigma")) p.sigma = ln(j.at("sigma"));
  if (j.contains("beta")) {
    p.beta.clear();
    for (const auto& b : j.at("beta")) p.beta.push_back(ln(b));
    if (p.beta.empty()) throw ConfigError("beta prior list is empty");
  }
  if (j.contains("lambda")) p.lambda = ln(j.at("lambda"));
  p.lambda_fixed = j.value("lambda_fixed", false);
  return p;
}

double kernel_eval(const Vec& a, const Vec& b, const GpHyper& h, bool same_index) {
  require_shape(a.size() == b.size() && a.size() == h.beta.size(), "kernel_eval dimension mismatch");
  double s = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double d = a(k) - b(k);
    s += h.beta(k) * d * d;
  }
  return h.sigma * h.sigma * std::exp(-s) + (same_index ? h.lambda * h.lambda : 0.0);
}

Mat build_cov(const Mat& x, const GpHyper& h) {
  require_shape(x.rows() >= 1, "build_cov needs at least one point");
  h.validate(x.cols());
  Mat k;
  kernels::serial::sq_exp_cross(x, x, h.sigma * h.sigma, h.beta, k);
  // exact symmetry and a clean diagonal
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    for (Eigen::Index j = 0; j < i; ++j) k(j, i) = k(i, j);
    k(i, i) = h.sigma * h.sigma + h.lambda * h.lambda;
  }
  return k;
}

CovFactor factorize_cov(const Mat& k, double sigma) {
  const double s2 = sigma * sigma;
  for (double rel = kJitterStart; rel <= kJitterMax * 1.0000001; rel *= 10.0) {
    Mat a = k;
    a.diagonal().array() += rel * s2;
    Eigen::LLT<Mat> llt(a);
    if (llt.info() == Eigen::Success) {
      Mat l = llt.matrixL();
      if (l.allFinite() && (l.diagonal().array() > 0.0).all()) return {std::move(l), rel * s2};
    }
  }
  throw ConditioningError("covariance not positive definite after jitter escalation to 1e-4 sigma^2");
}

double log_likelihood(const Mat& x, const Vec& y, const GpHyper& h) {
  require_shape(x.rows() == y.size(), "log_likelihood: X and y row counts differ");
  const CovFactor f = factorize_cov(build_cov(x, h), h.sigma);
  const Vec w = f.lower.triangularView<Eigen::Lower>().solve(y);
  const double logdet = 2.0 * f.lower.diagonal().array().log().sum();
  return -0.5 * logdet - 0.5 * w.squaredNorm() - 0.5 * static_cast<double>(y.size()) * kLog2Pi;
}

double log_posterior(const Mat& x, const Vec& y, const GpHyper& h, const HyperPrior& prior) {
  return log_likelihood(x, y, h) + prior.log_density(h);
}

void McmcConfig::validate() const {
  if (n_burn < 0 || n_steps <= n_burn) throw ConfigError("MCMC needs n_steps > n_burn >= 0");
  if (n_keep < 1 || n_keep > n_steps - n_burn) throw ConfigError("MCMC needs 1 <= n_keep <= n_steps - n_burn");
  if (!(init_step > 0.0) || !(target_accept > 0.0 && target_accept < 1.0)) {
    throw ConfigError("MCMC step size and target acceptance must be positive");
  }
}

nlohmann::json McmcConfig::to_json() const {
  return {{"n_steps", n_steps}, {"n_burn", n_burn},       {"n_keep", n_keep},
          {"seed", seed},       {"target_accept", target_accept}, {"init_step", init_step}};
}

McmcConfig McmcConfig::from_json(const nlohmann::json& j) {
  McmcConfig c;
  c.n_steps = j.value("n_steps", c.n_steps);
  c.n_burn = j.value("n_burn", c.n_burn);
  c.n_keep = j.value("n_keep", c.n_keep);
  c.seed = j.value("seed", c.seed);
  c.target_accept = j.value("target_accept", c.target_accept);
  c.init_step = j.value("init_step", c.init_step);
  c.validate();
  return c;
}

McmcChain adaptive_metropolis(const std::function<double(const Vec&)>& log_target, const Vec& init,
                              const McmcConfig& config) {
  config.validate();
  const Eigen::Index dim = init.size();
  require_shape(dim >= 1, "MCMC needs at least one parameter");
  Rng rng(config.seed);

  Vec cur = init;
  double cur_lp = log_target(cur);
  if (!std::isfinite(cur_lp)) throw NumericError("MCMC initial point has zero posterior density");

  Vec step_sd = Vec::Constant(dim, config.init_step);
  double log_scale = 0.0;
  constexpr int kWindow = 50;
  int window_accepts = 0, adapt_round = 0;
  long post_accepts = 0;
  std::vector<Vec> history;  // burn-in trace for the covariance estimate
  const int reshape_at = config.n_burn >= 200 ? config.n_burn / 2 : -1;

  McmcChain chain;
  const int post = config.n_steps - config.n_burn;
  std::vector<int> keep_at;
  for (int i = 0; i < config.n_keep; ++i) {
    keep_at.push_back(static_cast<int>((static_cast<long>(i + 1) * post) / config.n_keep) - 1);
  }
  std::size_t next_keep = 0;

  Vec prop(dim);
  for (int step = 0; step < config.n_steps; ++step) {
    const double scale = std::exp(log_scale);
    for (Eigen::Index k = 0; k < dim; ++k) prop(k) = cur(k) + scale * step_sd(k) * standard_normal(rng);
    const double lp = log_target(prop);
    const double u = uniform01(rng);
    const bool accept = std::isfinite(lp) && std::log(u) < lp - cur_lp;
    if (accept) {
      cur = prop;
      cur_lp = lp;
    }
    if (step < config.n_burn) {
      window_accepts += accept ? 1 : 0;
      if ((step + 1) % kWindow == 0) {
        const double rate = static_cast<double>(window_accepts) / kWindow;
        log_scale += (rate - config.target_accept) * 3.0 / std::sqrt(1.0 + adapt_round);
        ++adapt_round;
        window_accepts = 0;
      }
      if (step >= config.n_burn / 4) history.push_back(cur);
      if (step + 1 == reshape_at && history.size() >= 20) {
        Vec mean = Vec::Zero(dim);
        for (const auto& h : history) mean += h;
        mean /= static_cast<double>(history.size());
        Vec var = Vec::Zero(dim);
        for (const auto& h : history) var.array() += (h - mean).array().square();
        var /= static_cast<double>(history.size() - 1);
        const double base = 2.38 / std::sqrt(static_cast<double>(dim));
        for (Eigen::Index k = 0; k < dim; ++k) step_sd(k) = base * std::max(std::sqrt(var(k)), 1e-3);
        log_scale = 0.0;
        adapt_round = 0;
      }
    } else {
      post_accepts += accept ? 1 : 0;
      const int j = step - config.n_burn;
      while (next_keep < keep_at.size() && keep_at[next_keep] == j) {
        chain.kept.push_back(cur);
        chain.kept_log_target.push_back(cur_lp);
        ++next_keep;
      }
    }
  }
  chain.acceptance_rate = static_cast<double>(post_accepts) / post;
  if (chain.acceptance_rate < 0.05 || chain.acceptance_rate > 0.7) {
    chain.warnings.push_back("MCMC acceptance rate " + std::to_string(chain.acceptance_rate) +
                             " outside [0.05, 0.7]");
  }
  return chain;
}

Normalization Normalization::identity(Eigen::Index dim) {
  return {Vec::Zero(dim), Vec::Ones(dim), 0.0, 1.0};
}

Normalization Normalization::fit(const Mat& x, const Vec& y) {
  require_shape(x.rows() == y.size() && x.rows() >= 1, "normalization: bad training shapes");
  Normalization n;
  const double rows = static_cast<double>(x.rows());
  n.x_mean = x.colwise().mean().transpose();
  n.x_scale.resize(x.cols());
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const double sd = std::sqrt((x.col(k).array() - n.x_mean(k)).square().sum() / rows);
    n.x_scale(k) = sd > 1e-12 ? sd : 1.0;
  }
  n.y_mean = y.mean();
  const double ysd = std::sqrt((y.array() - n.y_mean).square().sum() / rows);
  n.y_scale = ysd > 1e-12 ? ysd : 1.0;
  return n;
}

Mat Normalization::apply_x(const Mat& x) const {
  require_shape(x.cols() == x_mean.size(), "normalization dimension mismatch");
  return (x.rowwise() - x_mean.transpose()).array().rowwise() / x_scale.transpose().array();
}

Vec Normalization::apply_x(const Vec& x) const {
  require_shape(x.size() == x_mean.size(), "normalization dimension mismatch");
  return ((x - x_mean).array() / x_scale.array()).matrix();
}

GpModel GpModel::fit(const Mat& x, const Vec& y, const GpFitConfig& config) {
  require_shape(x.rows() == y.size() && x.rows() >= 1, "GP fit: X and y row counts differ");
  GpModel m;
  m.norm_ = config.normalize ? Normalization::fit(x, y) : Normalization::identity(x.cols());
  m.x_ = m.norm_.apply_x(x);
  m.y_ = ((y.array() - m.norm_.y_mean) / m.norm_.y_scale).matrix();
  m.prior_ = config.prior;
  m.prior_.lambda_fixed = config.fixed_lambda.has_value();

  const Eigen::Index d = x.cols();
  const bool sample_lambda = !config.fixed_lambda;
  const Eigen::Index dim = d + 1 + (sample_lambda ? 1 : 0);
  auto unpack = [&](const Vec& theta) {
    GpHyper h;
    h.sigma = std::exp(theta(0));
    h.beta = theta.segment(1, d).array().exp().matrix();
    h.lambda = sample_lambda ? std::exp(theta(d + 1)) : *config.fixed_lambda;
    return h;
  };
  const Mat& xn = m.x_;
  const Vec& yn = m.y_;
  const HyperPrior& prior = m.prior_;
  auto target = [&](const Vec& theta) {
    if (!theta.allFinite() || (theta.array().abs() > 30.0).any()) return -std::numeric_limits<double>::infinity();
    try {
      // log-space Jacobian turns each log-normal prior into a Gaussian in theta
      const double jac = theta.head(d + 1).sum() + (sample_lambda ? theta(d + 1) : 0.0);
      return log_posterior(xn, yn, unpack(theta), prior) + jac;
    } catch (const ConditioningError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
  Vec init(dim);
  init(0) = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) init(1 + k) = prior.beta_prior(k).mean_log;
  if (sample_lambda) init(d + 1) = prior.lambda.mean_log;

  const McmcChain chain = adaptive_metropolis(target, init, config.mcmc);
  for (std::size_t i = 0; i < chain.kept.size(); ++i) {
    Sample s;
    s.hyper = unpack(chain.kept[i]);
    s.log_post = chain.kept_log_target[i];
    m.samples_.push_back(std::move(s));
  }
  m.acceptance_rate_ = chain.acceptance_rate;
  m.warnings_ = chain.warnings;
  m.build_caches();
  return m;
}

GpModel GpModel::with_hypers(const Mat& x, const Vec& y, const std::vector<GpHyper>& hypers,
                             const Normalization& norm, const HyperPrior& prior) {
  require_shape(x.rows() == y.size() && x.rows() >= 1, "GP: X and y row counts differ");
  if (hypers.empty()) throw ConfigError("GP model needs at least one hyperparameter sample");
  GpModel m;
  m.norm_ = norm;
  m.x_ = norm.apply_x(x);
  m.y_ = ((y.array() - norm.y_mean) / norm.y_scale).matrix();
  m.prior_ = prior;
  for (const auto& h : hypers) {
    Sample s;
    s.hyper = h;
    m.samples_.push_back(std::move(s));
  }
  m.build_caches();
  for (auto& s : m.samples_) s.log_post = log_posterior(m.x_, m.y_, s.hyper, m.prior_);
  return m;
}

void GpModel::build_caches() {
  if (samples_.empty()) throw ConfigError("GP model has no posterior samples");
  for (auto& s : samples_) {
    s.hyper.validate(x_.cols());
    s.factor = factorize_cov(build_cov(x_, s.hyper), s.hyper.sigma);
    const Vec w = s.factor.lower.triangularView<Eigen::Lower>().solve(y_);
    s.alpha = s.factor.lower.transpose().triangularView<Eigen::Upper>().solve(w);
  }
}

GpPrediction GpModel::predict_sample(const Vec& x, std::size_t i) const {
  require_shape(x.size() == dim(), "GP predict: query has " + std::to_string(x.size()) +
                                       " entries, model dimension is " + std::to_string(dim()));
  const Vec q = norm_.apply_x(x);
  const Sample& s = samples_.at(i);
  Vec k(x_.rows());
  for (Eigen::Index r = 0; r < x_.rows(); ++r) k(r) = kernel_eval(q, x_.row(r).transpose(), s.hyper, false);
  const double mean = k.dot(s.alpha);
  const Vec v = s.factor.lower.triangularView<Eigen::Lower>().solve(k);
  const double var = std::max(0.0, s.hyper.sigma * s.hyper.sigma + s.hyper.lambda * s.hyper.lambda - v.squaredNorm());
  return {norm_.y_mean + norm_.y_scale * mean, norm_.y_scale * norm_.y_scale * var};
}

GpPrediction GpModel::predict(const Vec& x) const {
  double m1 = 0.0, m2 = 0.0, v = 0.0;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const GpPrediction p = predict_sample(x, i);
    m1 += p.mean;
    m2 += p.mean * p.mean;
    v += p.var;
  }
  const double n = static_cast<double>(samples_.size());
  m1 /= n;
  return {m1, std::max(0.0, v / n + m2 / n - m1 * m1)};
}

void GpModel::predict_batch(const Mat& x, Vec& mean, Vec& var, bool parallel) const {
  require_shape(x.cols() == dim(), "GP predict_batch: query dimension mismatch");
  const Mat q = norm_.apply_x(x);
  const Eigen::Index n = q.rows();
  Vec m1 = Vec::Zero(n), m2 = Vec::Zero(n), vs = Vec::Zero(n);
  Vec mi, vi;
  for (const auto& s : samples_) {
    const kernels::GpSampleView view{x_, s.factor.lower, s.alpha, s.hyper.beta,
                                     s.hyper.sigma * s.hyper.sigma, s.hyper.lambda * s.hyper.lambda};
    if (parallel) {
      kernels::omp::gp_predict(view, q, mi, vi);
    } else {
      kernels::serial::gp_predict(view, q, mi, vi);
    }
    mi = (norm_.y_mean + norm_.y_scale * mi.array()).matrix();
    vi = (norm_.y_scale * norm_.y_scale * vi.array().max(0.0)).matrix();
    m1 += mi;
    m2.array() += mi.array().square();
    vs += vi;
  }
  const double c = static_cast<double>(samples_.size());
  mean = m1 / c;
  var = (vs.array() / c + m2.array() / c - mean.array().square()).max(0.0).matrix();
}

GpModel GpModel::map_only() const {
  GpModel m = *this;
  const auto best = std::max_element(samples_.begin(), samples_.end(),
                                     [](const Sample& a, const Sample& b) { return a.log_post < b.log_post; });
  m.samples_ = {*best};
  return m;
}

GpModel GpModel::refit_data(const Mat& x, const Vec& y) const {
  std::vector<GpHyper> hypers;
  for (const auto& s : samples_) hypers.push_back(s.hyper);
  // keep the original normalization so the hyperparameters stay meaningful
  GpModel m = with_hypers(x, y, hypers, norm_, prior_);
  m.acceptance_rate_ = acceptance_rate_;
  m.warnings_ = warnings_;
  return m;
}

GpHyper GpModel::hyper_in_original_units(std::size_t i) const {
  const GpHyper& h = samples_.at(i).hyper;
  GpHyper out;
  out.sigma = h.sigma * norm_.y_scale;
  out.lambda = h.lambda * norm_.y_scale;
  out.beta = (h.beta.array() / norm_.x_scale.array().square()).matrix();
  return out;
}

namespace {

nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

nlohmann::json GpModel::to_json() const {
  nlohmann::json xs = nlohmann::json::array();
  for (Eigen::Index r = 0; r < x_.rows(); ++r) xs.push_back(vec_json(x_.row(r).transpose()));
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : samples_) {
    samples.push_back({{"sigma", s.hyper.sigma},
                       {"beta", vec_json(s.hyper.beta)},
                       {"lambda", s.hyper.lambda},
                       {"log_post", s.log_post}});
  }
  return {{"schema_version", 1},
          {"units", "normalized"},
          {"X", xs},
          {"y", vec_json(y_)},
          {"normalization",
           {{"x_mean", vec_json(norm_.x_mean)},
            {"x_scale", vec_json(norm_.x_scale)},
            {"y_mean", norm_.y_mean},
            {"y_scale", norm_.y_scale}}},
          {"posterior_samples", samples},
          {"prior_spec", prior_.to_json()},
          {"acceptance_rate", acceptance_rate_}};
}

GpModel GpModel::from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != 1) throw ConfigError("unsupported GpModel schema version");
  GpModel m;
  const auto& xs = j.at("X");
  const auto rows = static_cast<Eigen::Index>(xs.size());
  if (rows == 0) throw ConfigError("GpModel JSON has no training rows");
  const Vec first = json_vec(xs[0]);
  m.x_.resize(rows, first.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vec row = json_vec(xs[static_cast<std::size_t>(r)]);
    if (row.size() != first.size()) throw ConfigError("ragged X in GpModel JSON");
    m.x_.row(r) = row.transpose();
  }
  m.y_ = json_vec(j.at("y"));
  if (m.y_.size() != rows) throw ConfigError("GpModel JSON X/y length mismatch");
  const auto& n = j.at("normalization");
  m.norm_.x_mean = json_vec(n.at("x_mean"));
  m.norm_.x_scale = json_vec(n.at("x_scale"));
  m.norm_.y_mean = n.at("y_mean").get<double>();
  m.norm_.y_scale = n.at("y_scale").get<double>();
  m.prior_ = HyperPrior::from_json(j.at("prior_spec"));
  for (const auto& s : j.at("posterior_samples")) {
    Sample smp;
    smp.hyper.sigma = s.at("sigma").get<double>();
    smp.hyper.beta = json_vec(s.at("beta"));
    smp.hyper.lambda = s.at("lambda").get<double>();
    smp.log_post = s.value("log_post", 0.0);
    m.samples_.push_back(std::move(smp));
  }
  m.acceptance_rate_ = j.value("acceptance_rate", 1.0);
  m.build_caches();
  return m;
}

}  // namespace inverseflow
