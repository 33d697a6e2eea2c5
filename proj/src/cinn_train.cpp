#include "inverseflow/cinn_train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace inverseflow {

FixedPairs::FixedPairs(Mat x_rows, Mat y_rows) : x_(x_rows.transpose()), y_(y_rows.transpose()) {
  require_shape(x_.cols() == y_.cols(), "FixedPairs: x and y row counts differ");
  if (x_.cols() == 0) throw ConfigError("FixedPairs: empty dataset");
  order_.resize(static_cast<std::size_t>(x_.cols()));
  std::iota(order_.begin(), order_.end(), 0);
}

void FixedPairs::start_epoch(Rng& rng) {
  std::iota(order_.begin(), order_.end(), 0);
  std::shuffle(order_.begin(), order_.end(), rng);
  cursor_ = 0;
}

PairBatch FixedPairs::next_batch(Eigen::Index batch, Rng&) {
  const Eigen::Index n = x_.cols();
  if (cursor_ >= n) cursor_ = 0;
  const Eigen::Index take = std::min(batch, n - cursor_);
  PairBatch b{Mat(x_.rows(), take), Mat(y_.rows(), take)};
  for (Eigen::Index j = 0; j < take; ++j) {
    const Eigen::Index src = order_[static_cast<std::size_t>(cursor_ + j)];
    b.x.col(j) = x_.col(src);
    b.y.col(j) = y_.col(src);
  }
  cursor_ += take;
  return b;
}

PairBatch FixedPairs::calibration() const { return {x_, y_}; }

OnlineSampler::OnlineSampler(int input_dim, int obs_dim, Generator gen, Eigen::Index calibration_size,
                             std::uint64_t calibration_seed)
    : input_dim_(input_dim),
      obs_dim_(obs_dim),
      gen_(std::move(gen)),
      calibration_size_(calibration_size),
      calibration_seed_(calibration_seed) {
  if (calibration_size_ < 2) throw ConfigError("OnlineSampler: calibration size must be >= 2");
}

PairBatch OnlineSampler::calibration() const {
  Rng rng(derive_seed(calibration_seed_, 99));
  return gen_(calibration_size_, rng);
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0 || total_steps < 0) throw ConfigError("training length must be non-negative");
  if (steps_per_epoch < 1) throw ConfigError("steps_per_epoch must be >= 1");
  if (tau < 0.0 || adam.weight_decay < 0.0) throw ConfigError("regularization weights must be non-negative");
  if (tau > 0.0 && adam.weight_decay > 0.0) {
    throw ConfigError("tau and weight_decay are alternative regularizers; set only one");
  }
  if (y_noise_std < 0.0) throw ConfigError("y_noise_std must be non-negative");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json sched;
  if (const auto* c = std::get_if<CosineAnneal>(&schedule)) {
    sched = {{"kind", "cosine"}, {"lr_start", c->lr_start}, {"lr_end", c->lr_end}, {"total_steps", c->total_steps}};
  } else {
    const auto& p = std::get<PlateauDrop>(schedule);
    sched = {{"kind", "plateau"},           {"lr_start", p.lr_start},           {"factor", p.factor},
             {"patience", p.patience},      {"metric_window", p.metric_window}, {"rel_threshold", p.rel_threshold}};
  }
  return {{"batch_size", batch_size},
          {"epochs", epochs},
          {"total_steps", total_steps},
          {"steps_per_epoch", steps_per_epoch},
          {"schedule", sched},
          {"adam",
           {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}, {"weight_decay", adam.weight_decay}}},
          {"tau", tau},
          {"y_noise_std", y_noise_std},
          {"fit_normalization", fit_normalization},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    const std::string kind = s.value("kind", std::string("cosine"));
    if (kind == "cosine") {
      CosineAnneal a;
      a.lr_start = s.value("lr_start", a.lr_start);
      a.lr_end = s.value("lr_end", a.lr_end);
      a.total_steps = s.value("total_steps", a.total_steps);
      c.schedule = a;
    } else if (kind == "plateau") {
      PlateauDrop p;
      p.lr_start = s.value("lr_start", p.lr_start);
      p.factor = s.value("factor", p.factor);
      p.patience = s.value("patience", p.patience);
      p.metric_window = s.value("metric_window", p.metric_window);
      p.rel_threshold = s.value("rel_threshold", p.rel_threshold);
      c.schedule = p;
    } else {
      throw ConfigError("unknown schedule kind '" + kind + "'");
    }
  }
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.eps = a.value("eps", c.adam.eps);
    c.adam.weight_decay = a.value("weight_decay", c.adam.weight_decay);
  }
  c.tau = j.value("tau", c.tau);
  c.y_noise_std = j.value("y_noise_std", c.y_noise_std);
  c.fit_normalization = j.value("fit_normalization", c.fit_normalization);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

TrainResult cinn_train(const CinnArch& arch, PairSource& source, const TrainConfig& config,
                       const EpochCallback& on_epoch) {
  config.validate();
  if (arch.input_dim != source.input_dim() || arch.cond_input_dim != source.obs_dim()) {
    throw ShapeError("cinn_train: architecture dimensions do not match the data source");
  }
  TrainResult result;
  result.model = CinnModel::create(arch);
  CinnModel& model = result.model;
  if (config.fit_normalization) {
    const PairBatch cal = source.calibration();
    model.set_normalization(CinnNormalization::fit(cal.x, cal.y));
  }

  const bool fixed = source.size() > 0;
  const long per_epoch = fixed ? (source.size() + config.batch_size - 1) / config.batch_size : config.steps_per_epoch;
  const long total = fixed ? per_epoch * config.epochs : config.total_steps;
  const long n_epochs = (total + per_epoch - 1) / per_epoch;

  auto params = model.parameters();
  OptimState state = OptimState::for_params(params, config.adam);
  CinnGrad grad = model.make_grad();
  auto grad_spans = grad.spans();
  Rng data_rng(derive_seed(config.seed, 1));
  Rng drop_rng(derive_seed(config.seed, 2));
  Rng noise_rng(derive_seed(config.seed, 3));
  CinnModel last_good = model;
  const CinnNormalization& norm = model.normalization();

  long step = 0;
  for (long epoch = 0; epoch < n_epochs; ++epoch) {
    source.start_epoch(data_rng);
    double sum = 0.0;
    long count = 0;
    for (long s = 0; s < per_epoch && step < total; ++s, ++step) {
      const PairBatch b = source.next_batch(config.batch_size, data_rng);
      const Mat x = norm.x_to_model(b.x);
      Mat y = norm.y_to_model(b.y);
      if (config.y_noise_std > 0.0) {
        for (Eigen::Index k = 0; k < y.size(); ++k) y.data()[k] += config.y_noise_std * standard_normal(noise_rng);
      }
      const double lr = lr_at(config.schedule, step, result.epoch_nll);
      double loss = 0.0;
      try {
        loss = cinn_loss_and_grad(model, x, y, config.tau, Mode::Train, &drop_rng, grad);
      } catch (const NumericError& e) {
        throw TrainingDiverged(std::string("training diverged at step ") + std::to_string(step) + ": " + e.what(),
                               last_good, step);
      }
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("non-finite loss at step " + std::to_string(step), last_good, step);
      }
      const double nll = config.tau > 0.0 ? loss - config.tau * model.squared_norm() : loss;
      if (step == 0) result.initial_nll = nll;
      if (!adam_step(params, grad_spans, state, lr).applied) ++result.rejected_steps;
      sum += nll;
      ++count;
    }
    const double mean = count > 0 ? sum / static_cast<double>(count) : 0.0;
    result.epoch_nll.push_back(mean);
    last_good = model;
    if (on_epoch) on_epoch(static_cast<int>(epoch), mean, lr_at(config.schedule, step, result.epoch_nll));
  }
  result.steps = step;
  return result;
}

}  // namespace inverseflow
