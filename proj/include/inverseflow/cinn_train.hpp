#pragma once

#include "inverseflow/cinn.hpp"
#include "inverseflow/optim.hpp"

#include <functional>
#include <memory>
#include <stdexcept>

namespace inverseflow {

// A minibatch in original units, one column per pair.
struct PairBatch {
  Mat x;
  Mat y;
};

class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual int input_dim() const = 0;
  virtual int obs_dim() const = 0;
  // Pairs per epoch; 0 for an endless online source.
  virtual Eigen::Index size() const = 0;
  virtual void start_epoch(Rng& rng) = 0;
  virtual PairBatch next_batch(Eigen::Index batch, Rng& rng) = 0;
  // Representative pairs used to fit the model normalization.
  virtual PairBatch calibration() const = 0;
};

// Fixed dataset, reshuffled every epoch. Rows are pairs.
class FixedPairs : public PairSource {
 public:
  FixedPairs(Mat x_rows, Mat y_rows);
  int input_dim() const override { return static_cast<int>(x_.rows()); }
  int obs_dim() const override { return static_cast<int>(y_.rows()); }
  Eigen::Index size() const override { return x_.cols(); }
  void start_epoch(Rng& rng) override;
  PairBatch next_batch(Eigen::Index batch, Rng& rng) override;
  PairBatch calibration() const override;

 private:
  Mat x_, y_;  // columns
  std::vector<Eigen::Index> order_;
  Eigen::Index cursor_ = 0;
};

// Fresh pairs on every call from a generator.
class OnlineSampler : public PairSource {
 public:
  using Generator = std::function<PairBatch(Eigen::Index n, Rng& rng)>;
  OnlineSampler(int input_dim, int obs_dim, Generator gen, Eigen::Index calibration_size = 10000,
                std::uint64_t calibration_seed = 0);
  int input_dim() const override { return input_dim_; }
  int obs_dim() const override { return obs_dim_; }
  Eigen::Index size() const override { return 0; }
  void start_epoch(Rng&) override {}
  PairBatch next_batch(Eigen::Index batch, Rng& rng) override { return gen_(batch, rng); }
  PairBatch calibration() const override;

 private:
  int input_dim_, obs_dim_;
  Generator gen_;
  Eigen::Index calibration_size_;
  std::uint64_t calibration_seed_;
};

struct TrainConfig {
  Eigen::Index batch_size = 128;
  // Fixed sources run `epochs` passes. Online sources run `total_steps`
  // steps grouped into epochs of `steps_per_epoch`.
  int epochs = 200;
  long total_steps = 20000;
  long steps_per_epoch = 200;
  LrSchedule schedule = CosineAnneal{};
  AdamConfig adam;
  double tau = 0.0;  // explicit ||theta||^2 penalty; exclusive with adam.weight_decay
  double y_noise_std = 0.0;  // Gaussian augmentation of y, model units
  bool fit_normalization = true;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainResult {
  CinnModel model;
  std::vector<double> epoch_nll;  // mean batch loss per epoch
  double initial_nll = 0.0;       // loss of the initialized model on the first batch
  long steps = 0;
  long rejected_steps = 0;
};

// Thrown when the loss turns non-finite. Carries the model as of the last
// completed epoch.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, CinnModel last_good, long step)
      : NumericError(what), last_good(std::move(last_good)), step(step) {}
  CinnModel last_good;
  long step;
};

using EpochCallback = std::function<void(int epoch, double mean_nll, double lr)>;

TrainResult cinn_train(const CinnArch& arch, PairSource& source, const TrainConfig& config,
                       const EpochCallback& on_epoch = {});

}  // namespace inverseflow
