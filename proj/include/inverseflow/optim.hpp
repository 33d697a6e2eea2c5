#pragma once

#include "inverseflow/common.hpp"

#include <span>
#include <string>
#include <variant>
#include <vector>

namespace inverseflow {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: p -= lr * wd * p before the Adam delta
};

struct OptimState {
  AdamConfig config;
  std::vector<Vec> first_moment;
  std::vector<Vec> second_moment;
  long step = 0;

  // Shapes the accumulators like `params`.
  static OptimState for_params(std::span<const std::span<double>> params, AdamConfig config);
};

struct AdamStepResult {
  bool applied = true;
  std::string diagnostic;  // set when the step was rejected
};

// Rejects (and leaves everything untouched) when any gradient is non-finite.
AdamStepResult adam_step(std::span<const std::span<double>> params,
                         std::span<const std::span<double>> grads, OptimState& state, double lr);

struct CosineAnneal {
  double lr_start = 3e-3;
  double lr_end = 1e-5;
  long total_steps = 20000;
};

// Reduce-on-plateau: the rate is multiplied by `factor` whenever the smoothed
// epoch metric has not improved for `patience` epochs.
struct PlateauDrop {
  double lr_start = 1e-5;
  double factor = 0.1;
  int patience = 10;
  int metric_window = 1;
  double rel_threshold = 1e-4;
};

using LrSchedule = std::variant<CosineAnneal, PlateauDrop>;

// Pure function of (schedule, step, history): replaying the same history always
// yields the same rate.
double lr_at(const LrSchedule& schedule, long step, std::span<const double> metric_history);

}  // namespace inverseflow
