#include "inverseflow/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace inverseflow {

OptimState OptimState::for_params(std::span<const std::span<double>> params, AdamConfig config) {
  OptimState s;
  s.config = config;
  for (const auto& p : params) {
    s.first_moment.push_back(Vec::Zero(static_cast<Eigen::Index>(p.size())));
    s.second_moment.push_back(Vec::Zero(static_cast<Eigen::Index>(p.size())));
  }
  return s;
}

AdamStepResult adam_step(std::span<const std::span<double>> params,
                         std::span<const std::span<double>> grads, OptimState& state, double lr) {
  require_shape(params.size() == grads.size() && params.size() == state.first_moment.size(),
                "adam: parameter/gradient/state tensor counts differ");
  if (!(lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
  for (std::size_t t = 0; t < params.size(); ++t) {
    require_shape(params[t].size() == grads[t].size() &&
                      static_cast<Eigen::Index>(params[t].size()) == state.first_moment[t].size(),
                  "adam: tensor " + std::to_string(t) + " shape mismatch");
    for (std::size_t k = 0; k < grads[t].size(); ++k) {
      if (!std::isfinite(grads[t][k])) {
        return {false, "non-finite gradient in tensor " + std::to_string(t) + " at index " +
                           std::to_string(k)};
      }
    }
  }
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const double shrink = 1.0 - lr * c.weight_decay;
  for (std::size_t t = 0; t < params.size(); ++t) {
    double* p = params[t].data();
    const double* g = grads[t].data();
    double* m = state.first_moment[t].data();
    double* v = state.second_moment[t].data();
    const std::size_t n = params[t].size();
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] = p[k] * shrink - lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
  return {};
}

namespace {

int plateau_drops(const PlateauDrop& s, std::span<const double> history) {
  int drops = 0;
  double best = std::numeric_limits<double>::infinity();
  int bad = 0;
  const int w = std::max(1, s.metric_window);
  for (std::size_t i = 0; i < history.size(); ++i) {
    const std::size_t lo = i + 1 >= static_cast<std::size_t>(w) ? i + 1 - w : 0;
    double metric = 0.0;
    for (std::size_t k = lo; k <= i; ++k) metric += history[k];
    metric /= static_cast<double>(i + 1 - lo);
    if (metric < best - s.rel_threshold * std::abs(best) || !std::isfinite(best)) {
      best = metric;
      bad = 0;
    } else if (++bad > s.patience) {
      ++drops;
      bad = 0;
    }
  }
  return drops;
}

}  // namespace

double lr_at(const LrSchedule& schedule, long step, std::span<const double> metric_history) {
  if (const auto* cos = std::get_if<CosineAnneal>(&schedule)) {
    if (cos->total_steps <= 0) return cos->lr_end;
    const double frac =
        static_cast<double>(std::clamp(step, 0L, cos->total_steps)) / static_cast<double>(cos->total_steps);
    return cos->lr_end + 0.5 * (cos->lr_start - cos->lr_end) * (1.0 + std::cos(std::numbers::pi * frac));
  }
  const auto& p = std::get<PlateauDrop>(schedule);
  return p.lr_start * std::pow(p.factor, plateau_drops(p, metric_history));
}

}  // namespace inverseflow
