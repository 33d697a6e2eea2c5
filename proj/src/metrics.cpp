#include "inverseflow/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace inverseflow {

namespace {

void check_pair(const Vec& pred, const Vec& truth) {
  require_shape(pred.size() == truth.size(), "metric inputs differ in length");
  if (truth.size() < 2) throw RangeError("metrics need at least two points");
}

}  // namespace

double nrmse(const Vec& pred, const Vec& truth) {
  check_pair(pred, truth);
  const double range = truth.maxCoeff() - truth.minCoeff();
  if (!(range > 0.0)) throw RangeError("nrmse: truth has zero range");
  return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(truth.size())) / range;
}

double r_squared(const Vec& pred, const Vec& truth) {
  check_pair(pred, truth);
  const double mean = truth.mean();
  const double ss_tot = (truth.array() - mean).square().sum();
  if (!(ss_tot > 0.0)) throw RangeError("r_squared: truth is constant");
  return 1.0 - (pred - truth).squaredNorm() / ss_tot;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw RangeError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

SummaryStats summarize(const std::vector<double>& values) {
  if (values.empty()) throw RangeError("summary of an empty set");
  SummaryStats s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  for (double v : values) s.std += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(s.std / n);
  s.median = quantile(values, 0.5);
  s.q25 = quantile(values, 0.25);
  s.q75 = quantile(values, 0.75);
  return s;
}

}  // namespace inverseflow
