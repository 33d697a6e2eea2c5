#pragma once

#include "inverseflow/common.hpp"

namespace inverseflow {

// RMSE divided by the range of the truth.
double nrmse(const Vec& pred, const Vec& truth);
// 1 - SS_res / SS_tot about the truth mean.
double r_squared(const Vec& pred, const Vec& truth);

struct SummaryStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

// Quantiles use linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);
SummaryStats summarize(const std::vector<double>& values);

}  // namespace inverseflow
