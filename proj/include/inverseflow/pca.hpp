#pragma once

#include "inverseflow/common.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace inverseflow {

struct PcaBasis {
  Vec mean;                // D
  Mat components;          // k x D, orthonormal rows
  Vec singular_values;     // k
  Vec energy_fractions;    // k, non-increasing
  double total_energy_captured = 0.0;
  double total_variance = 0.0;  // trace of the sample covariance (N-1 normalization)
  std::vector<std::string> warnings;

  Eigen::Index k() const { return components.rows(); }
  Eigen::Index dim() const { return mean.size(); }

  nlohmann::json to_json() const;
  static PcaBasis from_json(const nlohmann::json& j);
};

// Keeps the smallest k whose cumulative explained variance reaches
// `energy_threshold`, then clamps to max_components when positive.
PcaBasis pca_fit(const Mat& y, double energy_threshold, Eigen::Index max_components = 0);

Vec pca_encode(const PcaBasis& basis, const Vec& y);
Vec pca_decode(const PcaBasis& basis, const Vec& coeffs);
Mat pca_encode_rows(const PcaBasis& basis, const Mat& y);
Mat pca_decode_rows(const PcaBasis& basis, const Mat& coeffs);

// Codec for concatenated profile channels (pressure then swirl). Each channel
// is scaled to unit variance before PCA; joint mode fits one basis over the
// concatenation, per-profile mode fits one basis per channel.
class ProfileCodec {
 public:
  enum class Mode { Joint, PerProfile };

  static ProfileCodec fit(const Mat& profiles, const std::vector<Eigen::Index>& channel_sizes,
                          double energy_threshold, Eigen::Index max_components, Mode mode = Mode::Joint);

  Eigen::Index coefficient_count() const;
  Eigen::Index profile_dim() const;
  Mode mode() const { return mode_; }
  const std::vector<PcaBasis>& bases() const { return bases_; }
  const std::vector<double>& channel_scales() const { return scales_; }

  Vec encode(const Vec& profile) const;
  Vec decode(const Vec& coeffs) const;
  // Std of the decoded profile when coefficients are independent with the given variances.
  Vec decode_std(const Vec& coeff_var) const;
  // Fraction of total (scaled) variance captured across all bases.
  double energy_captured() const;

  nlohmann::json to_json() const;
  static ProfileCodec from_json(const nlohmann::json& j);

 private:
  Mode mode_ = Mode::Joint;
  std::vector<Eigen::Index> sizes_;
  std::vector<double> scales_;
  std::vector<PcaBasis> bases_;
};

}  // namespace inverseflow
