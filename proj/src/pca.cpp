#include "inverseflow/pca.hpp"

#include <cmath>

namespace inverseflow {

namespace {

nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

PcaBasis pca_fit(const Mat& y, double energy_threshold, Eigen::Index max_components) {
  if (y.rows() < 2) throw ConfigError("pca_fit needs at least two rows");
  if (!(energy_threshold > 0.0 && energy_threshold <= 1.0)) throw ConfigError("energy threshold must lie in (0,1]");
  PcaBasis b;
  b.mean = y.colwise().mean().transpose();
  const Mat centered = y.rowwise() - b.mean.transpose();
  Eigen::BDCSVD<Mat> svd(centered, Eigen::ComputeThinV);
  const Vec s = svd.singularValues();
  const double denom = static_cast<double>(y.rows() - 1);
  const Vec var = s.array().square() / denom;
  b.total_variance = var.sum();
  if (!(b.total_variance > 1e-300)) {
    b.components.resize(0, y.cols());
    b.singular_values.resize(0);
    b.energy_fractions.resize(0);
    b.warnings.push_back("data has zero variance; returning an empty basis");
    return b;
  }
  const Vec frac = var / b.total_variance;
  Eigen::Index k = 0;
  double cum = 0.0;
  while (k < frac.size() && cum < energy_threshold - 1e-12) cum += frac(k++);
  if (max_components > 0) k = std::min(k, max_components);
  b.components.resize(k, y.cols());
  for (Eigen::Index i = 0; i < k; ++i) {
    Vec v = svd.matrixV().col(i);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    b.components.row(i) = v.transpose();
  }
  b.singular_values = s.head(k);
  b.energy_fractions = frac.head(k);
  b.total_energy_captured = b.energy_fractions.sum();
  return b;
}

Vec pca_encode(const PcaBasis& basis, const Vec& y) {
  require_shape(y.size() == basis.dim(), "pca_encode: vector length mismatch");
  return basis.components * (y - basis.mean);
}

Vec pca_decode(const PcaBasis& basis, const Vec& coeffs) {
  require_shape(coeffs.size() == basis.k(), "pca_decode: coefficient count mismatch");
  return basis.mean + basis.components.transpose() * coeffs;
}

Mat pca_encode_rows(const PcaBasis& basis, const Mat& y) {
  require_shape(y.cols() == basis.dim(), "pca_encode: column count mismatch");
  return (y.rowwise() - basis.mean.transpose()) * basis.components.transpose();
}

Mat pca_decode_rows(const PcaBasis& basis, const Mat& coeffs) {
  require_shape(coeffs.cols() == basis.k(), "pca_decode: coefficient count mismatch");
  return (coeffs * basis.components).rowwise() + basis.mean.transpose();
}

nlohmann::json PcaBasis::to_json() const {
  nlohmann::json comps = nlohmann::json::array();
  for (Eigen::Index i = 0; i < k(); ++i) comps.push_back(vec_json(components.row(i).transpose()));
  return {{"schema_version", 1},
          {"mean", vec_json(mean)},
          {"components", comps},
          {"singular_values", vec_json(singular_values)},
          {"energy_fractions", vec_json(energy_fractions)},
          {"total_variance", total_variance}};
}

PcaBasis PcaBasis::from_json(const nlohmann::json& j) {
  PcaBasis b;
  b.mean = json_vec(j.at("mean"));
  const auto& comps = j.at("components");
  b.components.resize(static_cast<Eigen::Index>(comps.size()), b.mean.size());
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const Vec row = json_vec(comps[i]);
    require_shape(row.size() == b.mean.size(), "PCA JSON component length mismatch");
    b.components.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  b.singular_values = json_vec(j.at("singular_values"));
  b.energy_fractions = json_vec(j.at("energy_fractions"));
  b.total_energy_captured = b.energy_fractions.sum();
  b.total_variance = j.value("total_variance", 0.0);
  return b;
}

ProfileCodec ProfileCodec::fit(const Mat& profiles, const std::vector<Eigen::Index>& channel_sizes,
                               double energy_threshold, Eigen::Index max_components, Mode mode) {
  Eigen::Index total = 0;
  for (auto s : channel_sizes) total += s;
  require_shape(total == profiles.cols() && !channel_sizes.empty(), "profile channels do not cover the columns");
  ProfileCodec c;
  c.mode_ = mode;
  c.sizes_ = channel_sizes;
  Mat scaled = profiles;
  Eigen::Index off = 0;
  for (auto s : channel_sizes) {
    const Mat block = profiles.middleCols(off, s);
    const Mat centered = block.rowwise() - block.colwise().mean();
    const double per_point = centered.squaredNorm() / (static_cast<double>(profiles.rows() - 1) * s);
    const double scale = per_point > 1e-300 ? std::sqrt(per_point) : 1.0;
    c.scales_.push_back(scale);
    scaled.middleCols(off, s) /= scale;
    off += s;
  }
  if (mode == Mode::Joint) {
    c.bases_.push_back(pca_fit(scaled, energy_threshold, max_components));
  } else {
    off = 0;
    for (auto s : channel_sizes) {
      c.bases_.push_back(pca_fit(scaled.middleCols(off, s), energy_threshold, max_components));
      off += s;
    }
  }
  return c;
}

Eigen::Index ProfileCodec::coefficient_count() const {
  Eigen::Index n = 0;
  for (const auto& b : bases_) n += b.k();
  return n;
}

Eigen::Index ProfileCodec::profile_dim() const {
  Eigen::Index n = 0;
  for (auto s : sizes_) n += s;
  return n;
}

Vec ProfileCodec::encode(const Vec& profile) const {
  require_shape(profile.size() == profile_dim(), "profile length mismatch");
  Vec scaled = profile;
  Eigen::Index off = 0;
  for (std::size_t c = 0; c < sizes_.size(); ++c) {
    scaled.segment(off, sizes_[c]) /= scales_[c];
    off += sizes_[c];
  }
  if (mode_ == Mode::Joint) return pca_encode(bases_.front(), scaled);
  Vec out(coefficient_count());
  Eigen::Index coff = 0;
  off = 0;
  for (std::size_t c = 0; c < sizes_.size(); ++c) {
    out.segment(coff, bases_[c].k()) = pca_encode(bases_[c], scaled.segment(off, sizes_[c]));
    coff += bases_[c].k();
    off += sizes_[c];
  }
  return out;
}

Vec ProfileCodec::decode(const Vec& coeffs) const {
  require_shape(coeffs.size() == coefficient_count(), "coefficient count mismatch");
  Vec out(profile_dim());
  if (mode_ == Mode::Joint) {
    out = pca_decode(bases_.front(), coeffs);
  } else {
    Eigen::Index coff = 0, off = 0;
    for (std::size_t c = 0; c < sizes_.size(); ++c) {
      out.segment(off, sizes_[c]) = pca_decode(bases_[c], coeffs.segment(coff, bases_[c].k()));
      coff += bases_[c].k();
      off += sizes_[c];
    }
  }
  Eigen::Index off = 0;
  for (std::size_t c = 0; c < sizes_.size(); ++c) {
    out.segment(off, sizes_[c]) *= scales_[c];
    off += sizes_[c];
  }
  return out;
}

Vec ProfileCodec::decode_std(const Vec& coeff_var) const {
  require_shape(coeff_var.size() == coefficient_count(), "coefficient count mismatch");
  Vec var = Vec::Zero(profile_dim());
  if (mode_ == Mode::Joint) {
    var = bases_.front().components.array().square().matrix().transpose() * coeff_var;
  } else {
    Eigen::Index coff = 0, off = 0;
    for (std::size_t c = 0; c < sizes_.size(); ++c) {
      var.segment(off, sizes_[c]) =
          bases_[c].components.array().square().matrix().transpose() * coeff_var.segment(coff, bases_[c].k());
      coff += bases_[c].k();
      off += sizes_[c];
    }
  }
  Vec sd = var.cwiseMax(0.0).cwiseSqrt();
  Eigen::Index off = 0;
  for (std::size_t c = 0; c < sizes_.size(); ++c) {
    sd.segment(off, sizes_[c]) *= scales_[c];
    off += sizes_[c];
  }
  return sd;
}

double ProfileCodec::energy_captured() const {
  double captured = 0.0, total = 0.0;
  for (const auto& b : bases_) {
    captured += b.total_energy_captured * b.total_variance;
    total += b.total_variance;
  }
  return total > 0.0 ? captured / total : 0.0;
}

nlohmann::json ProfileCodec::to_json() const {
  nlohmann::json bases = nlohmann::json::array();
  for (const auto& b : bases_) bases.push_back(b.to_json());
  std::vector<long> sizes(sizes_.begin(), sizes_.end());
  return {{"schema_version", 1},
          {"mode", mode_ == Mode::Joint ? "joint" : "per_profile"},
          {"channel_sizes", sizes},
          {"channel_scales", scales_},
          {"bases", bases}};
}

ProfileCodec ProfileCodec::from_json(const nlohmann::json& j) {
  ProfileCodec c;
  const std::string mode = j.at("mode").get<std::string>();
  if (mode != "joint" && mode != "per_profile") throw ConfigError("unknown profile codec mode '" + mode + "'");
  c.mode_ = mode == "joint" ? Mode::Joint : Mode::PerProfile;
  for (long s : j.at("channel_sizes").get<std::vector<long>>()) c.sizes_.push_back(s);
  c.scales_ = j.at("channel_scales").get<std::vector<double>>();
  for (const auto& b : j.at("bases")) c.bases_.push_back(PcaBasis::from_json(b));
  if (c.scales_.size() != c.sizes_.size()) throw ConfigError("profile codec channel metadata mismatch");
  return c;
}

}  // namespace inverseflow
