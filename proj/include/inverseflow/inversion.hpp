#pragma once

#include "inverseflow/cinn.hpp"
#include "inverseflow/gp.hpp"
#include "inverseflow/mfgp.hpp"
#include "inverseflow/pca.hpp"

#include <functional>
#include <optional>
#include <string>
#include <variant>

namespace inverseflow {

struct InverseQuery {
  Vec target;  // original units, length D_y
  Eigen::Index samples = 1000;
  std::uint64_t seed = 0;

  void validate(int obs_dim) const;
};

struct DesignCandidate {
  Vec x;  // original input units
  Vec z;  // latent draw
  Vec forward_mean;  // filled by postprocess
  Vec forward_std;
};

// Sample j uses latent seed derive_seed(query.seed, j), so results do not depend
// on the thread count. parallel selects the OpenMP chunk loop.
std::vector<DesignCandidate> cinn_invert(const CinnModel& model, const InverseQuery& query, bool parallel = true);

// Inverse for one explicit latent (original units in and out).
Vec cinn_invert_one(const CinnModel& model, const Vec& z, const Vec& target);

class ForwardSurrogate {
 public:
  virtual ~ForwardSurrogate() = default;
  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;
  // Rows of x are points; mean and std get one row per point.
  virtual void predict(const Mat& x, Mat& mean, Mat& std) const = 0;
};

// Deterministic closed-form forward model (zero predictive std).
class AnalyticSurrogate : public ForwardSurrogate {
 public:
  using Fn = std::function<Vec(const Vec&)>;
  AnalyticSurrogate(Eigen::Index in, Eigen::Index out, Fn fn) : in_(in), out_(out), fn_(std::move(fn)) {}
  Eigen::Index input_dim() const override { return in_; }
  Eigen::Index output_dim() const override { return out_; }
  void predict(const Mat& x, Mat& mean, Mat& std) const override;

 private:
  Eigen::Index in_, out_;
  Fn fn_;
};

// One GP or MFGP per scalar output. When a codec is attached, the trailing
// codec.coefficient_count() outputs are PCA coefficients and are decoded into
// profiles, so output_dim() = scalars + profile_dim().
class MultiOutputSurrogate : public ForwardSurrogate {
 public:
  using Model = std::variant<GpModel, MfgpModel>;
  MultiOutputSurrogate(std::vector<Model> models, std::optional<ProfileCodec> codec = std::nullopt,
                       bool parallel = true);

  Eigen::Index input_dim() const override;
  Eigen::Index output_dim() const override;
  Eigen::Index model_count() const { return static_cast<Eigen::Index>(models_.size()); }
  Eigen::Index scalar_count() const;
  const std::vector<Model>& models() const { return models_; }
  const std::optional<ProfileCodec>& codec() const { return codec_; }

  // Raw per-model predictions (PCA coefficients not decoded).
  void predict_models(const Mat& x, Mat& mean, Mat& var) const;
  void predict(const Mat& x, Mat& mean, Mat& std) const override;

  nlohmann::json to_json() const;
  static MultiOutputSurrogate from_json(const nlohmann::json& j);

 private:
  std::vector<Model> models_;
  std::optional<ProfileCodec> codec_;
  bool parallel_ = true;
};

// Fills forward_mean / forward_std of every candidate.
void postprocess(std::vector<DesignCandidate>& candidates, const ForwardSurrogate& forward);

// Keeps the candidates accepted by every filter (geometric down-selection).
using CandidateFilter = std::function<bool(const Vec& x)>;
std::vector<DesignCandidate> filter_candidates(const std::vector<DesignCandidate>& candidates,
                                               const std::vector<CandidateFilter>& filters);

// Candidate table: x1..xM, z1..zM, then mean_k/std_k columns when populated.
void write_candidates_csv(const std::string& path, const std::vector<DesignCandidate>& candidates,
                          const std::string& header_comment = {});

}  // namespace inverseflow
