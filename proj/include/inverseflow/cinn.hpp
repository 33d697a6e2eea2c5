#pragma once

#include "inverseflow/dense_net.hpp"
#include "inverseflow/optim.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace inverseflow {

// Affine coupling: the first `split` coordinates pass through and, together
// with the conditioning vector, parameterize a scale and a shift applied to
// the rest. The raw scale is soft-clamped to (-s_clamp, s_clamp) with tanh.
struct CouplingBlock {
  int split = 1;
  DenseNet s_net;
  DenseNet t_net;
  double s_clamp = 2.0;

  int dim() const { return split + s_net.output_dim(); }
};

struct CouplingCache {
  NetCache s_cache;
  NetCache t_cache;
  Mat s_raw;  // pre-clamp scale
  Mat exp_s;
  Mat passive;  // untouched half
};

// Batched over columns. `logdet` receives one entry per column.
Mat coupling_forward(const CouplingBlock& block, const Mat& x, const Mat& c, Vec& logdet,
                     Mode mode = Mode::Infer, Rng* rng = nullptr, CouplingCache* cache = nullptr);
Mat coupling_inverse(const CouplingBlock& block, const Mat& z, const Mat& c);

struct CinnArch {
  int input_dim = 2;         // M
  int cond_input_dim = 1;    // D_y
  int cond_dim = 16;         // D_c
  int blocks = 8;            // L
  std::vector<int> subnet_hidden{64, 64};
  std::vector<int> cond_hidden{64};
  double dropout_rate = 0.0;
  double s_clamp = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static CinnArch from_json(const nlohmann::json& j);
};

// x is standardized per dimension; observations are min-max scaled to [0,1].
struct CinnNormalization {
  Vec x_mean, x_scale;
  Vec y_min, y_max;

  static CinnNormalization identity(int m, int dy);
  static CinnNormalization fit(const Mat& x_cols, const Mat& y_cols);
  Mat x_to_model(const Mat& x_cols) const;
  Mat x_from_model(const Mat& x_cols) const;
  Mat y_to_model(const Mat& y_cols) const;
};

struct CinnTrace {
  NetCache cond_cache;
  Mat cond;
  std::vector<CouplingCache> blocks;
  std::vector<Mat> block_inputs;  // permuted inputs seen by each coupling
};

struct CinnGrad {
  NetGrad cond;
  std::vector<NetGrad> s;
  std::vector<NetGrad> t;

  void set_zero();
  std::vector<std::span<double>> spans();
};

class CinnModel {
 public:
  CinnModel() = default;
  // Subnet output layers start at zero, so a fresh model is a pure
  // permutation of its input.
  static CinnModel create(const CinnArch& arch);

  const CinnArch& arch() const { return arch_; }
  int input_dim() const { return arch_.input_dim; }
  int cond_input_dim() const { return arch_.cond_input_dim; }
  int cond_dim() const { return arch_.cond_dim; }
  std::size_t block_count() const { return blocks_.size(); }
  const CouplingBlock& block(std::size_t l) const { return blocks_[l]; }
  CouplingBlock& block(std::size_t l) { return blocks_[l]; }
  const std::vector<int>& permutation(std::size_t l) const { return perms_[l]; }
  const DenseNet& cond_net() const { return cond_; }
  DenseNet& cond_net() { return cond_; }
  const CinnNormalization& normalization() const { return norm_; }
  void set_normalization(CinnNormalization n);

  // All of the following work in model (normalized) units, columns = samples.
  Mat condition(const Mat& y, Mode mode = Mode::Infer, Rng* rng = nullptr, NetCache* cache = nullptr) const;
  Mat forward(const Mat& x, const Mat& y, Vec& logdet, Mode mode = Mode::Infer, Rng* rng = nullptr,
              CinnTrace* trace = nullptr) const;
  Mat forward_with_cond(const Mat& x, const Mat& c, Vec& logdet, Mode mode = Mode::Infer, Rng* rng = nullptr,
                        CinnTrace* trace = nullptr) const;
  Mat inverse(const Mat& z, const Mat& y) const;
  Mat inverse_with_cond(const Mat& z, const Mat& c) const;

  // Backward pass of the loss gradient through a recorded forward trace.
  // dz is dL/dz, dlogdet is dL/dlogdet per column.
  void backward(const CinnTrace& trace, const Mat& dz, const Vec& dlogdet, CinnGrad& grad) const;

  CinnGrad make_grad() const;
  std::vector<std::span<double>> parameters();
  std::size_t parameter_count() const;
  double squared_norm() const;

  nlohmann::json to_json() const;
  static CinnModel from_json(const nlohmann::json& j);

 private:
  CinnArch arch_;
  DenseNet cond_;
  std::vector<CouplingBlock> blocks_;
  std::vector<std::vector<int>> perms_;
  std::vector<std::uint64_t> perm_seeds_;
  CinnNormalization norm_;
};

// Mean over the batch of ||z||^2/2 - logdet, plus tau * ||theta||^2.
double cinn_loss(const Mat& z, const Vec& logdet, double theta_sq_norm, double tau);

// Loss and its exact gradient for one batch (model units).
double cinn_loss_and_grad(const CinnModel& model, const Mat& x, const Mat& y, double tau, Mode mode, Rng* rng,
                          CinnGrad& grad);

}  // namespace inverseflow
