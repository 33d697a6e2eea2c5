#pragma once

#include "inverseflow/common.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <vector>

namespace inverseflow {

enum class Activation { LeakyRelu, Identity };
enum class Mode { Train, Infer };

inline constexpr double kLeakySlope = 0.01;

struct DenseLayer {
  Mat weight;  // out x in
  Vec bias;    // out
  Activation activation = Activation::LeakyRelu;
  // Inverted dropout on this layer's output; ignored for the output layer.
  double dropout_rate = 0.0;
};

// Per-call record of everything backward() needs. Columns are samples.
struct NetCache {
  std::vector<Mat> inputs;
  std::vector<Mat> pre_activations;
  std::vector<Mat> masks;  // empty matrix where no dropout was applied
};

// Gradients laid out exactly like DenseNet::parameters().
struct NetGrad {
  std::vector<Mat> weight;
  std::vector<Vec> bias;

  void set_zero();
  std::vector<std::span<double>> spans();
};

// Fully connected network, LeakyReLU between hidden layers and an identity
// output layer by default. Evaluation is batched: inputs are (in x batch).
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<DenseLayer> layers);

  // He-style init for hidden layers. zero_output makes the net output
  // exactly zero until trained, which is how coupling subnets start.
  static DenseNet mlp(int in, const std::vector<int>& hidden, int out,
                      double dropout_rate, Rng& rng, bool zero_output = false);

  int input_dim() const;
  int output_dim() const;
  std::size_t layer_count() const { return layers_.size(); }
  const DenseLayer& layer(std::size_t i) const { return layers_[i]; }
  DenseLayer& layer(std::size_t i) { return layers_[i]; }

  Mat forward(const Mat& input, Mode mode, Rng* rng = nullptr,
              NetCache* cache = nullptr) const;

  // Single-sample convenience; a train-mode mask is drawn from `seed`.
  Vec eval(const Vec& input, Mode mode, std::uint64_t seed = 0) const;

  // Reverse pass of upstream^T * output. Parameter gradients are *added*
  // to `grad`; the input gradient is returned.
  Mat backward(const NetCache& cache, const Mat& upstream, NetGrad& grad) const;

  NetGrad make_grad() const;
  std::vector<std::span<double>> parameters();
  std::size_t parameter_count() const;
  double squared_norm() const;

  nlohmann::json to_json() const;
  static DenseNet from_json(const nlohmann::json& j);

 private:
  std::vector<DenseLayer> layers_;
};

}  // namespace inverseflow
