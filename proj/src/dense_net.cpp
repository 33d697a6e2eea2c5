#include "inverseflow/dense_net.hpp"

#include <cmath>

namespace inverseflow {

namespace {

void apply_activation(Activation act, Mat& m) {
  if (act == Activation::LeakyRelu) {
    m = m.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
  }
}

Mat activation_derivative(Activation act, const Mat& pre) {
  if (act == Activation::Identity) return Mat::Ones(pre.rows(), pre.cols());
  return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; });
}

std::string activation_name(Activation a) {
  return a == Activation::LeakyRelu ? "leaky_relu" : "identity";
}

Activation activation_from(const std::string& s) {
  if (s == "leaky_relu") return Activation::LeakyRelu;
  if (s == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + s + "'");
}

}  // namespace

void NetGrad::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

std::vector<std::span<double>> NetGrad::spans() {
  std::vector<std::span<double>> out;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    out.emplace_back(weight[i].data(), static_cast<std::size_t>(weight[i].size()));
    out.emplace_back(bias[i].data(), static_cast<std::size_t>(bias[i].size()));
  }
  return out;
}

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  require_shape(!layers_.empty(), "DenseNet needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    require_shape(l.bias.size() == l.weight.rows(), "bias length must equal layer output");
    if (i > 0) {
      require_shape(layers_[i - 1].weight.rows() == l.weight.cols(),
                    "layer dimensions do not chain at layer " + std::to_string(i));
    }
    if (!(l.dropout_rate >= 0.0 && l.dropout_rate < 1.0)) {
      throw ConfigError("dropout rate must lie in [0,1)");
    }
  }
}

DenseNet DenseNet::mlp(int in, const std::vector<int>& hidden, int out, double dropout_rate,
                       Rng& rng, bool zero_output) {
  std::vector<DenseLayer> layers;
  int prev = in;
  for (int h : hidden) {
    DenseLayer l;
    const double scale = std::sqrt(2.0 / prev);
    l.weight = Mat(h, prev);
    for (Eigen::Index k = 0; k < l.weight.size(); ++k) l.weight.data()[k] = scale * standard_normal(rng);
    l.bias = Vec::Zero(h);
    l.activation = Activation::LeakyRelu;
    l.dropout_rate = dropout_rate;
    layers.push_back(std::move(l));
    prev = h;
  }
  DenseLayer last;
  last.activation = Activation::Identity;
  last.bias = Vec::Zero(out);
  if (zero_output) {
    last.weight = Mat::Zero(out, prev);
  } else {
    const double scale = std::sqrt(1.0 / prev);
    last.weight = Mat(out, prev);
    for (Eigen::Index k = 0; k < last.weight.size(); ++k) last.weight.data()[k] = scale * standard_normal(rng);
  }
  layers.push_back(std::move(last));
  return DenseNet(std::move(layers));
}

int DenseNet::input_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
int DenseNet::output_dim() const { return static_cast<int>(layers_.back().weight.rows()); }

Mat DenseNet::forward(const Mat& input, Mode mode, Rng* rng, NetCache* cache) const {
  require_shape(input.rows() == input_dim(),
                "net input has " + std::to_string(input.rows()) + " rows, expected " +
                    std::to_string(input_dim()));
  if (cache) {
    cache->inputs.clear();
    cache->pre_activations.clear();
    cache->masks.clear();
  }
  Mat h = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    Mat pre = l.weight * h;
    pre.colwise() += l.bias;
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre_activations.push_back(pre);
    }
    h = std::move(pre);
    apply_activation(l.activation, h);
    Mat mask;
    const bool hidden = i + 1 < layers_.size();
    if (mode == Mode::Train && hidden && l.dropout_rate > 0.0) {
      if (!rng) throw ConfigError("train-mode dropout needs an rng");
      const double keep = 1.0 - l.dropout_rate;
      mask.resize(h.rows(), h.cols());
      std::bernoulli_distribution b(keep);
      for (Eigen::Index k = 0; k < mask.size(); ++k) mask.data()[k] = b(*rng) ? 1.0 / keep : 0.0;
      h.array() *= mask.array();
    }
    if (cache) cache->masks.push_back(std::move(mask));
  }
  return h;
}

Vec DenseNet::eval(const Vec& input, Mode mode, std::uint64_t seed) const {
  Rng rng(seed);
  Mat out = forward(input, mode, &rng);
  return out.col(0);
}

Mat DenseNet::backward(const NetCache& cache, const Mat& upstream, NetGrad& grad) const {
  require_shape(cache.inputs.size() == layers_.size(), "cache does not belong to this net");
  require_shape(upstream.rows() == output_dim() && upstream.cols() == cache.inputs.front().cols(),
                "upstream gradient shape mismatch");
  require_shape(grad.weight.size() == layers_.size(), "gradient buffer does not match net");
  Mat delta = upstream;
  for (std::size_t r = layers_.size(); r-- > 0;) {
    const auto& l = layers_[r];
    if (cache.masks[r].size() > 0) delta.array() *= cache.masks[r].array();
    if (l.activation != Activation::Identity) {
      delta.array() *= activation_derivative(l.activation, cache.pre_activations[r]).array();
    }
    grad.weight[r].noalias() += delta * cache.inputs[r].transpose();
    grad.bias[r] += delta.rowwise().sum();
    delta = l.weight.transpose() * delta;
  }
  return delta;
}

NetGrad DenseNet::make_grad() const {
  NetGrad g;
  for (const auto& l : layers_) {
    g.weight.push_back(Mat::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Vec::Zero(l.bias.size()));
  }
  return g;
}

std::vector<std::span<double>> DenseNet::parameters() {
  std::vector<std::span<double>> out;
  for (auto& l : layers_) {
    out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return out;
}

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

double DenseNet::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers_) s += l.weight.squaredNorm() + l.bias.squaredNorm();
  return s;
}

nlohmann::json DenseNet::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  std::vector<int> dims{input_dim()};
  nlohmann::json acts = nlohmann::json::array(), drops = nlohmann::json::array(),
                 weights = nlohmann::json::array(), biases = nlohmann::json::array();
  for (const auto& l : layers_) {
    dims.push_back(static_cast<int>(l.weight.rows()));
    acts.push_back(activation_name(l.activation));
    drops.push_back(l.dropout_rate);
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    weights.push_back(std::move(w));
    biases.push_back(std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size()));
  }
  j["layer_dims"] = dims;
  j["activations"] = acts;
  j["dropout_rates"] = drops;
  j["weights"] = weights;
  j["biases"] = biases;
  return j;
}

DenseNet DenseNet::from_json(const nlohmann::json& j) {
  const auto dims = j.at("layer_dims").get<std::vector<int>>();
  const auto& acts = j.at("activations");
  const auto& drops = j.at("dropout_rates");
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (dims.size() < 2 || acts.size() + 1 != dims.size() || weights.size() + 1 != dims.size() ||
      biases.size() + 1 != dims.size() || drops.size() + 1 != dims.size()) {
    throw ConfigError("inconsistent DenseNet JSON");
  }
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer l;
    l.activation = activation_from(acts[i].get<std::string>());
    l.dropout_rate = drops[i].get<double>();
    const auto w = weights[i].get<std::vector<double>>();
    const auto b = biases[i].get<std::vector<double>>();
    const int out = dims[i + 1], in = dims[i];
    if (w.size() != static_cast<std::size_t>(out) * in || b.size() != static_cast<std::size_t>(out)) {
      throw ConfigError("DenseNet JSON weight shape mismatch at layer " + std::to_string(i));
    }
    l.weight.resize(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) l.weight(r, c) = w[static_cast<std::size_t>(r) * in + c];
    l.bias = Eigen::Map<const Vec>(b.data(), out);
    layers.push_back(std::move(l));
  }
  return DenseNet(std::move(layers));
}

}  // namespace inverseflow
