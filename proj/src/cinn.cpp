#include "inverseflow/cinn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace inverseflow {

namespace {

nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Mat stack_rows(const Mat& top, const Mat& bottom) {
  Mat out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

Mat permute_rows(const Mat& h, const std::vector<int>& p) {
  Mat out(h.rows(), h.cols());
  for (std::size_t i = 0; i < p.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = h.row(p[i]);
  return out;
}

Mat unpermute_rows(const Mat& h, const std::vector<int>& p) {
  Mat out(h.rows(), h.cols());
  for (std::size_t i = 0; i < p.size(); ++i) out.row(p[i]) = h.row(static_cast<Eigen::Index>(i));
  return out;
}

Mat clamp_scale(const Mat& s_raw, double clamp) {
  return (clamp * (s_raw.array() / clamp).tanh()).matrix();
}

void check_finite(const Mat& m, std::size_t block, const char* what) {
  if (!m.allFinite()) {
    throw NumericError(std::string("non-finite ") + what + " in coupling block " + std::to_string(block));
  }
}

// Every coordinate must reach the transformed half of some block.
bool covers_all(const std::vector<std::vector<int>>& perms, int m, int dim) {
  std::vector<int> cur(static_cast<std::size_t>(dim));
  std::iota(cur.begin(), cur.end(), 0);
  std::vector<bool> seen(static_cast<std::size_t>(dim), false);
  for (const auto& p : perms) {
    std::vector<int> next(cur.size());
    for (std::size_t i = 0; i < p.size(); ++i) next[i] = cur[static_cast<std::size_t>(p[i])];
    cur = next;
    for (int i = m; i < dim; ++i) seen[static_cast<std::size_t>(cur[static_cast<std::size_t>(i)])] = true;
  }
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

std::vector<int> permutation_from_seed(std::uint64_t seed, int dim) {
  std::vector<int> p(static_cast<std::size_t>(dim));
  std::iota(p.begin(), p.end(), 0);
  Rng rng(seed);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace

Mat coupling_forward(const CouplingBlock& block, const Mat& x, const Mat& c, Vec& logdet, Mode mode, Rng* rng,
                     CouplingCache* cache) {
  const int m = block.split;
  const int dim = block.dim();
  require_shape(x.rows() == dim, "coupling_forward: input has " + std::to_string(x.rows()) + " rows, block expects " +
                                     std::to_string(dim));
  require_shape(c.cols() == x.cols(), "coupling_forward: conditioning batch size mismatch");
  const Mat in = stack_rows(x.topRows(m), c);
  Mat s_raw = block.s_net.forward(in, mode, rng, cache ? &cache->s_cache : nullptr);
  const Mat t = block.t_net.forward(in, mode, rng, cache ? &cache->t_cache : nullptr);
  const Mat s_hat = clamp_scale(s_raw, block.s_clamp);
  Mat exp_s = s_hat.array().exp().matrix();
  Mat z(dim, x.cols());
  z.topRows(m) = x.topRows(m);
  z.bottomRows(dim - m) = (x.bottomRows(dim - m).array() * exp_s.array() + t.array()).matrix();
  logdet = s_hat.colwise().sum().transpose();
  if (cache) {
    cache->s_raw = std::move(s_raw);
    cache->exp_s = std::move(exp_s);
    cache->passive = x;
  }
  return z;
}

Mat coupling_inverse(const CouplingBlock& block, const Mat& z, const Mat& c) {
  const int m = block.split;
  const int dim = block.dim();
  require_shape(z.rows() == dim, "coupling_inverse: input dimension mismatch");
  require_shape(c.cols() == z.cols(), "coupling_inverse: conditioning batch size mismatch");
  const Mat in = stack_rows(z.topRows(m), c);
  const Mat s_hat = clamp_scale(block.s_net.forward(in, Mode::Infer), block.s_clamp);
  const Mat t = block.t_net.forward(in, Mode::Infer);
  Mat x(dim, z.cols());
  x.topRows(m) = z.topRows(m);
  x.bottomRows(dim - m) = ((z.bottomRows(dim - m) - t).array() * (-s_hat).array().exp()).matrix();
  return x;
}

void CinnArch::validate() const {
  if (input_dim < 2) throw ConfigError("cINN input dimension must be >= 2");
  if (cond_input_dim < 1 || cond_dim < 1 || blocks < 1) throw ConfigError("cINN dimensions must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0,1)");
  if (!(s_clamp > 0.0)) throw ConfigError("s_clamp must be positive");
  for (int h : subnet_hidden)
    if (h < 1) throw ConfigError("hidden widths must be positive");
  for (int h : cond_hidden)
    if (h < 1) throw ConfigError("hidden widths must be positive");
}

nlohmann::json CinnArch::to_json() const {
  return {{"input_dim", input_dim},       {"cond_input_dim", cond_input_dim}, {"cond_dim", cond_dim},
          {"blocks", blocks},             {"subnet_hidden", subnet_hidden},   {"cond_hidden", cond_hidden},
          {"dropout_rate", dropout_rate}, {"s_clamp", s_clamp},               {"seed", seed}};
}

CinnArch CinnArch::from_json(const nlohmann::json& j) {
  CinnArch a;
  a.input_dim = j.value("input_dim", a.input_dim);
  a.cond_input_dim = j.value("cond_input_dim", a.cond_input_dim);
  a.cond_dim = j.value("cond_dim", a.cond_dim);
  a.blocks = j.value("blocks", a.blocks);
  a.subnet_hidden = j.value("subnet_hidden", a.subnet_hidden);
  a.cond_hidden = j.value("cond_hidden", a.cond_hidden);
  a.dropout_rate = j.value("dropout_rate", a.dropout_rate);
  a.s_clamp = j.value("s_clamp", a.s_clamp);
  a.seed = j.value("seed", a.seed);
  a.validate();
  return a;
}

CinnNormalization CinnNormalization::identity(int m, int dy) {
  return {Vec::Zero(m), Vec::Ones(m), Vec::Zero(dy), Vec::Ones(dy)};
}

CinnNormalization CinnNormalization::fit(const Mat& x_cols, const Mat& y_cols) {
  require_shape(x_cols.cols() == y_cols.cols() && x_cols.cols() >= 1, "cINN normalization: batch mismatch");
  CinnNormalization n;
  const double count = static_cast<double>(x_cols.cols());
  n.x_mean = x_cols.rowwise().mean();
  n.x_scale.resize(x_cols.rows());
  for (Eigen::Index r = 0; r < x_cols.rows(); ++r) {
    const double sd = std::sqrt((x_cols.row(r).array() - n.x_mean(r)).square().sum() / count);
    n.x_scale(r) = sd > 1e-12 ? sd : 1.0;
  }
  n.y_min = y_cols.rowwise().minCoeff();
  n.y_max = y_cols.rowwise().maxCoeff();
  for (Eigen::Index r = 0; r < n.y_min.size(); ++r) {
    if (!(n.y_max(r) > n.y_min(r))) n.y_max(r) = n.y_min(r) + 1.0;
  }
  return n;
}

Mat CinnNormalization::x_to_model(const Mat& x_cols) const {
  require_shape(x_cols.rows() == x_mean.size(), "cINN x normalization dimension mismatch");
  return ((x_cols.colwise() - x_mean).array().colwise() / x_scale.array()).matrix();
}

Mat CinnNormalization::x_from_model(const Mat& x_cols) const {
  require_shape(x_cols.rows() == x_mean.size(), "cINN x normalization dimension mismatch");
  return ((x_cols.array().colwise() * x_scale.array()).matrix().colwise() + x_mean);
}

Mat CinnNormalization::y_to_model(const Mat& y_cols) const {
  require_shape(y_cols.rows() == y_min.size(), "cINN observation normalization dimension mismatch");
  return ((y_cols.colwise() - y_min).array().colwise() / (y_max - y_min).array()).matrix();
}

void CinnGrad::set_zero() {
  cond.set_zero();
  for (auto& g : s) g.set_zero();
  for (auto& g : t) g.set_zero();
}

std::vector<std::span<double>> CinnGrad::spans() {
  auto out = cond.spans();
  for (std::size_t l = 0; l < s.size(); ++l) {
    for (auto sp : s[l].spans()) out.push_back(sp);
    for (auto sp : t[l].spans()) out.push_back(sp);
  }
  return out;
}

CinnModel CinnModel::create(const CinnArch& arch) {
  arch.validate();
  CinnModel model;
  model.arch_ = arch;
  Rng rng(derive_seed(arch.seed, 17));
  model.cond_ = DenseNet::mlp(arch.cond_input_dim, arch.cond_hidden, arch.cond_dim, arch.dropout_rate, rng);
  const int m = arch.input_dim / 2;
  for (int l = 0; l < arch.blocks; ++l) {
    CouplingBlock b;
    b.split = m;
    b.s_clamp = arch.s_clamp;
    b.s_net = DenseNet::mlp(m + arch.cond_dim, arch.subnet_hidden, arch.input_dim - m, arch.dropout_rate, rng, true);
    b.t_net = DenseNet::mlp(m + arch.cond_dim, arch.subnet_hidden, arch.input_dim - m, arch.dropout_rate, rng, true);
    model.blocks_.push_back(std::move(b));
  }
  for (std::uint64_t attempt = 0;; ++attempt) {
    model.perms_.clear();
    model.perm_seeds_.clear();
    for (int l = 0; l < arch.blocks; ++l) {
      const std::uint64_t s = derive_seed(arch.seed, 1000 + static_cast<std::uint64_t>(l) + 7919 * attempt);
      model.perm_seeds_.push_back(s);
      model.perms_.push_back(permutation_from_seed(s, arch.input_dim));
    }
    if (arch.blocks < 2 || covers_all(model.perms_, m, arch.input_dim) || attempt >= 1000) break;
  }
  model.norm_ = CinnNormalization::identity(arch.input_dim, arch.cond_input_dim);
  return model;
}

void CinnModel::set_normalization(CinnNormalization n) {
  require_shape(n.x_mean.size() == input_dim() && n.y_min.size() == cond_input_dim(),
                "cINN normalization does not match model dimensions");
  norm_ = std::move(n);
}

Mat CinnModel::condition(const Mat& y, Mode mode, Rng* rng, NetCache* cache) const {
  require_shape(y.rows() == cond_input_dim(), "condition: observation has " + std::to_string(y.rows()) +
                                                  " entries, expected " + std::to_string(cond_input_dim()));
  return cond_.forward(y, mode, rng, cache);
}

Mat CinnModel::forward(const Mat& x, const Mat& y, Vec& logdet, Mode mode, Rng* rng, CinnTrace* trace) const {
  require_shape(x.cols() == y.cols(), "cINN forward: x and y batch sizes differ");
  Mat c = condition(y, mode, rng, trace ? &trace->cond_cache : nullptr);
  Mat z = forward_with_cond(x, c, logdet, mode, rng, trace);
  if (trace) trace->cond = std::move(c);
  return z;
}

Mat CinnModel::forward_with_cond(const Mat& x, const Mat& c, Vec& logdet, Mode mode, Rng* rng,
                                 CinnTrace* trace) const {
  require_shape(x.rows() == input_dim(), "cINN forward: x has wrong dimension");
  require_shape(c.rows() == cond_dim() && c.cols() == x.cols(), "cINN forward: conditioning shape mismatch");
  if (trace) {
    trace->blocks.assign(blocks_.size(), {});
    trace->block_inputs.assign(blocks_.size(), {});
  }
  logdet = Vec::Zero(x.cols());
  Mat h = x;
  Vec ld;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    Mat hp = permute_rows(h, perms_[l]);
    h = coupling_forward(blocks_[l], hp, c, ld, mode, rng, trace ? &trace->blocks[l] : nullptr);
    check_finite(h, l, "output");
    logdet += ld;
    if (trace) trace->block_inputs[l] = std::move(hp);
  }
  return h;
}

Mat CinnModel::inverse(const Mat& z, const Mat& y) const {
  require_shape(z.cols() == y.cols(), "cINN inverse: z and y batch sizes differ");
  return inverse_with_cond(z, condition(y));
}

Mat CinnModel::inverse_with_cond(const Mat& z, const Mat& c) const {
  require_shape(z.rows() == input_dim(), "cINN inverse: z has wrong dimension");
  require_shape(c.rows() == cond_dim() && c.cols() == z.cols(), "cINN inverse: conditioning shape mismatch");
  Mat h = z;
  for (std::size_t l = blocks_.size(); l-- > 0;) {
    h = unpermute_rows(coupling_inverse(blocks_[l], h, c), perms_[l]);
    check_finite(h, l, "inverse output");
  }
  return h;
}

void CinnModel::backward(const CinnTrace& trace, const Mat& dz, const Vec& dlogdet, CinnGrad& grad) const {
  require_shape(trace.blocks.size() == blocks_.size(), "trace does not belong to this model");
  const Eigen::Index batch = dz.cols();
  Mat dh = dz;
  Mat dc = Mat::Zero(cond_dim(), batch);
  for (std::size_t l = blocks_.size(); l-- > 0;) {
    const CouplingBlock& b = blocks_[l];
    const CouplingCache& cc = trace.blocks[l];
    const int m = b.split;
    const int rest = b.dim() - m;
    const Mat dz2 = dh.bottomRows(rest);
    const Mat x2 = cc.passive.bottomRows(rest);
    Mat dx(b.dim(), batch);
    dx.bottomRows(rest) = (dz2.array() * cc.exp_s.array()).matrix();
    Mat ds_hat = (dz2.array() * x2.array() * cc.exp_s.array()).matrix();
    ds_hat.rowwise() += dlogdet.transpose();
    const Mat th = (cc.s_raw.array() / b.s_clamp).tanh();
    const Mat ds_raw = (ds_hat.array() * (1.0 - th.array().square())).matrix();
    Mat din = b.s_net.backward(cc.s_cache, ds_raw, grad.s[l]);
    din += b.t_net.backward(cc.t_cache, dz2, grad.t[l]);
    dx.topRows(m) = dh.topRows(m) + din.topRows(m);
    dc += din.bottomRows(cond_dim());
    dh = unpermute_rows(dx, perms_[l]);
  }
  cond_.backward(trace.cond_cache, dc, grad.cond);
}

CinnGrad CinnModel::make_grad() const {
  CinnGrad g;
  g.cond = cond_.make_grad();
  for (const auto& b : blocks_) {
    g.s.push_back(b.s_net.make_grad());
    g.t.push_back(b.t_net.make_grad());
  }
  return g;
}

std::vector<std::span<double>> CinnModel::parameters() {
  auto out = cond_.parameters();
  for (auto& b : blocks_) {
    for (auto sp : b.s_net.parameters()) out.push_back(sp);
    for (auto sp : b.t_net.parameters()) out.push_back(sp);
  }
  return out;
}

std::size_t CinnModel::parameter_count() const {
  std::size_t n = cond_.parameter_count();
  for (const auto& b : blocks_) n += b.s_net.parameter_count() + b.t_net.parameter_count();
  return n;
}

double CinnModel::squared_norm() const {
  double s = cond_.squared_norm();
  for (const auto& b : blocks_) s += b.s_net.squared_norm() + b.t_net.squared_norm();
  return s;
}

nlohmann::json CinnModel::to_json() const {
  nlohmann::json blocks = nlohmann::json::array();
  std::vector<int> splits;
  for (const auto& b : blocks_) {
    blocks.push_back({{"s_net", b.s_net.to_json()}, {"t_net", b.t_net.to_json()}});
    splits.push_back(b.split);
  }
  return {{"schema_version", 1},
          {"M", input_dim()},
          {"D_y", cond_input_dim()},
          {"D_c", cond_dim()},
          {"L", static_cast<int>(blocks_.size())},
          {"split_indices", splits},
          {"permutation_seeds", perm_seeds_},
          {"permutations", perms_},
          {"s_clamp", arch_.s_clamp},
          {"arch", arch_.to_json()},
          {"cond_net", cond_.to_json()},
          {"blocks", blocks},
          {"normalization",
           {{"x_mean", vec_json(norm_.x_mean)},
            {"x_scale", vec_json(norm_.x_scale)},
            {"y_min", vec_json(norm_.y_min)},
            {"y_max", vec_json(norm_.y_max)}}}};
}

CinnModel CinnModel::from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != 1) throw ConfigError("unsupported CinnModel schema version");
  CinnModel m;
  m.arch_ = CinnArch::from_json(j.at("arch"));
  m.cond_ = DenseNet::from_json(j.at("cond_net"));
  const auto splits = j.at("split_indices").get<std::vector<int>>();
  const auto& blocks = j.at("blocks");
  if (splits.size() != blocks.size()) throw ConfigError("cINN JSON split/block count mismatch");
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    CouplingBlock b;
    b.split = splits[l];
    b.s_clamp = j.at("s_clamp").get<double>();
    b.s_net = DenseNet::from_json(blocks[l].at("s_net"));
    b.t_net = DenseNet::from_json(blocks[l].at("t_net"));
    if (b.dim() != m.arch_.input_dim || b.t_net.output_dim() != b.s_net.output_dim()) {
      throw ConfigError("cINN JSON block " + std::to_string(l) + " has inconsistent dimensions");
    }
    m.blocks_.push_back(std::move(b));
  }
  m.perm_seeds_ = j.at("permutation_seeds").get<std::vector<std::uint64_t>>();
  m.perms_ = j.at("permutations").get<std::vector<std::vector<int>>>();
  if (m.perms_.size() != m.blocks_.size()) throw ConfigError("cINN JSON permutation count mismatch");
  for (std::size_t l = 0; l < m.perms_.size(); ++l) {
    if (m.perms_[l] != permutation_from_seed(m.perm_seeds_.at(l), m.arch_.input_dim)) {
      throw ConfigError("cINN JSON permutation " + std::to_string(l) + " does not match its seed");
    }
  }
  const auto& n = j.at("normalization");
  m.set_normalization({json_vec(n.at("x_mean")), json_vec(n.at("x_scale")), json_vec(n.at("y_min")),
                       json_vec(n.at("y_max"))});
  return m;
}

double cinn_loss(const Mat& z, const Vec& logdet, double theta_sq_norm, double tau) {
  require_shape(z.cols() == logdet.size() && z.cols() > 0, "cinn_loss: empty or mismatched batch");
  const double nll = (0.5 * z.colwise().squaredNorm().transpose() - logdet).mean();
  return nll + tau * theta_sq_norm;
}

double cinn_loss_and_grad(const CinnModel& model, const Mat& x, const Mat& y, double tau, Mode mode, Rng* rng,
                          CinnGrad& grad) {
  CinnTrace trace;
  Vec logdet;
  const Mat z = model.forward(x, y, logdet, mode, rng, &trace);
  const double b = static_cast<double>(x.cols());
  const double loss = cinn_loss(z, logdet, tau > 0.0 ? model.squared_norm() : 0.0, tau);
  grad.set_zero();
  model.backward(trace, z / b, Vec::Constant(x.cols(), -1.0 / b), grad);
  if (tau > 0.0) {
    auto add = [tau](const DenseNet& net, NetGrad& g) {
      for (std::size_t i = 0; i < net.layer_count(); ++i) {
        g.weight[i] += 2.0 * tau * net.layer(i).weight;
        g.bias[i] += 2.0 * tau * net.layer(i).bias;
      }
    };
    add(model.cond_net(), grad.cond);
    for (std::size_t l = 0; l < model.block_count(); ++l) {
      add(model.block(l).s_net, grad.s[l]);
      add(model.block(l).t_net, grad.t[l]);
    }
  }
  return loss;
}

}  // namespace inverseflow
