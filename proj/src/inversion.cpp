#include "inverseflow/inversion.hpp"

#include "inverseflow/kernels.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace inverseflow {

void InverseQuery::validate(int obs_dim) const {
  if (samples < 1) throw ConfigError("inverse query needs at least one sample");
  require_shape(target.size() == obs_dim, "inverse query target has " + std::to_string(target.size()) +
                                              " entries, model expects " + std::to_string(obs_dim));
  if (!target.allFinite()) throw ConfigError("inverse query target must be finite");
}

std::vector<DesignCandidate> cinn_invert(const CinnModel& model, const InverseQuery& query, bool parallel) {
  query.validate(model.cond_input_dim());
  const int m = model.input_dim();
  const CinnNormalization& norm = model.normalization();
  const Vec c = model.condition(norm.y_to_model(query.target)).col(0);
  std::vector<DesignCandidate> out(static_cast<std::size_t>(query.samples));

  auto chunk = [&](Eigen::Index first, Eigen::Index count) {
    Mat z(m, count);
    for (Eigen::Index j = 0; j < count; ++j) {
      Rng rng(derive_seed(query.seed, static_cast<std::uint64_t>(first + j)));
      for (int i = 0; i < m; ++i) z(i, j) = standard_normal(rng);
    }
    const Mat tiled = c.replicate(1, count);
    Mat x;
    try {
      x = norm.x_from_model(model.inverse_with_cond(z, tiled));
    } catch (const NumericError&) {
      // Locate the offending sample.
      for (Eigen::Index j = 0; j < count; ++j) {
        try {
          model.inverse_with_cond(z.col(j), c);
        } catch (const NumericError& e) {
          throw NumericError("inverse sample " + std::to_string(first + j) + ": " + e.what());
        }
      }
      throw;
    }
    for (Eigen::Index j = 0; j < count; ++j) {
      auto& cand = out[static_cast<std::size_t>(first + j)];
      cand.x = x.col(j);
      cand.z = z.col(j);
    }
  };
  if (parallel) {
    kernels::omp::for_chunks(query.samples, chunk);
  } else {
    kernels::serial::for_chunks(query.samples, chunk);
  }
  return out;
}

Vec cinn_invert_one(const CinnModel& model, const Vec& z, const Vec& target) {
  require_shape(z.size() == model.input_dim(), "cinn_invert_one: latent dimension mismatch");
  const auto& norm = model.normalization();
  return norm.x_from_model(model.inverse(z, norm.y_to_model(target))).col(0);
}

void AnalyticSurrogate::predict(const Mat& x, Mat& mean, Mat& std) const {
  require_shape(x.cols() == in_, "analytic surrogate input dimension mismatch");
  mean.resize(x.rows(), out_);
  std = Mat::Zero(x.rows(), out_);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vec y = fn_(x.row(i).transpose());
    require_shape(y.size() == out_, "analytic surrogate returned the wrong output size");
    mean.row(i) = y.transpose();
  }
}

namespace {

Eigen::Index model_dim(const MultiOutputSurrogate::Model& m) {
  return std::visit([](const auto& v) { return v.dim(); }, m);
}

}  // namespace

MultiOutputSurrogate::MultiOutputSurrogate(std::vector<Model> models, std::optional<ProfileCodec> codec,
                                           bool parallel)
    : models_(std::move(models)), codec_(std::move(codec)), parallel_(parallel) {
  if (models_.empty()) throw ConfigError("surrogate needs at least one output model");
  const Eigen::Index d = model_dim(models_.front());
  for (const auto& m : models_) require_shape(model_dim(m) == d, "surrogate output models disagree on input dim");
  if (codec_ && codec_->coefficient_count() > model_count()) {
    throw ShapeError("surrogate has fewer output models than PCA coefficients");
  }
}

Eigen::Index MultiOutputSurrogate::input_dim() const { return model_dim(models_.front()); }

Eigen::Index MultiOutputSurrogate::scalar_count() const {
  return model_count() - (codec_ ? codec_->coefficient_count() : 0);
}

Eigen::Index MultiOutputSurrogate::output_dim() const {
  return scalar_count() + (codec_ ? codec_->profile_dim() : 0);
}

void MultiOutputSurrogate::predict_models(const Mat& x, Mat& mean, Mat& var) const {
  require_shape(x.cols() == input_dim(), "forward surrogate expects " + std::to_string(input_dim()) +
                                             " inputs, got " + std::to_string(x.cols()));
  mean.resize(x.rows(), model_count());
  var.resize(x.rows(), model_count());
  for (Eigen::Index k = 0; k < model_count(); ++k) {
    const auto& m = models_[static_cast<std::size_t>(k)];
    if (const auto* gp = std::get_if<GpModel>(&m)) {
      Vec mu, v;
      gp->predict_batch(x, mu, v, parallel_);
      mean.col(k) = mu;
      var.col(k) = v;
    } else {
      const MfgpBatch b = mfgp_predict_batch(std::get<MfgpModel>(m), x, parallel_);
      mean.col(k) = b.mean;
      var.col(k) = b.var;
    }
  }
}

void MultiOutputSurrogate::predict(const Mat& x, Mat& mean, Mat& std) const {
  Mat mu, var;
  predict_models(x, mu, var);
  const Eigen::Index ns = scalar_count();
  mean.resize(x.rows(), output_dim());
  std.resize(x.rows(), output_dim());
  mean.leftCols(ns) = mu.leftCols(ns);
  std.leftCols(ns) = var.leftCols(ns).cwiseMax(0.0).cwiseSqrt();
  if (!codec_) return;
  const Eigen::Index nc = codec_->coefficient_count();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    mean.row(i).tail(codec_->profile_dim()) = codec_->decode(mu.row(i).tail(nc).transpose()).transpose();
    std.row(i).tail(codec_->profile_dim()) =
        codec_->decode_std(var.row(i).tail(nc).transpose().cwiseMax(0.0)).transpose();
  }
}

nlohmann::json MultiOutputSurrogate::to_json() const {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : models_) {
    if (const auto* gp = std::get_if<GpModel>(&m)) {
      models.push_back({{"kind", "gp"}, {"model", gp->to_json()}});
    } else {
      models.push_back({{"kind", "mfgp"}, {"model", std::get<MfgpModel>(m).to_json()}});
    }
  }
  nlohmann::json j = {{"schema_version", 1}, {"models", models}};
  if (codec_) j["codec"] = codec_->to_json();
  return j;
}

MultiOutputSurrogate MultiOutputSurrogate::from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != 1) throw ConfigError("unsupported surrogate schema version");
  std::vector<Model> models;
  for (const auto& m : j.at("models")) {
    const std::string kind = m.at("kind").get<std::string>();
    if (kind == "gp") {
      models.emplace_back(GpModel::from_json(m.at("model")));
    } else if (kind == "mfgp") {
      models.emplace_back(MfgpModel::from_json(m.at("model")));
    } else {
      throw ConfigError("unknown surrogate model kind '" + kind + "'");
    }
  }
  std::optional<ProfileCodec> codec;
  if (j.contains("codec")) codec = ProfileCodec::from_json(j.at("codec"));
  return MultiOutputSurrogate(std::move(models), std::move(codec));
}

void postprocess(std::vector<DesignCandidate>& candidates, const ForwardSurrogate& forward) {
  if (candidates.empty()) return;
  const Eigen::Index m = candidates.front().x.size();
  require_shape(m == forward.input_dim(), "candidates have " + std::to_string(m) +
                                              " inputs but the forward surrogate expects " +
                                              std::to_string(forward.input_dim()));
  Mat x(static_cast<Eigen::Index>(candidates.size()), m);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    require_shape(candidates[i].x.size() == m, "candidate input sizes differ");
    x.row(static_cast<Eigen::Index>(i)) = candidates[i].x.transpose();
  }
  Mat mean, std;
  forward.predict(x, mean, std);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    candidates[i].forward_mean = mean.row(static_cast<Eigen::Index>(i)).transpose();
    candidates[i].forward_std = std.row(static_cast<Eigen::Index>(i)).transpose();
  }
}

std::vector<DesignCandidate> filter_candidates(const std::vector<DesignCandidate>& candidates,
                                               const std::vector<CandidateFilter>& filters) {
  std::vector<DesignCandidate> kept;
  for (const auto& c : candidates) {
    bool ok = true;
    for (const auto& f : filters) ok = ok && f(c.x);
    if (ok) kept.push_back(c);
  }
  return kept;
}

void write_candidates_csv(const std::string& path, const std::vector<DesignCandidate>& candidates,
                          const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << header_comment;
  if (candidates.empty()) return;
  const auto& f = candidates.front();
  std::string sep;
  for (Eigen::Index i = 0; i < f.x.size(); ++i, sep = ",") out << sep << "x" << i + 1;
  for (Eigen::Index i = 0; i < f.z.size(); ++i) out << ",z" << i + 1;
  for (Eigen::Index i = 0; i < f.forward_mean.size(); ++i) out << ",mean" << i + 1;
  for (Eigen::Index i = 0; i < f.forward_std.size(); ++i) out << ",std" << i + 1;
  out << "\n";
  char buf[32];
  auto put = [&](double v, bool first) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    if (!first) out << ',';
    out << buf;
  };
  for (const auto& c : candidates) {
    bool first = true;
    for (Eigen::Index i = 0; i < c.x.size(); ++i, first = false) put(c.x(i), first);
    for (Eigen::Index i = 0; i < c.z.size(); ++i) put(c.z(i), false);
    for (Eigen::Index i = 0; i < c.forward_mean.size(); ++i) put(c.forward_mean(i), false);
    for (Eigen::Index i = 0; i < c.forward_std.size(); ++i) put(c.forward_std(i), false);
    out << "\n";
  }
}

}  // namespace inverseflow
