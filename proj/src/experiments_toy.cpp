#include "inverseflow/experiments.hpp"

#include <cmath>
#include <cstdio>

namespace inverseflow {

nlohmann::json gp_fit_config_to_json(const GpFitConfig& c) {
  nlohmann::json j = {{"prior", c.prior.to_json()}, {"mcmc", c.mcmc.to_json()}, {"normalize", c.normalize}};
  if (c.fixed_lambda) j["fixed_lambda"] = *c.fixed_lambda;
  return j;
}

GpFitConfig gp_fit_config_from_json(const nlohmann::json& j, GpFitConfig c) {
  if (j.contains("prior")) c.prior = HyperPrior::from_json(j.at("prior"));
  if (j.contains("mcmc")) c.mcmc = McmcConfig::from_json(j.at("mcmc"));
  c.normalize = j.value("normalize", c.normalize);
  if (j.contains("fixed_lambda")) c.fixed_lambda = j.at("fixed_lambda").get<double>();
  return c;
}

CinnArch ToyConfig::default_arch() {
  CinnArch a;
  a.input_dim = 2;
  a.cond_input_dim = 1;
  a.cond_dim = 16;
  a.blocks = 8;  // four coupling pairs
  a.subnet_hidden = {64, 64};
  a.cond_hidden = {64};
  a.dropout_rate = 0.0;
  return a;
}

TrainConfig ToyConfig::default_train() {
  TrainConfig t;
  t.batch_size = 128;
  t.total_steps = 20000;
  t.steps_per_epoch = 200;
  t.schedule = CosineAnneal{3e-3, 1e-5, 20000};
  return t;
}

nlohmann::json ToyConfig::to_json() const {
  return {{"noise_std", noise_std},
          {"L_x", L_x},
          {"arch", arch.to_json()},
          {"train", train.to_json()},
          {"targets", targets},
          {"samples", samples},
          {"calibration_size", calibration_size},
          {"oracle_samples", oracle_samples},
          {"hist_bins", hist_bins},
          {"hist_half_width", hist_half_width}};
}

ToyConfig ToyConfig::from_json(const nlohmann::json& j) {
  ToyConfig c;
  c.noise_std = j.value("noise_std", c.noise_std);
  c.L_x = j.value("L_x", c.L_x);
  // Partial arch/train objects override the toy defaults key by key.
  if (j.contains("arch")) {
    nlohmann::json a = c.arch.to_json();
    a.update(j.at("arch"));
    c.arch = CinnArch::from_json(a);
  }
  if (j.contains("train")) {
    nlohmann::json t = c.train.to_json();
    t.update(j.at("train"));
    c.train = TrainConfig::from_json(t);
  }
  c.targets = j.value("targets", c.targets);
  c.samples = j.value("samples", c.samples);
  c.calibration_size = j.value("calibration_size", c.calibration_size);
  c.oracle_samples = j.value("oracle_samples", c.oracle_samples);
  c.hist_bins = j.value("hist_bins", c.hist_bins);
  c.hist_half_width = j.value("hist_half_width", c.hist_half_width);
  if (c.samples < 1 || c.hist_bins < 1 || !(c.hist_half_width > 0.0)) throw ConfigError("invalid toy output settings");
  if (c.arch.input_dim != 2 || c.arch.cond_input_dim != 1) throw ConfigError("toy cINN must map 2 inputs, 1 output");
  return c;
}

namespace {

std::string target_tag(double y) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", y);
  return buf;
}

nlohmann::ordered_json stats_json(const SummaryStats& s) {
  nlohmann::ordered_json j;
  j["mean"] = s.mean;
  j["std"] = s.std;
  j["median"] = s.median;
  j["q25"] = s.q25;
  j["q75"] = s.q75;
  return j;
}

// Density grid over [-h, h]^2: first row x1 edges, second row x2 edges, then
// bins x bins densities (row i is the i-th x2 bin).
std::string histogram_csv(const std::vector<DesignCandidate>& c, int bins, double h, const ArtifactMeta& meta) {
  Mat counts = Mat::Zero(bins, bins);
  const double w = 2.0 * h / bins;
  for (const auto& d : c) {
    const double i1 = std::floor((d.x(0) + h) / w);
    const double i2 = std::floor((d.x(1) + h) / w);
    if (i1 < 0 || i2 < 0 || i1 >= bins || i2 >= bins) continue;
    counts(static_cast<Eigen::Index>(i2), static_cast<Eigen::Index>(i1)) += 1.0;
  }
  const double norm = 1.0 / (static_cast<double>(c.size()) * w * w);
  std::string s = meta.csv_header();
  for (int row = 0; row < 2; ++row) {
    for (int e = 0; e <= bins; ++e) s += (e ? "," : "") + format_double(-h + e * w);
    s += "\n";
  }
  for (int r = 0; r < bins; ++r) {
    for (int k = 0; k < bins; ++k) s += (k ? "," : "") + format_double(counts(r, k) * norm);
    s += "\n";
  }
  return s;
}

}  // namespace

ToyReport run_toy(const ToyConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir) {
  ToyProblem problem;
  problem.noise_std = config.noise_std;
  problem.L_x = config.L_x;
  problem.validate();

  nlohmann::json cfg_json = {{"kind", "toy"}, {"seed", seed}, {"toy", config.to_json()}};
  const ArtifactMeta meta{"toy", config_hash(cfg_json), seed};

  OnlineSampler source(
      2, 1,
      [problem](Eigen::Index n, Rng& rng) {
        PairBatch b{Mat(2, n), Mat(1, n)};
        for (Eigen::Index j = 0; j < n; ++j) {
          const Vec x = problem.sample_x(rng);
          b.x.col(j) = x;
          b.y(0, j) = toy_forward(problem, x, &rng);
        }
        return b;
      },
      config.calibration_size, derive_seed(seed, 3));

  CinnArch arch = config.arch;
  arch.seed = derive_seed(seed, 1);
  TrainConfig train = config.train;
  train.seed = derive_seed(seed, 2);
  TrainResult trained = cinn_train(arch, source, train);

  ToyReport report;
  report.epoch_nll = trained.epoch_nll;
  report.initial_nll = trained.initial_nll;
  report.model = std::move(trained.model);

  Mat curve(static_cast<Eigen::Index>(report.epoch_nll.size()), 2);
  for (std::size_t e = 0; e < report.epoch_nll.size(); ++e) {
    curve(static_cast<Eigen::Index>(e), 0) = static_cast<double>(e);
    curve(static_cast<Eigen::Index>(e), 1) = report.epoch_nll[e];
  }
  write_csv(out_dir / "toy_training.csv", meta, {"epoch", "mean_nll"}, curve);
  {
    nlohmann::ordered_json body;
    body["model"] = report.model.to_json();
    write_json_report(out_dir / "toy_model.json", meta, body);
  }

  AnalyticSurrogate forward(2, 1, [problem](const Vec& x) { return Vec::Constant(1, (x - problem.mu).squaredNorm()); });
  nlohmann::ordered_json targets = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < config.targets.size(); ++t) {
    const double y = config.targets[t];
    InverseQuery q{Vec::Constant(1, y), config.samples, derive_seed(seed, 10 + t)};
    auto cands = cinn_invert(report.model, q);
    postprocess(cands, forward);

    const double ring = toy_inverse_oracle(problem, std::max(y, 0.0)).radius;
    std::vector<double> radius, dev;
    ToyTargetStats st;
    st.y = y;
    for (const auto& c : cands) {
      const double r = c.x.norm();
      radius.push_back(r);
      dev.push_back(std::abs(r - ring));
      st.mean_abs_forward_error += std::abs(c.forward_mean(0) - y);
      if (r < 2.0) st.fraction_inside_2 += 1.0;
    }
    st.mean_abs_forward_error /= static_cast<double>(cands.size());
    st.fraction_inside_2 /= static_cast<double>(cands.size());
    st.radius = summarize(radius);
    st.median_abs_radius_error = quantile(dev, 0.5);

    Rng orng(derive_seed(seed, 20 + t));
    const Mat oracle = toy_rejection_posterior(problem, y, config.oracle_samples, orng);
    std::vector<double> orad;
    for (Eigen::Index i = 0; i < oracle.rows(); ++i) orad.push_back(oracle.row(i).norm());
    st.oracle_radius = summarize(orad);
    report.targets.push_back(st);

    const std::string tag = target_tag(y);
    write_candidates_csv((out_dir / ("toy_samples_y" + tag + ".csv")).string(), cands, meta.csv_header());
    write_text(out_dir / ("toy_hist_y" + tag + ".csv"),
               histogram_csv(cands, config.hist_bins, config.hist_half_width, meta));

    nlohmann::ordered_json tj;
    tj["y"] = y;
    tj["ring_radius"] = ring;
    tj["radius"] = stats_json(st.radius);
    tj["oracle_radius"] = stats_json(st.oracle_radius);
    tj["median_abs_radius_error"] = st.median_abs_radius_error;
    tj["mean_abs_forward_error"] = st.mean_abs_forward_error;
    tj["fraction_inside_radius_2"] = st.fraction_inside_2;
    targets.push_back(tj);
  }
  nlohmann::ordered_json body;
  body["initial_nll"] = report.initial_nll;
  body["final_nll"] = report.epoch_nll.empty() ? report.initial_nll : report.epoch_nll.back();
  body["targets"] = targets;
  write_json_report(out_dir / "toy_report.json", meta, body);
  return report;
}

}  // namespace inverseflow
