#include "inverseflow/experiments.hpp"
#include "inverseflow/sampling.hpp"

#include <cmath>
#include <sstream>

namespace inverseflow {

GpFitConfig BladeConfig::default_gp() {
  GpFitConfig g;
  // Length scales near the input count keep the initial kernel informative.
  g.prior.beta = {LogNormal{std::log(1.0 / static_cast<double>(BladeLikeProblem::kInputs)), 1.0}};
  g.prior.lambda = LogNormal{std::log(1e-2), 1.0};
  g.mcmc.n_steps = 2000;
  g.mcmc.n_burn = 1000;
  g.mcmc.n_keep = 4;
  return g;
}

CinnArch BladeConfig::default_arch() {
  CinnArch a;
  a.input_dim = static_cast<int>(BladeLikeProblem::kInputs);
  a.cond_input_dim = 0;  // set from the PCA size at run time
  a.cond_dim = 128;
  a.blocks = 8;
  a.subnet_hidden = {256, 512, 256};
  a.cond_hidden = {400, 512, 640, 896};
  a.dropout_rate = 0.2;
  return a;
}

TrainConfig BladeConfig::default_train() {
  TrainConfig t;
  t.batch_size = 16;
  t.epochs = 200;
  t.schedule = PlateauDrop{1e-5, 0.1, 10, 1, 1e-4};
  t.adam.weight_decay = 5e-7;
  return t;
}

namespace {

const char* mode_name(ProfileCodec::Mode m) { return m == ProfileCodec::Mode::Joint ? "joint" : "per_profile"; }

}  // namespace

nlohmann::json BladeConfig::to_json() const {
  return {{"problem_seed", problem_seed},
          {"n_high_init", n_high_init},
          {"n_low_init", n_low_init},
          {"adaptive_rounds", adaptive_rounds},
          {"refit_every", refit_every},
          {"candidates", candidates},
          {"cost_ratio", cost_ratio},
          {"holdout_fraction", holdout_fraction},
          {"gp", gp_fit_config_to_json(gp)},
          {"pca_threshold", pca_threshold},
          {"pca_max_components", pca_max_components},
          {"pca_mode", mode_name(pca_mode)},
          {"pairs", pairs},
          {"sampled_pairs", sampled_pairs},
          {"arch", arch.to_json()},
          {"train", train.to_json()},
          {"targets", targets},
          {"samples", samples},
          {"box_filter", box_filter},
          {"r2_threshold", r2_threshold},
          {"profile_exports", profile_exports}};
}

BladeConfig BladeConfig::from_json(const nlohmann::json& j) {
  BladeConfig c;
  c.problem_seed = j.value("problem_seed", c.problem_seed);
  c.n_high_init = j.value("n_high_init", c.n_high_init);
  c.n_low_init = j.value("n_low_init", c.n_low_init);
  c.adaptive_rounds = j.value("adaptive_rounds", c.adaptive_rounds);
  c.refit_every = j.value("refit_every", c.refit_every);
  c.candidates = j.value("candidates", c.candidates);
  c.cost_ratio = j.value("cost_ratio", c.cost_ratio);
  c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
  if (j.contains("gp")) c.gp = gp_fit_config_from_json(j.at("gp"), c.gp);
  c.pca_threshold = j.value("pca_threshold", c.pca_threshold);
  c.pca_max_components = j.value("pca_max_components", c.pca_max_components);
  const std::string mode = j.value("pca_mode", std::string(mode_name(c.pca_mode)));
  if (mode == "joint") {
    c.pca_mode = ProfileCodec::Mode::Joint;
  } else if (mode == "per_profile") {
    c.pca_mode = ProfileCodec::Mode::PerProfile;
  } else {
    throw ConfigError("pca_mode must be 'joint' or 'per_profile'");
  }
  c.pairs = j.value("pairs", c.pairs);
  c.sampled_pairs = j.value("sampled_pairs", c.sampled_pairs);
  if (j.contains("arch")) {
    nlohmann::json a = c.arch.to_json();
    a.update(j.at("arch"));
    a["cond_input_dim"] = 1;  // placeholder until the PCA size is known
    c.arch = CinnArch::from_json(a);
    c.arch.cond_input_dim = 0;
  }
  if (j.contains("train")) {
    nlohmann::json t = c.train.to_json();
    t.update(j.at("train"));
    c.train = TrainConfig::from_json(t);
  }
  c.targets = j.value("targets", c.targets);
  c.samples = j.value("samples", c.samples);
  c.box_filter = j.value("box_filter", c.box_filter);
  c.r2_threshold = j.value("r2_threshold", c.r2_threshold);
  c.profile_exports = j.value("profile_exports", c.profile_exports);
  if (c.n_high_init < 4 || c.n_low_init < 2 || c.adaptive_rounds < 0 || c.refit_every < 1 || c.candidates < 1 ||
      c.pairs < 2 || c.targets < 2 || c.samples < 1 || !(c.holdout_fraction > 0.0 && c.holdout_fraction < 0.5) ||
      !(c.cost_ratio > 1.0)) {
    throw ConfigError("invalid blade_like settings");
  }
  if (c.arch.input_dim != BladeLikeProblem::kInputs) throw ConfigError("blade_like cINN input_dim must be 85");
  return c;
}

nlohmann::ordered_json ValidationReport::to_json() const {
  auto rows = [](const std::vector<MetricRow>& rs, bool spread) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (const auto& r : rs) {
      nlohmann::ordered_json j;
      j["name"] = r.name;
      j["nrmse"] = r.nrmse;
      j["r2"] = r.r2;
      if (spread) j["mean_spread"] = r.mean_spread;
      a.push_back(j);
    }
    return a;
  };
  nlohmann::ordered_json j;
  j["forward_metrics"] = rows(forward_rows, false);
  j["inverse_metrics"] = rows(inverse_rows, true);
  j["pca_components"] = pca_components;
  j["pca_energy"] = pca_energy;
  j["candidates_kept"] = candidates_kept;
  j["candidates_total"] = candidates_total;
  j["passed"] = passed;
  return j;
}

ValidationReport validate_inverse(const CinnModel& model, const MultiOutputSurrogate& surrogate, const Mat& targets,
                                  Eigen::Index samples, std::uint64_t seed, bool box_filter, double r2_threshold) {
  require_shape(targets.cols() == model.cond_input_dim(), "validation targets do not match the cINN observation size");
  require_shape(surrogate.input_dim() == model.input_dim(), "surrogate and cINN disagree on the input dimension");
  const Eigen::Index n_scalar = surrogate.scalar_count();
  const Eigen::Index n_out = surrogate.output_dim();
  ValidationReport rep;
  rep.output_mean.resize(targets.rows(), n_out);
  rep.output_spread.resize(targets.rows(), n_out);
  std::vector<CandidateFilter> filters;
  if (box_filter) {
    filters.push_back([](const Vec& x) { return (x.array() >= 0.0).all() && (x.array() <= 1.0).all(); });
  }
  for (Eigen::Index t = 0; t < targets.rows(); ++t) {
    InverseQuery q{targets.row(t).transpose(), samples, derive_seed(seed, static_cast<std::uint64_t>(t))};
    auto all = cinn_invert(model, q);
    rep.candidates_total += static_cast<Eigen::Index>(all.size());
    auto kept = filter_candidates(all, filters);
    if (kept.empty()) kept = std::move(all);  // nothing passes: judge the raw samples
    rep.candidates_kept += static_cast<Eigen::Index>(kept.size());
    postprocess(kept, surrogate);
    Vec sum = Vec::Zero(n_out), sq = Vec::Zero(n_out);
    for (const auto& c : kept) {
      sum += c.forward_mean;
      sq += c.forward_mean.cwiseProduct(c.forward_mean);
    }
    const double n = static_cast<double>(kept.size());
    const Vec mean = sum / n;
    rep.output_mean.row(t) = mean.transpose();
    rep.output_spread.row(t) = (sq / n - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt().transpose();
  }
  // Two scalar objectives get the blade table names.
  auto name = [n_scalar](Eigen::Index k) -> std::string {
    if (n_scalar == BladeLikeProblem::kScalars) return k == 0 ? "Efficiency" : "Pseudo Reaction";
    return "y" + std::to_string(k + 1);
  };
  rep.passed = true;
  for (Eigen::Index k = 0; k < n_scalar; ++k) {
    MetricRow r;
    r.name = name(k);
    const Vec truth = targets.col(k);
    r.nrmse = nrmse(rep.output_mean.col(k), truth);
    r.r2 = r_squared(rep.output_mean.col(k), truth);
    r.mean_spread = rep.output_spread.col(k).mean();
    rep.passed = rep.passed && r.r2 >= r2_threshold;
    rep.inverse_rows.push_back(r);
  }
  return rep;
}

namespace {

struct BladeData {
  Dataset raw;      // 202 outputs
  Dataset reduced;  // scalars then PCA coefficients
};

Vec reduce_row(const Vec& flat, const ProfileCodec& codec) {
  Vec out(BladeLikeProblem::kScalars + codec.coefficient_count());
  out.head(BladeLikeProblem::kScalars) = flat.head(BladeLikeProblem::kScalars);
  out.tail(codec.coefficient_count()) = codec.encode(flat.tail(2 * BladeLikeProblem::kSpan));
  return out;
}

std::vector<MfgpModel> fit_all(const Dataset& d, const MfgpFitConfig& base, std::uint64_t seed) {
  std::vector<MfgpModel> models;
  for (Eigen::Index k = 0; k < d.outputs(); ++k) {
    MfgpFitConfig c = base;
    c.eta.mcmc.seed = derive_seed(seed, 2 * static_cast<std::uint64_t>(k));
    c.delta.mcmc.seed = derive_seed(seed, 2 * static_cast<std::uint64_t>(k) + 1);
    models.push_back(mfgp_fit(d, k, c));
  }
  return models;
}

std::string profile_csv(const ArtifactMeta& meta, const Vec& target_profile, const Vec& mean, const Vec& spread) {
  const Eigen::Index n = BladeLikeProblem::kSpan;
  std::ostringstream os;
  os << meta.csv_header()
     << "span,target_pressure,mean_pressure,spread_pressure,target_swirl,mean_swirl,spread_swirl\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(n - 1);
    os << format_double(s) << ',' << format_double(target_profile(i)) << ',' << format_double(mean(i)) << ','
       << format_double(spread(i)) << ',' << format_double(target_profile(n + i)) << ','
       << format_double(mean(n + i)) << ',' << format_double(spread(n + i)) << "\n";
  }
  return os.str();
}

}  // namespace

BladeReport run_blade_like(const BladeConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir) {
  nlohmann::json cfg_json = {{"kind", "blade_like"}, {"seed", seed}, {"blade_like", config.to_json()}};
  const ArtifactMeta meta{"blade_like", config_hash(cfg_json), seed};
  const Eigen::Index d = BladeLikeProblem::kInputs;
  const Eigen::Index ns = BladeLikeProblem::kScalars;
  const Eigen::Index np = 2 * BladeLikeProblem::kSpan;
  const BladeLikeProblem problem(config.problem_seed);
  BladeReport report;

  auto stage = [](const std::string& name, auto&& fn) {
    try {
      return fn();
    } catch (const NumericError& e) {
      throw NumericError("stage " + name + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("stage " + name + ": " + e.what());
    }
  };

  // Initial design and hold-out split.
  Rng doe_rng(derive_seed(seed, 1));
  BladeData data;
  Mat holdout_x, holdout_y;
  ProfileCodec codec;
  stage("doe", [&] {
    const Mat xh = latin_hypercube(config.n_high_init, d, doe_rng);
    const Mat xl = latin_hypercube(config.n_low_init, d, doe_rng);
    const auto n_hold = static_cast<Eigen::Index>(std::ceil(config.holdout_fraction * config.n_high_init));
    data.raw = Dataset::empty(d, ns + np, config.cost_ratio);
    holdout_x = xh.bottomRows(n_hold);
    holdout_y.resize(n_hold, ns + np);
    for (Eigen::Index i = 0; i < xh.rows(); ++i) {
      const Vec xi = xh.row(i).transpose();
      const Vec yi = problem.eval_flat(xi, Fidelity::High);
      if (i < xh.rows() - n_hold) {
        data.raw.append(xi, yi, Fidelity::High);
      } else {
        holdout_y.row(i - (xh.rows() - n_hold)) = yi.transpose();
      }
    }
    for (Eigen::Index i = 0; i < xl.rows(); ++i) {
      const Vec xi = xl.row(i).transpose();
      data.raw.append(xi, problem.eval_flat(xi, Fidelity::Low), Fidelity::Low);
    }
    return 0;
  });

  // PCA on the high-fidelity training profiles.
  stage("reduce", [&] {
    const auto high = data.raw.rows_with(Fidelity::High);
    Mat prof(static_cast<Eigen::Index>(high.size()), np);
    for (std::size_t i = 0; i < high.size(); ++i) {
      prof.row(static_cast<Eigen::Index>(i)) = data.raw.y.row(high[i]).tail(np);
    }
    codec = ProfileCodec::fit(prof, {BladeLikeProblem::kSpan, BladeLikeProblem::kSpan}, config.pca_threshold,
                              config.pca_max_components, config.pca_mode);
    data.reduced = Dataset::empty(d, ns + codec.coefficient_count(), config.cost_ratio);
    for (Eigen::Index i = 0; i < data.raw.rows(); ++i) {
      data.reduced.append(data.raw.x.row(i).transpose(), reduce_row(data.raw.y.row(i).transpose(), codec),
                          data.raw.fidelity[static_cast<std::size_t>(i)]);
    }
    return 0;
  });
  const Eigen::Index k = codec.coefficient_count();

  // Forward surrogate with adaptive sampling.
  MfgpFitConfig fit_cfg{config.gp, config.gp, false, {}};
  std::vector<MfgpModel> models;
  stage("forward", [&] {
    int fits = 0;
    models = fit_all(data.reduced, fit_cfg, derive_seed(seed, 100 + static_cast<std::uint64_t>(fits++)));
    const Mat candidates = shifted_halton(config.candidates, d, doe_rng);
    bool fresh = true;
    for (int round = 1; round <= config.adaptive_rounds; ++round) {
      const AcquisitionResult a = adaptive_select(std::span<const MfgpModel>(models), candidates, config.cost_ratio);
      const Vec yi = problem.eval_flat(a.x, a.fidelity);
      data.raw.append(a.x, yi, a.fidelity);
      data.reduced.append(a.x, reduce_row(yi, codec), a.fidelity);
      fresh = round % config.refit_every == 0;
      if (fresh) {
        models = fit_all(data.reduced, fit_cfg, derive_seed(seed, 100 + static_cast<std::uint64_t>(fits++)));
      } else {
        for (Eigen::Index o = 0; o < data.reduced.outputs(); ++o) {
          models[static_cast<std::size_t>(o)] = mfgp_refit_data(models[static_cast<std::size_t>(o)], data.reduced, o);
        }
      }
    }
    if (!fresh) models = fit_all(data.reduced, fit_cfg, derive_seed(seed, 100 + static_cast<std::uint64_t>(fits)));
    return 0;
  });
  report.n_high = data.raw.count(Fidelity::High);
  report.n_low = data.raw.count(Fidelity::Low);
  {
    std::ostringstream os;
    os << meta.csv_header();
    data.raw.write_csv(os);
    write_text(out_dir / "blade_doe.csv", os.str());
  }

  std::vector<MultiOutputSurrogate::Model> variants(models.begin(), models.end());
  const MultiOutputSurrogate surrogate(std::move(variants), codec);
  {
    nlohmann::ordered_json body;
    body["surrogate"] = surrogate.to_json();
    write_json_report(out_dir / "blade_surrogate.json", meta, body);
  }

  // Hold-out forward metrics.
  ValidationReport forward_part;
  stage("forward-metrics", [&] {
    Mat mean, var;
    surrogate.predict_models(holdout_x, mean, var);
    Mat truth(holdout_x.rows(), ns + k);
    for (Eigen::Index i = 0; i < holdout_x.rows(); ++i) {
      truth.row(i) = reduce_row(holdout_y.row(i).transpose(), codec).transpose();
    }
    for (Eigen::Index o = 0; o < ns + k; ++o) {
      MetricRow r;
      r.name = o == 0 ? "Efficiency" : o == 1 ? "Pseudo reaction" : "PCA-" + std::to_string(o - ns + 1);
      r.nrmse = nrmse(mean.col(o), truth.col(o));
      r.r2 = r_squared(mean.col(o), truth.col(o));
      forward_part.forward_rows.push_back(r);
    }
    return 0;
  });

  // Surrogate pairs for the inverse model.
  Mat pair_x, pair_y;
  stage("pairs", [&] {
    Rng rng(derive_seed(seed, 2));
    pair_x.resize(config.pairs, d);
    for (Eigen::Index i = 0; i < pair_x.size(); ++i) pair_x.data()[i] = uniform01(rng);
    Mat mean, var;
    surrogate.predict_models(pair_x, mean, var);
    pair_y = mean;
    if (config.sampled_pairs) {
      for (Eigen::Index i = 0; i < pair_y.rows(); ++i)
        for (Eigen::Index o = 0; o < pair_y.cols(); ++o)
          pair_y(i, o) += std::sqrt(std::max(var(i, o), 0.0)) * standard_normal(rng);
    }
    return 0;
  });

  CinnModel cinn;
  stage("inverse-training", [&] {
    CinnArch arch = config.arch;
    arch.cond_input_dim = static_cast<int>(ns + k);
    arch.seed = derive_seed(seed, 3);
    TrainConfig train = config.train;
    train.seed = derive_seed(seed, 4);
    FixedPairs source(pair_x, pair_y);
    TrainResult r = cinn_train(arch, source, train);
    report.epoch_nll = r.epoch_nll;
    cinn = std::move(r.model);
    return 0;
  });
  {
    Mat curve(static_cast<Eigen::Index>(report.epoch_nll.size()), 2);
    for (std::size_t e = 0; e < report.epoch_nll.size(); ++e) {
      curve(static_cast<Eigen::Index>(e), 0) = static_cast<double>(e);
      curve(static_cast<Eigen::Index>(e), 1) = report.epoch_nll[e];
    }
    write_csv(out_dir / "blade_training.csv", meta, {"epoch", "mean_nll"}, curve);
    nlohmann::ordered_json body;
    body["model"] = cinn.to_json();
    write_json_report(out_dir / "blade_cinn.json", meta, body);
  }

  // Held-out inverse queries.
  Mat target_x(config.targets, d), targets(config.targets, ns + k), target_flat(config.targets, ns + np);
  {
    Rng rng(derive_seed(seed, 5));
    for (Eigen::Index i = 0; i < target_x.size(); ++i) target_x.data()[i] = uniform01(rng);
    for (Eigen::Index t = 0; t < config.targets; ++t) {
      const Vec flat = problem.eval_flat(target_x.row(t).transpose(), Fidelity::High);
      target_flat.row(t) = flat.transpose();
      targets.row(t) = reduce_row(flat, codec).transpose();
    }
    std::vector<std::string> cols;
    for (Eigen::Index o = 0; o < ns + k; ++o) cols.push_back("y" + std::to_string(o + 1));
    write_csv(out_dir / "blade_targets.csv", meta, cols, targets);
  }
  report.validation = stage("validation", [&] {
    return validate_inverse(cinn, surrogate, targets, config.samples, derive_seed(seed, 6), config.box_filter,
                            config.r2_threshold);
  });
  report.validation.forward_rows = forward_part.forward_rows;
  report.validation.pca_components = k;
  report.validation.pca_energy = codec.energy_captured();

  for (Eigen::Index t = 0; t < std::min(config.profile_exports, config.targets); ++t) {
    write_text(out_dir / ("blade_profile_t" + std::to_string(t) + ".csv"),
               profile_csv(meta, target_flat.row(t).tail(np).transpose(),
                           report.validation.output_mean.row(t).tail(np).transpose(),
                           report.validation.output_spread.row(t).tail(np).transpose()));
  }
  nlohmann::ordered_json body = report.validation.to_json();
  body["n_high"] = report.n_high;
  body["n_low"] = report.n_low;
  body["equivalent_cost"] = equivalent_cost(report.n_high, report.n_low, config.cost_ratio);
  write_json_report(out_dir / "blade_report.json", meta, body);
  return report;
}

}  // namespace inverseflow
