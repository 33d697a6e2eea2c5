#include "inverseflow/cli.hpp"

#include "inverseflow/experiments.hpp"
#include "inverseflow/kernels.hpp"
#include "inverseflow/sampling.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace inverseflow {

namespace {

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Skips the "# key=value" header of an artifact and parses the rest.
nlohmann::json load_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

// Model files are either the bare model or a report whose body holds it under `key`.
nlohmann::json unwrap(const nlohmann::json& j, const char* key) { return j.contains(key) ? j.at(key) : j; }

Dataset load_dataset(const std::string& path, double cost_ratio) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset '" + path + "'");
  return Dataset::read_csv(in, cost_ratio);
}

// Numeric CSV: '#' lines and one header row are skipped.
Mat read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        r.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("'" + path + "': non-numeric cell '" + cell + "'");
      }
    }
    if (!rows.empty() && r.size() != rows.front().size()) throw ShapeError("'" + path + "': ragged rows");
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ConfigError("'" + path + "' holds no data rows");
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  return m;
}

Vec parse_vector(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      v.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + cell + "' in target vector");
    }
  }
  if (v.empty()) throw ConfigError("empty target vector");
  return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ArtifactMeta meta_for(const std::string& kind, const nlohmann::json& config, std::uint64_t seed) {
  return {kind, config_hash({{"kind", kind}, {"seed", seed}, {"config", config}}), seed};
}

// ------------------------------------------------------------------ doe
// Problems available to `doe`: toy (noisy y on the box), forrester (two
// fidelities on [0,1]) and blade_like (85 inputs, 202 outputs).
struct Problem {
  Eigen::Index d = 0, m = 0;
  Vec lo, hi;
  std::function<Vec(const Vec&, Fidelity, Rng&)> eval;
};

Problem make_problem(const nlohmann::json& cfg) {
  const std::string name = cfg.value("problem", std::string("forrester"));
  Problem p;
  if (name == "toy") {
    ToyProblem t;
    t.noise_std = cfg.value("noise_std", t.noise_std);
    t.L_x = cfg.value("L_x", t.L_x);
    t.validate();
    p.d = 2;
    p.m = 1;
    p.lo = Vec::Constant(2, -t.L_x / 2);
    p.hi = Vec::Constant(2, t.L_x / 2);
    p.eval = [t](const Vec& x, Fidelity, Rng& rng) { return Vec::Constant(1, toy_forward(t, x, &rng)); };
  } else if (name == "forrester") {
    p.d = 1;
    p.m = 1;
    p.lo = Vec::Zero(1);
    p.hi = Vec::Ones(1);
    p.eval = [](const Vec& x, Fidelity f, Rng&) {
      const MfPair v = synth_mf_pair(x(0));
      return Vec::Constant(1, f == Fidelity::High ? v.high : v.low);
    };
  } else if (name == "blade_like") {
    auto b = std::make_shared<BladeLikeProblem>(cfg.value("problem_seed", std::uint64_t{7}));
    p.d = BladeLikeProblem::kInputs;
    p.m = BladeLikeProblem::kScalars + 2 * BladeLikeProblem::kSpan;
    p.lo = Vec::Zero(p.d);
    p.hi = Vec::Ones(p.d);
    p.eval = [b](const Vec& x, Fidelity f, Rng&) { return b->eval_flat(x, f); };
  } else {
    throw ConfigError("unknown problem '" + name + "' (toy, forrester, blade_like)");
  }
  return p;
}

Mat design(const std::string& kind, Eigen::Index n, const Problem& p, Rng& rng) {
  Mat unit;
  if (kind == "lhs") {
    unit = latin_hypercube(n, p.d, rng);
  } else if (kind == "halton") {
    unit = shifted_halton(n, p.d, rng);
  } else {
    throw ConfigError("unknown design '" + kind + "' (lhs, halton)");
  }
  return scale_to_box(unit, p.lo, p.hi);
}

int cmd_doe(const nlohmann::json& cfg, std::uint64_t seed, const std::string& out, const std::string& extend,
            const std::string& surrogate_path) {
  const Problem p = make_problem(cfg);
  const double cost_ratio = cfg.value("cost_ratio", 5.0);
  const std::string kind = cfg.value("design", std::string("lhs"));
  Rng rng(derive_seed(seed, 1));
  Rng noise(derive_seed(seed, 2));
  Dataset data = extend.empty() ? Dataset::empty(p.d, p.m, cost_ratio) : load_dataset(extend, cost_ratio);
  require_shape(data.dim() == p.d && data.outputs() == p.m, "existing dataset does not match the problem");
  if (surrogate_path.empty()) {
    for (Fidelity f : {Fidelity::High, Fidelity::Low}) {
      const auto n = cfg.value(f == Fidelity::High ? "n_high" : "n_low", Eigen::Index{0});
      if (n <= 0) continue;
      const Mat x = design(kind, n, p, rng);
      for (Eigen::Index i = 0; i < n; ++i) data.append(x.row(i).transpose(), p.eval(x.row(i).transpose(), f, noise), f);
    }
  } else {
    // Adaptive extension: each round scores candidates with the given MFGP
    // surrogate and refactorizes it on the grown dataset.
    auto sur = MultiOutputSurrogate::from_json(unwrap(load_json_file(surrogate_path), "surrogate"));
    std::vector<MfgpModel> models;
    for (const auto& m : sur.models()) {
      if (!std::holds_alternative<MfgpModel>(m)) throw ConfigError("adaptive doe needs an MFGP surrogate");
      models.push_back(std::get<MfgpModel>(m));
    }
    require_shape(static_cast<Eigen::Index>(models.size()) == p.m && !sur.codec(),
                  "adaptive doe needs one MFGP per raw output");
    const int rounds = cfg.value("adaptive_rounds", 1);
    const Mat cand = design("halton", cfg.value("candidates", Eigen::Index{200}), p, rng);
    for (int r = 0; r < rounds; ++r) {
      const AcquisitionResult a = adaptive_select(std::span<const MfgpModel>(models), cand, cost_ratio);
      data.append(a.x, p.eval(a.x, a.fidelity, noise), a.fidelity);
      std::cout << "round " << r + 1 << ": " << to_string(a.fidelity) << " score " << a.score << "\n";
      for (std::size_t o = 0; o < models.size(); ++o) {
        models[o] = mfgp_refit_data(models[o], data, static_cast<Eigen::Index>(o));
      }
    }
  }
  std::ostringstream os;
  os << meta_for("dataset", cfg, seed).csv_header();
  data.write_csv(os);
  write_text(out, os.str());
  std::cout << "dataset: " << data.count(Fidelity::High) << " high, " << data.count(Fidelity::Low)
            << " low rows, equivalent cost "
            << equivalent_cost(data.count(Fidelity::High), data.count(Fidelity::Low), cost_ratio) << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ forward
int cmd_train_forward(const nlohmann::json& cfg, std::uint64_t seed, const std::string& data_path,
                      const std::string& out) {
  const Dataset data = load_dataset(data_path, cfg.value("cost_ratio", 5.0));
  GpFitConfig gp = cfg.contains("gp") ? gp_fit_config_from_json(cfg.at("gp")) : GpFitConfig{};
  const bool mf = cfg.value("multi_fidelity", data.count(Fidelity::Low) > 0);
  // Trailing outputs listed in profile_channels are compressed with PCA.
  const auto channels = cfg.value("profile_channels", std::vector<Eigen::Index>{});
  Eigen::Index prof_dim = 0;
  for (auto c : channels) prof_dim += c;
  require_shape(prof_dim < data.outputs(), "profile_channels exceed the dataset outputs");
  const Eigen::Index n_scalar = data.outputs() - prof_dim;

  Dataset work = data;
  std::optional<ProfileCodec> codec;
  if (prof_dim > 0) {
    const auto fit_rows = mf ? data.rows_with(Fidelity::High) : [&] {
      std::vector<Eigen::Index> all(static_cast<std::size_t>(data.rows()));
      for (Eigen::Index i = 0; i < data.rows(); ++i) all[static_cast<std::size_t>(i)] = i;
      return all;
    }();
    Mat prof(static_cast<Eigen::Index>(fit_rows.size()), prof_dim);
    for (std::size_t i = 0; i < fit_rows.size(); ++i) prof.row(static_cast<Eigen::Index>(i)) = data.y.row(fit_rows[i]).tail(prof_dim);
    const std::string mode = cfg.value("pca_mode", std::string("joint"));
    codec = ProfileCodec::fit(prof, channels, cfg.value("pca_threshold", 0.9), cfg.value("pca_max_components", Eigen::Index{8}),
                              mode == "joint" ? ProfileCodec::Mode::Joint : ProfileCodec::Mode::PerProfile);
    work = Dataset::empty(data.dim(), n_scalar + codec->coefficient_count(), data.cost_ratio);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      Vec yi(work.outputs());
      yi.head(n_scalar) = data.y.row(i).head(n_scalar).transpose();
      yi.tail(codec->coefficient_count()) = codec->encode(data.y.row(i).tail(prof_dim).transpose());
      work.append(data.x.row(i).transpose(), yi, data.fidelity[static_cast<std::size_t>(i)]);
    }
    std::cout << "pca: " << codec->coefficient_count() << " components, energy " << codec->energy_captured() << "\n";
  }

  std::vector<MultiOutputSurrogate::Model> models;
  for (Eigen::Index o = 0; o < work.outputs(); ++o) {
    if (mf) {
      MfgpFitConfig m{gp, gp, cfg.value("fit_scale", false)};
      m.eta.mcmc.seed = derive_seed(seed, 2 * static_cast<std::uint64_t>(o));
      m.delta.mcmc.seed = derive_seed(seed, 2 * static_cast<std::uint64_t>(o) + 1);
      models.emplace_back(mfgp_fit(work, o, m));
    } else {
      GpFitConfig g = gp;
      g.mcmc.seed = derive_seed(seed, 2 * static_cast<std::uint64_t>(o));
      models.emplace_back(GpModel::fit(work.x, work.y.col(o), g));
    }
    std::cout << "fitted output " << o + 1 << "/" << work.outputs() << "\n";
  }
  const MultiOutputSurrogate sur(std::move(models), codec);
  nlohmann::ordered_json body;
  body["surrogate"] = sur.to_json();
  write_json_report(out, meta_for("surrogate", cfg, seed), body);
  return kExitOk;
}

// ------------------------------------------------------------------ inverse
int cmd_train_inverse(const nlohmann::json& cfg, std::uint64_t seed, const std::string& surrogate_path,
                      const std::string& pairs_path, const std::string& out) {
  Mat px, py;
  if (!pairs_path.empty()) {
    // Pair table: the first input_dim columns are x, the rest y.
    const Mat all = read_numeric_csv(pairs_path);
    const auto d = cfg.value("input_dim", Eigen::Index{0});
    if (d <= 0 || d >= all.cols()) throw ConfigError("train-inverse with --pairs needs config input_dim");
    px = all.leftCols(d);
    py = all.rightCols(all.cols() - d);
  } else if (!surrogate_path.empty()) {
    // Pairs from the surrogate mean at uniform draws over [lo, hi].
    const auto sur = MultiOutputSurrogate::from_json(unwrap(load_json_file(surrogate_path), "surrogate"));
    const Eigen::Index d = sur.input_dim();
    const Vec lo = Vec::Constant(d, cfg.value("box_lo", 0.0));
    const Vec hi = Vec::Constant(d, cfg.value("box_hi", 1.0));
    Rng rng(derive_seed(seed, 1));
    Mat unit(cfg.value("pairs", Eigen::Index{10000}), d);
    for (Eigen::Index i = 0; i < unit.size(); ++i) unit.data()[i] = uniform01(rng);
    px = scale_to_box(unit, lo, hi);
    Mat var;
    sur.predict_models(px, py, var);
  } else {
    throw ConfigError("train-inverse needs --surrogate or --pairs");
  }
  nlohmann::json a = CinnArch{}.to_json();
  if (cfg.contains("arch")) a.update(cfg.at("arch"));
  a["input_dim"] = px.cols();
  a["cond_input_dim"] = py.cols();
  CinnArch arch = CinnArch::from_json(a);
  if (!cfg.contains("arch") || !cfg.at("arch").contains("seed")) arch.seed = derive_seed(seed, 2);
  TrainConfig train = cfg.contains("train") ? TrainConfig::from_json(cfg.at("train")) : TrainConfig{};
  if (!cfg.contains("train") || !cfg.at("train").contains("seed")) train.seed = derive_seed(seed, 3);
  FixedPairs source(px, py);
  const TrainResult r = cinn_train(arch, source, train, [](int e, double nll, double lr) {
    std::cout << "epoch " << e << " nll " << nll << " lr " << lr << "\n";
  });
  nlohmann::ordered_json body;
  body["model"] = r.model.to_json();
  write_json_report(out, meta_for("cinn", cfg, seed), body);
  return kExitOk;
}

int cmd_invert(const nlohmann::json& cfg, std::uint64_t seed, const std::string& model_path,
               const std::string& target, const std::string& target_file, Eigen::Index samples,
               const std::string& surrogate_path, const std::string& out) {
  const CinnModel model = CinnModel::from_json(unwrap(load_json_file(model_path), "model"));
  std::vector<Vec> targets;
  if (!target.empty()) targets.push_back(parse_vector(target));
  if (!target_file.empty()) {
    const Mat t = read_numeric_csv(target_file);
    for (Eigen::Index i = 0; i < t.rows(); ++i) targets.push_back(t.row(i).transpose());
  }
  if (targets.empty()) throw ConfigError("invert needs --target or --target-file");
  if (samples < 0) samples = cfg.value("samples", Eigen::Index{1000});
  std::optional<MultiOutputSurrogate> sur;
  if (!surrogate_path.empty()) sur = MultiOutputSurrogate::from_json(unwrap(load_json_file(surrogate_path), "surrogate"));
  const ArtifactMeta meta = meta_for("candidates", cfg, seed);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    InverseQuery q{targets[t], samples, derive_seed(seed, t)};
    q.validate(model.cond_input_dim());
    auto cand = cinn_invert(model, q);
    if (sur) postprocess(cand, *sur);
    std::string path = out;
    if (targets.size() > 1) {
      const auto dot = out.rfind('.');
      path = dot == std::string::npos ? out + "_t" + std::to_string(t) : out.substr(0, dot) + "_t" + std::to_string(t) + out.substr(dot);
    }
    write_candidates_csv(path, cand, meta.csv_header());
    std::cout << "wrote " << cand.size() << " candidates to " << path << "\n";
  }
  return kExitOk;
}

int cmd_validate(const nlohmann::json& cfg, std::uint64_t seed, const std::string& model_path,
                 const std::string& surrogate_path, const std::string& targets_path, const std::string& out) {
  if (model_path.empty() || surrogate_path.empty() || targets_path.empty()) {
    throw ConfigError("validate needs --model, --surrogate and --targets");
  }
  const CinnModel model = CinnModel::from_json(unwrap(load_json_file(model_path), "model"));
  const auto sur = MultiOutputSurrogate::from_json(unwrap(load_json_file(surrogate_path), "surrogate"));
  const Mat targets = read_numeric_csv(targets_path);
  const auto samples = cfg.value("samples", Eigen::Index{1000});
  if (samples < 1) throw ConfigError("samples must be >= 1");
  const ValidationReport rep = validate_inverse(model, sur, targets, samples, seed, cfg.value("box_filter", false),
                                                cfg.value("r2_threshold", 0.9));
  write_json_report(out, meta_for("validation", cfg, seed), rep.to_json());
  for (const auto& r : rep.inverse_rows) {
    std::cout << r.name << ": nRMSE " << r.nrmse << " R2 " << r.r2 << " spread " << r.mean_spread << "\n";
  }
  std::cout << (rep.passed ? "validation passed" : "validation FAILED") << "\n";
  return rep.passed ? kExitOk : kExitFailure;
}

// ------------------------------------------------------------------ experiments
int cmd_toy(const nlohmann::json& cfg, std::uint64_t seed, const std::string& out) {
  const ToyConfig c = ToyConfig::from_json(cfg);
  const ToyReport r = run_toy(c, seed, out);
  for (const auto& t : r.targets) {
    std::cout << "y=" << t.y << ": median radius " << t.radius.median << " (oracle " << t.oracle_radius.median
              << "), mean |f-y| " << t.mean_abs_forward_error << "\n";
  }
  return kExitOk;
}

int cmd_mf_study(const nlohmann::json& cfg, std::uint64_t seed, const std::string& out) {
  const MfStudyConfig c = MfStudyConfig::from_json(cfg);
  const MfStudyReport r = run_mf_study(c, seed, out);
  for (std::size_t i = 0; i < r.mf_nrmse.size(); ++i) {
    std::cout << "repetition " << i << ": mfgp " << r.mf_nrmse[i] << " sfgp " << r.sf_nrmse[i] << "\n";
  }
  std::cout << "mfgp wins " << r.mf_wins << "/" << r.mf_nrmse.size() << (r.degenerate ? " (degenerate)" : "") << "\n";
  return kExitOk;
}

int cmd_blade_like(const nlohmann::json& cfg, std::uint64_t seed, const std::string& out) {
  const BladeConfig c = BladeConfig::from_json(cfg);
  const BladeReport r = run_blade_like(c, seed, out);
  for (const auto& row : r.validation.forward_rows) {
    std::cout << "forward " << row.name << ": nRMSE " << row.nrmse << " R2 " << row.r2 << "\n";
  }
  for (const auto& row : r.validation.inverse_rows) {
    std::cout << "inverse " << row.name << ": nRMSE " << row.nrmse << " R2 " << row.r2 << " spread "
              << row.mean_spread << "\n";
  }
  std::cout << (r.validation.passed ? "validation passed" : "validation FAILED") << "\n";
  return r.validation.passed ? kExitOk : kExitFailure;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Probabilistic inverse design: GP/MFGP forward surrogates and a cINN inverse model"};
  app.require_subcommand(1);
  std::string config;
  std::uint64_t seed = 0;
  std::string out, data, extend, surrogate, pairs, model, target, target_file, targets;
  Eigen::Index samples = -1;

  auto common = [&](CLI::App* s, const std::string& out_default) {
    s->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
    s->add_option("--seed", seed, "master seed");
    out = out_default;
    s->add_option("--out", out, "output path");
  };
  auto* doe = app.add_subcommand("doe", "generate or extend a dataset");
  common(doe, "dataset.csv");
  doe->add_option("--extend", extend, "existing dataset to extend")->check(CLI::ExistingFile);
  doe->add_option("--surrogate", surrogate, "MFGP surrogate for adaptive extension")->check(CLI::ExistingFile);
  auto* tf = app.add_subcommand("train-forward", "fit GP/MFGP surrogates, one per output");
  common(tf, "surrogate.json");
  tf->add_option("--data", data, "dataset CSV")->required()->check(CLI::ExistingFile);
  auto* ti = app.add_subcommand("train-inverse", "train a cINN on surrogate or tabulated pairs");
  common(ti, "cinn.json");
  ti->add_option("--surrogate", surrogate, "surrogate JSON")->check(CLI::ExistingFile);
  ti->add_option("--pairs", pairs, "pair CSV, x columns then y columns")->check(CLI::ExistingFile);
  auto* inv = app.add_subcommand("invert", "sample designs for a target");
  common(inv, "candidates.csv");
  inv->add_option("--model", model, "cINN JSON")->required()->check(CLI::ExistingFile);
  inv->add_option("--target", target, "comma-separated target vector");
  inv->add_option("--target-file", target_file, "CSV of targets, one per row")->check(CLI::ExistingFile);
  inv->add_option("--samples,-S", samples, "samples per target");
  inv->add_option("--surrogate", surrogate, "surrogate for post-processing")->check(CLI::ExistingFile);
  auto* val = app.add_subcommand("validate", "inverse-consistency check against held-out targets");
  common(val, "validation.json");
  val->add_option("--model", model, "cINN JSON")->check(CLI::ExistingFile);
  val->add_option("--surrogate", surrogate, "surrogate JSON")->check(CLI::ExistingFile);
  val->add_option("--targets", targets, "CSV of targets, one per row")->check(CLI::ExistingFile);
  auto* toy = app.add_subcommand("toy", "2-D toy reproduction");
  common(toy, "toy_out");
  auto* mf = app.add_subcommand("mf-study", "MFGP vs single-fidelity cost study");
  common(mf, "mf_out");
  auto* blade = app.add_subcommand("blade-like", "85-input blade-like end-to-end pipeline");
  common(blade, "blade_out");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  kernels::configure_threads();
  try {
    const nlohmann::json cfg = load_config(config);
    if (*doe) return cmd_doe(cfg, seed, out, extend, surrogate);
    if (*tf) return cmd_train_forward(cfg, seed, data, out);
    if (*ti) return cmd_train_inverse(cfg, seed, surrogate, pairs, out);
    if (*inv) return cmd_invert(cfg, seed, model, target, target_file, samples, surrogate, out);
    if (*val) return cmd_validate(cfg, seed, model, surrogate, targets, out);
    if (*toy) return cmd_toy(cfg, seed, out);
    if (*mf) return cmd_mf_study(cfg, seed, out);
    if (*blade) return cmd_blade_like(cfg, seed, out);
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ShapeError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int cli_dispatch(int argc, char** argv) { return cli_dispatch(std::vector<std::string>(argv, argv + argc)); }

}  // namespace inverseflow
