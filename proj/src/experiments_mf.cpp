#include "inverseflow/experiments.hpp"
#include "inverseflow/sampling.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace inverseflow {

GpFitConfig MfStudyConfig::default_gp() {
  GpFitConfig g;
  // Deterministic simulator: the residual term is expected to be tiny.
  g.prior.lambda = LogNormal{std::log(1e-3), 1.0};
  return g;
}

nlohmann::json MfStudyConfig::to_json() const {
  return {{"repetitions", repetitions},   {"budget", budget},
          {"sf_budgets", sf_budgets},     {"cost_ratio", cost_ratio},
          {"n_high_init", n_high_init},   {"n_low_init", n_low_init},
          {"candidates", candidates},     {"refit_every", refit_every},
          {"holdout_points", holdout_points}, {"gp", gp_fit_config_to_json(gp)},
          {"fit_scale", fit_scale}};
}

MfStudyConfig MfStudyConfig::from_json(const nlohmann::json& j) {
  MfStudyConfig c;
  c.repetitions = j.value("repetitions", c.repetitions);
  c.budget = j.value("budget", c.budget);
  c.sf_budgets = j.value("sf_budgets", c.sf_budgets);
  c.cost_ratio = j.value("cost_ratio", c.cost_ratio);
  c.n_high_init = j.value("n_high_init", c.n_high_init);
  c.n_low_init = j.value("n_low_init", c.n_low_init);
  c.candidates = j.value("candidates", c.candidates);
  c.refit_every = j.value("refit_every", c.refit_every);
  c.holdout_points = j.value("holdout_points", c.holdout_points);
  if (j.contains("gp")) c.gp = gp_fit_config_from_json(j.at("gp"), c.gp);
  c.fit_scale = j.value("fit_scale", c.fit_scale);
  if (c.repetitions < 1 || c.n_high_init < 2 || c.n_low_init < 0 || c.candidates < 1 || c.refit_every < 1 ||
      c.holdout_points < 2 || !(c.cost_ratio > 1.0)) {
    throw ConfigError("invalid mf_study settings");
  }
  for (double b : c.sf_budgets)
    if (b < 2.0) throw ConfigError("single-fidelity budgets must allow at least 2 points");
  return c;
}

namespace {

struct Holdout {
  Mat x;
  Vec y;
};

double sf_nrmse(const MfStudyConfig& c, const Holdout& h, double budget, std::uint64_t rep_seed) {
  const auto n = static_cast<Eigen::Index>(std::floor(budget + 1e-9));
  Rng rng(derive_seed(rep_seed, 1000 + static_cast<std::uint64_t>(std::llround(budget * 1000.0))));
  const Mat x = latin_hypercube(n, 1, rng);
  Vec y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = synth_mf_pair(x(i, 0)).high;
  GpFitConfig g = c.gp;
  g.mcmc.seed = derive_seed(rep_seed, 2000 + static_cast<std::uint64_t>(n));
  const GpModel model = GpModel::fit(x, y, g);
  Vec mean, var;
  model.predict_batch(h.x, mean, var);
  return nrmse(mean, h.y);
}

void add_point(Dataset& d, double x, Fidelity f) {
  const MfPair p = synth_mf_pair(x);
  d.append(Vec::Constant(1, x), Vec::Constant(1, f == Fidelity::High ? p.high : p.low), f);
}

}  // namespace

MfStudyReport run_mf_study(const MfStudyConfig& config, std::uint64_t seed, const std::filesystem::path& out_dir) {
  nlohmann::json cfg_json = {{"kind", "mf_study"}, {"seed", seed}, {"mf_study", config.to_json()}};
  const ArtifactMeta meta{"mf_study", config_hash(cfg_json), seed};
  const double low_cost = 1.0 / config.cost_ratio;

  Holdout hold;
  hold.x = Vec::LinSpaced(config.holdout_points, 0.0, 1.0);
  hold.y.resize(config.holdout_points);
  for (Eigen::Index i = 0; i < config.holdout_points; ++i) hold.y(i) = synth_mf_pair(hold.x(i, 0)).high;

  MfStudyReport report;
  report.degenerate = config.n_low_init == 0;
  for (int rep = 0; rep < config.repetitions; ++rep) {
    const std::uint64_t rep_seed = derive_seed(seed, 100 + static_cast<std::uint64_t>(rep));
    for (double b : config.sf_budgets) {
      const auto n = static_cast<Eigen::Index>(std::floor(b + 1e-9));
      report.curve.push_back({rep, "sfgp", n, 0, static_cast<double>(n), sf_nrmse(config, hold, b, rep_seed)});
    }

    Rng rng(derive_seed(rep_seed, 1));
    Dataset data = Dataset::empty(1, 1, config.cost_ratio);
    const Mat xh = latin_hypercube(config.n_high_init, 1, rng);
    for (Eigen::Index i = 0; i < xh.rows(); ++i) add_point(data, xh(i, 0), Fidelity::High);
    if (report.degenerate) {
      // eta gets only the two minimum seed points, at high-fidelity sites.
      add_point(data, xh(0, 0), Fidelity::Low);
      add_point(data, xh(1, 0), Fidelity::Low);
    } else {
      const Mat xl = latin_hypercube(config.n_low_init, 1, rng);
      for (Eigen::Index i = 0; i < xl.rows(); ++i) add_point(data, xl(i, 0), Fidelity::Low);
    }
    const Mat candidates = shifted_halton(config.candidates, 1, rng);

    MfgpFitConfig fit_cfg{config.gp, config.gp, config.fit_scale, {}};
    fit_cfg.scale_grid = MfgpFitConfig{}.scale_grid;
    auto full_fit = [&](int round) {
      fit_cfg.eta.mcmc.seed = derive_seed(rep_seed, 3000 + static_cast<std::uint64_t>(round));
      fit_cfg.delta.mcmc.seed = derive_seed(rep_seed, 4000 + static_cast<std::uint64_t>(round));
      MfgpModel m = mfgp_fit(data, 0, fit_cfg);
      m.degenerate = report.degenerate;
      return m;
    };
    auto score = [&](const MfgpModel& m) {
      const MfgpBatch b = mfgp_predict_batch(m, hold.x);
      return nrmse(b.mean, hold.y);
    };
    auto cost = [&] { return equivalent_cost(data.count(Fidelity::High), data.count(Fidelity::Low), config.cost_ratio); };
    auto record = [&](double e) {
      report.curve.push_back({rep, "mfgp", data.count(Fidelity::High), data.count(Fidelity::Low), cost(), e});
    };

    int round = 0;
    MfgpModel model = full_fit(round);
    bool fresh = true;
    record(score(model));
    while (true) {
      const bool can_low = !report.degenerate && cost() + low_cost <= config.budget + 1e-9;
      const bool can_high = cost() + 1.0 <= config.budget + 1e-9;
      if (!can_low && !can_high) break;
      AcquisitionResult a = adaptive_select(model, candidates, config.cost_ratio);
      if ((a.fidelity == Fidelity::High && !can_high) || (a.fidelity == Fidelity::Low && !can_low)) {
        Mat s = a.scores;
        s.col(a.fidelity == Fidelity::High ? 1 : 0).setConstant(-std::numeric_limits<double>::infinity());
        a = select_from_scores(candidates, s);
      }
      add_point(data, a.x(0), a.fidelity);
      ++round;
      fresh = round % config.refit_every == 0;
      model = fresh ? full_fit(round) : mfgp_refit_data(model, data, 0);
      record(score(model));
    }
    if (!fresh) {
      model = full_fit(round + 1);
      report.curve.back().nrmse = score(model);
    }
    report.mf_nrmse.push_back(report.curve.back().nrmse);
    report.rho.push_back(model.rho);
    report.sf_nrmse.push_back(sf_nrmse(config, hold, config.budget, rep_seed));
    if (report.mf_nrmse.back() <= report.sf_nrmse.back()) ++report.mf_wins;
  }

  std::ostringstream csv;
  csv << meta.csv_header() << "repetition,method,n_high,n_low,equivalent_cost,nrmse\n";
  for (const auto& p : report.curve) {
    csv << p.repetition << ',' << p.method << ',' << p.n_high << ',' << p.n_low << ',' << format_double(p.cost) << ','
        << format_double(p.nrmse) << "\n";
  }
  write_text(out_dir / "mf_curves.csv", csv.str());

  nlohmann::ordered_json reps = nlohmann::ordered_json::array();
  for (int r = 0; r < config.repetitions; ++r) {
    nlohmann::ordered_json j;
    j["repetition"] = r;
    j["mfgp_nrmse"] = report.mf_nrmse[static_cast<std::size_t>(r)];
    j["sfgp_nrmse"] = report.sf_nrmse[static_cast<std::size_t>(r)];
    j["rho"] = report.rho[static_cast<std::size_t>(r)];
    reps.push_back(j);
  }
  nlohmann::ordered_json body;
  body["budget"] = config.budget;
  body["degenerate"] = report.degenerate;
  body["mfgp_wins"] = report.mf_wins;
  body["repetitions"] = reps;
  write_json_report(out_dir / "mf_report.json", meta, body);
  return report;
}

}  // namespace inverseflow
