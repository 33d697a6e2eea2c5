// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.
// Exit status is 0 when every criterion was evaluated; --strict also turns a
// FAIL into a nonzero status.

#include "inverseflow/cinn_train.hpp"
#include "inverseflow/cli.hpp"
#include "inverseflow/experiments.hpp"
#include "inverseflow/sampling.hpp"
#include "oracles.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace inverseflow;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kToyRadiusTol = 0.35;
constexpr double kToyForwardTol = 1.0;
constexpr double kToyZeroMedianCap = 0.8;
constexpr double kToyMinutes = 15.0;
constexpr double kBlockRoundTrip = 1e-9;
constexpr double kModelRoundTrip = 1e-8;
constexpr double kLogdetRel = 1e-4;
constexpr double kGradRel = 1e-5;
constexpr double kInterpTol = 1e-6;
constexpr double kPosteriorRel = 1e-10;
constexpr int kSbcRuns = 20;
constexpr int kSbcCovered = 16;  // 80 % of 20
constexpr int kMfSeeds = 5;
constexpr int kMfWins = 4;
constexpr double kMfSeconds = 300.0;
constexpr double kPcaTol = 1e-8;
constexpr double kBladeEnergy = 0.90;
constexpr Eigen::Index kBladeMaxK = 8;
constexpr double kBladeR2 = 0.9;
constexpr Eigen::Index kBladeTargets = 100;
constexpr double kBladeHours = 2.0;
constexpr double kFixtureTol = 1e-12;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Mat normal(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Mat out(r, c);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = standard_normal(rng);
  return out;
}

CinnArch small_arch(int m, int dy, int blocks, std::uint64_t seed) {
  CinnArch a;
  a.input_dim = m;
  a.cond_input_dim = dy;
  a.cond_dim = 3;
  a.blocks = blocks;
  a.subnet_hidden = {6};
  a.cond_hidden = {4};
  a.seed = seed;
  return a;
}

void randomize(CinnModel& m, double scale, std::uint64_t seed) {
  Rng rng(seed);
  for (auto s : m.parameters())
    for (double& v : s) v = scale * standard_normal(rng);
}

// ------------------------------------------------------------------ 1
struct ToyRun {
  Outcome outcome;
  CinnModel model;
};

ToyRun criterion_toy(const fs::path& out) {
  const ToyConfig cfg;  // defaults are the reference configuration
  const auto t0 = Clock::now();
  const ToyReport rep = run_toy(cfg, 1, out / "toy");
  const double minutes = seconds_since(t0) / 60.0;
  bool ok = minutes <= kToyMinutes;
  std::ostringstream d;
  for (const auto& t : rep.targets) {
    const double r = t.radius.median;
    if (t.y == 10.0) {
      ok = ok && t.median_abs_radius_error <= kToyRadiusTol && t.mean_abs_forward_error <= kToyForwardTol;
      d << fmt("y=10 median|r-sqrt10| %.3f mean|f-10| %.3f; ", t.median_abs_radius_error, t.mean_abs_forward_error);
    } else if (t.y == 0.0) {
      const double gap = std::abs(r - t.oracle_radius.median);
      ok = ok && gap <= kToyRadiusTol && r <= kToyZeroMedianCap;
      d << fmt("y=0 median r %.3f oracle %.3f; ", r, t.oracle_radius.median);
    } else if (t.y == 2.0) {
      ok = ok && std::abs(r - std::sqrt(2.0)) <= kToyRadiusTol;
      d << fmt("y=2 median r %.3f; ", r);
    }
  }
  d << fmt("%.1f min", minutes);
  return {{ok, d.str()}, rep.model};
}

// ------------------------------------------------------------------ 2
Outcome criterion_invertibility(const CinnModel* trained) {
  Rng rng(21);
  double block = 0.0, random_model = 0.0, trained_model = 0.0;
  // 10 random models x 100 pairs
  for (int rep = 0; rep < 10; ++rep) {
    const int m = 2 + rep % 5;
    CinnModel model = CinnModel::create(small_arch(m, 2, 1 + rep % 4, 300 + static_cast<std::uint64_t>(rep)));
    randomize(model, 0.4, 400 + static_cast<std::uint64_t>(rep));
    const Mat x = normal(m, 100, rng), y = normal(2, 100, rng);
    Vec ld;
    random_model = std::max(random_model, (model.inverse(model.forward(x, y, ld), y) - x).cwiseAbs().maxCoeff());
    const Mat c = model.condition(y);
    for (std::size_t l = 0; l < model.block_count(); ++l) {
      const Mat xb = normal(m, 100, rng);
      const Mat z = coupling_forward(model.block(l), xb, c, ld);
      block = std::max(block, (coupling_inverse(model.block(l), z, c) - xb).cwiseAbs().maxCoeff());
    }
  }
  if (trained) {
    const Mat x = normal(trained->input_dim(), 1000, rng);
    Mat y(trained->cond_input_dim(), 1000);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = uniform01(rng);
    Vec ld;
    trained_model = (trained->inverse(trained->forward(x, y, ld), y) - x).cwiseAbs().maxCoeff();
    const Mat c = trained->condition(y);
    for (std::size_t l = 0; l < trained->block_count(); ++l) {
      const Mat xb = normal(trained->input_dim(), 1000, rng);
      const Mat z = coupling_forward(trained->block(l), xb, c, ld);
      block = std::max(block, (coupling_inverse(trained->block(l), z, c) - xb).cwiseAbs().maxCoeff());
    }
  }
  const bool ok = random_model <= kModelRoundTrip && trained_model <= kModelRoundTrip && block <= kBlockRoundTrip;
  return {ok, fmt("random %.2e trained %.2e per-block %.2e%s", random_model, trained_model, block,
                  trained ? "" : " (no trained model)")};
}

// ------------------------------------------------------------------ 3
Outcome criterion_logdet() {
  Rng rng(31);
  double worst = 0.0;
  for (int m : {2, 4, 6}) {
    for (int blocks : {1, 3}) {
      for (int rep = 0; rep < 50; ++rep) {
        const std::uint64_t s = static_cast<std::uint64_t>(5000 + 1000 * m + 100 * blocks + rep);
        CinnModel model = CinnModel::create(small_arch(m, 1, blocks, s));
        randomize(model, 0.3, s + 1);
        const Mat x = normal(m, 1, rng), y = normal(1, 1, rng);
        Vec ld;
        model.forward(x, y, ld);
        worst = std::max(worst, oracle::rel_err(ld(0), oracle::fd_logdet(model, x, y), 1e-3));
      }
    }
  }
  return {worst <= kLogdetRel, fmt("worst rel err %.2e over 300 cases", worst)};
}

// ------------------------------------------------------------------ 4
Outcome criterion_gradients() {
  double net_worst = 0.0, loss_worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    DenseNet net = DenseNet::mlp(3, {5, 5}, 2, 0.0, rng);  // 20 + 30 + 12 = 62 parameters
    for (std::size_t l = 0; l < net.layer_count(); ++l)
      for (Eigen::Index i = 0; i < net.layer(l).bias.size(); ++i) net.layer(l).bias(i) = 0.1 * standard_normal(rng);
    const Mat x = normal(3, 5, rng), up = normal(2, 5, rng);
    NetCache cache;
    net.forward(x, Mode::Infer, nullptr, &cache);
    NetGrad g = net.make_grad();
    net.backward(cache, up, g);
    auto f = [&] { return (net.forward(x, Mode::Infer).array() * up.array()).sum(); };
    net_worst = std::max(net_worst, oracle::fd_check(net.parameters(), g.spans(), f, 1e-6));
  }
  Rng rng(41);
  for (double tau : {0.0, 0.01}) {
    for (std::uint64_t rep = 0; rep < 3; ++rep) {
      CinnModel model = CinnModel::create(small_arch(4, 1, 3, 170 + rep));
      randomize(model, 0.3, 180 + rep);
      const Mat x = normal(4, 6, rng), y = normal(1, 6, rng);
      CinnGrad g = model.make_grad();
      cinn_loss_and_grad(model, x, y, tau, Mode::Infer, nullptr, g);
      auto loss = [&] {
        Vec ld;
        const Mat z = model.forward(x, y, ld);
        return cinn_loss(z, ld, model.squared_norm(), tau);
      };
      loss_worst = std::max(loss_worst, oracle::fd_check(model.parameters(), g.spans(), loss));
    }
  }
  return {net_worst <= kGradRel && loss_worst <= kGradRel,
          fmt("net (62 params) %.2e, cinn loss M=4 %.2e", net_worst, loss_worst)};
}

// ------------------------------------------------------------------ 5
Outcome criterion_gp() {
  Mat x(20, 1);
  Vec y(20);
  for (int i = 0; i < 20; ++i) {
    x(i, 0) = i / 19.0;
    y(i) = std::sin(6.0 * x(i, 0)) + 0.5 * x(i, 0);
  }
  const GpModel interp =
      GpModel::with_hypers(x, y, {GpHyper{1.0, Vec::Constant(1, 100.0), 0.0}}, Normalization::identity(1));
  GpFitConfig fit_cfg;
  fit_cfg.fixed_lambda = 0.0;
  fit_cfg.mcmc.seed = 4;
  const GpModel fitted = GpModel::fit(x, y, fit_cfg);
  double interp_err = 0.0, fitted_err = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Vec xi = x.row(i).transpose();
    interp_err = std::max(interp_err, std::abs(interp.predict(xi).mean - y(i)));
    fitted_err = std::max(fitted_err, std::abs(fitted.predict(xi).mean - y(i)));
  }

  Rng rng(51);
  double post = 0.0;
  for (int rep = 0; rep < 40; ++rep) {
    const Eigen::Index n = 1 + rep % 8, d = 1 + rep % 3;
    Mat xs(n, d);
    for (Eigen::Index i = 0; i < xs.size(); ++i) xs.data()[i] = 2.0 * uniform01(rng);
    const Vec ys = normal(n, 1, rng);
    Vec beta(d);
    for (Eigen::Index k = 0; k < d; ++k) beta(k) = std::exp(standard_normal(rng));
    const GpHyper h{std::exp(0.5 * standard_normal(rng)), beta, 0.05 + 0.5 * uniform01(rng)};
    HyperPrior prior;
    prior.beta = {LogNormal{0.3, 0.8}};
    post = std::max(post, oracle::rel_err(log_posterior(xs, ys, h, prior),
                                          oracle::dense_log_posterior(xs, ys, h, prior, kJitterStart * h.sigma * h.sigma)));
  }

  const GpHyper truth{1.0, Vec::Constant(1, 4.0), 0.1};
  int covered[3] = {0, 0, 0};
  for (int r = 0; r < kSbcRuns; ++r) {
    Rng g(derive_seed(2024, static_cast<std::uint64_t>(r)));
    const Mat xs = scale_to_box(latin_hypercube(40, 1, g), Vec::Zero(1), Vec::Constant(1, 3.0));
    const Mat l = Eigen::LLT<Mat>(oracle::dense_cov(xs, truth, 1e-10)).matrixL();
    const Vec ys = l * normal(40, 1, g);
    GpFitConfig cfg;
    cfg.normalize = false;
    cfg.mcmc.seed = derive_seed(99, static_cast<std::uint64_t>(r));
    const GpModel m = GpModel::fit(xs, ys, cfg);
    std::vector<double> s, b, lam;
    for (std::size_t i = 0; i < m.sample_count(); ++i) {
      s.push_back(m.sample(i).hyper.sigma);
      b.push_back(m.sample(i).hyper.beta(0));
      lam.push_back(m.sample(i).hyper.lambda);
    }
    auto inside = [](const std::vector<double>& v, double t) { return quantile(v, 0.025) <= t && t <= quantile(v, 0.975); };
    covered[0] += inside(s, 1.0);
    covered[1] += inside(b, 4.0);
    covered[2] += inside(lam, 0.1);
  }
  const bool ok = interp_err <= kInterpTol && post <= kPosteriorRel && covered[0] >= kSbcCovered &&
                  covered[1] >= kSbcCovered && covered[2] >= kSbcCovered;
  return {ok, fmt("interp %.2e (MCMC-fitted, info: %.2e), log-post rel %.2e, SBC sigma %d/%d beta %d/%d lambda %d/%d",
                  interp_err, fitted_err, post, covered[0], kSbcRuns, covered[1], kSbcRuns, covered[2], kSbcRuns)};
}

// ------------------------------------------------------------------ 6
Outcome criterion_mf(const fs::path& out) {
  MfStudyConfig cfg;
  cfg.repetitions = kMfSeeds;
  const auto t0 = Clock::now();
  const MfStudyReport rep = run_mf_study(cfg, 1, out / "mf");
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << fmt("MFGP wins %d/%d at cost %.0f, %.0f s; nRMSE mf/sf:", rep.mf_wins, kMfSeeds, cfg.budget, secs);
  for (std::size_t i = 0; i < rep.mf_nrmse.size(); ++i) d << fmt(" %.3f/%.3f", rep.mf_nrmse[i], rep.sf_nrmse[i]);
  return {rep.mf_wins >= kMfWins && secs <= kMfSeconds, d.str()};
}

// ------------------------------------------------------------------ 7
Outcome criterion_pca() {
  Rng rng(71);
  Mat y = normal(40, 12, rng);
  for (Eigen::Index k = 0; k < 12; ++k) y.col(k) *= 1.0 / (1.0 + k);
  const Vec ev = oracle::covariance_eigenvalues(y);
  const double total = ev.sum();
  double energy = 0.0, recon = 0.0;
  for (double thr : {0.5, 0.8, 0.95, 1.0}) {
    const PcaBasis b = pca_fit(y, thr);
    double cum = 0.0;
    for (Eigen::Index k = 0; k < b.k(); ++k) {
      energy = std::max(energy, std::abs(b.energy_fractions(k) - ev(k) / total));
      cum += ev(k) / total;
    }
    energy = std::max(energy, std::abs(b.total_energy_captured - cum));
    const Mat rec = pca_decode_rows(b, pca_encode_rows(b, y));
    const double mse = (y - rec).squaredNorm() / static_cast<double>(y.rows() - 1);
    recon = std::max(recon, std::abs(mse - ev.tail(ev.size() - b.k()).sum()));
  }

  const BladeLikeProblem p(7);
  const Eigen::Index n = 1000;
  Mat prof(n, 2 * BladeLikeProblem::kSpan);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec x(BladeLikeProblem::kInputs);
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = uniform01(rng);
    prof.row(i) = p.eval(x).profiles.transpose();
  }
  const ProfileCodec c = ProfileCodec::fit(prof, {BladeLikeProblem::kSpan, BladeLikeProblem::kSpan}, kBladeEnergy,
                                           kBladeMaxK, ProfileCodec::Mode::Joint);
  const bool ok = energy <= kPcaTol && recon <= kPcaTol && c.energy_captured() >= kBladeEnergy &&
                  c.coefficient_count() <= kBladeMaxK;
  return {ok, fmt("energy dev %.2e, recon dev %.2e, blade energy %.4f with k=%ld", energy, recon, c.energy_captured(),
                  static_cast<long>(c.coefficient_count()))};
}

// ------------------------------------------------------------------ 8
Outcome criterion_blade(const fs::path& config_path, const fs::path& out) {
  std::ifstream in(config_path);
  if (!in) return {false, "config not found: " + config_path.string()};
  const BladeConfig cfg = BladeConfig::from_json(nlohmann::json::parse(in));
  const auto t0 = Clock::now();
  const BladeReport rep = run_blade_like(cfg, 1, out / "blade");
  const double hours = seconds_since(t0) / 3600.0;
  const ValidationReport& v = rep.validation;

  bool schema = v.inverse_rows.size() == 2 && v.inverse_rows[0].name == "Efficiency" &&
                v.inverse_rows[1].name == "Pseudo Reaction" &&
                v.forward_rows.size() == static_cast<std::size_t>(2 + v.pca_components) &&
                v.forward_rows[0].name == "Efficiency" && v.forward_rows[1].name == "Pseudo reaction";
  for (Eigen::Index k = 0; schema && k < v.pca_components; ++k)
    schema = v.forward_rows[static_cast<std::size_t>(2 + k)].name == "PCA-" + std::to_string(k + 1);
  const nlohmann::ordered_json j = v.to_json();
  for (const char* key : {"forward_metrics", "inverse_metrics"})
    for (const auto& row : j.at(key)) schema = schema && row.contains("name") && row.contains("nrmse") && row.contains("r2");
  for (const auto& row : j.at("inverse_metrics")) schema = schema && row.contains("mean_spread");

  bool ok = schema && cfg.targets == kBladeTargets && hours <= kBladeHours;
  std::ostringstream d;
  for (const auto& r : v.inverse_rows) {
    ok = ok && r.r2 >= kBladeR2;
    d << fmt("%s R2 %.3f; ", r.name.c_str(), r.r2);
  }
  d << fmt("targets %ld, schema %s, %.1f min", static_cast<long>(cfg.targets), schema ? "ok" : "mismatch", hours * 60.0);
  return {ok, d.str()};
}

// ------------------------------------------------------------------ 9
Outcome criterion_fixtures() {
  struct Fixture {
    std::vector<double> truth, pred;
    double nrmse, r2;
  };
  // Reference values computed independently and frozen.
  const std::vector<Fixture> fx{
      {{0.0, 1.0}, {0.1, 1.1}, 0.10000000000000005, 0.96},
      {{1.5, 2.0, -0.5, 3.25, 0.0}, {1.4, 2.3, -0.2, 3.0, 0.25}, 0.06693280212272604, 0.965945945945946},
      {{10.0, 12.0, 11.0, 15.0, 9.0, 13.5}, {10.5, 11.0, 11.5, 14.0, 9.5, 14.5}, 0.13176156917368248, 0.8492462311557789},
  };
  double worst = 0.0;
  for (const auto& f : fx) {
    const Vec t = Eigen::Map<const Vec>(f.truth.data(), static_cast<Eigen::Index>(f.truth.size()));
    const Vec p = Eigen::Map<const Vec>(f.pred.data(), static_cast<Eigen::Index>(f.pred.size()));
    worst = std::max({worst, std::abs(nrmse(p, t) - f.nrmse), std::abs(r_squared(p, t) - f.r2)});
  }
  const Vec truth{{1.0, 2.0, 4.0, 7.0}};
  const double mean_r2 = r_squared(Vec::Constant(4, truth.mean()), truth);
  return {worst <= kFixtureTol && mean_r2 == 0.0, fmt("worst deviation %.1e, mean predictor R2 %g", worst, mean_r2)};
}

// ------------------------------------------------------------------ 10
int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "inverseflow");
  return cli_dispatch(args);
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// Every subcommand once, all outputs under `dir`. Returns the failed step, or "".
std::string cli_session(const fs::path& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  const auto c = [&](const char* f) { return (cfg / f).string(); };
  const auto o = [&](const char* f) { return (dir / f).string(); };
  if (cli({"doe", "--config", c("doe.json"), "--seed", "5", "--out", o("doe.csv")}) != 0) return "doe";
  if (cli({"doe", "--config", c("doe.json"), "--seed", "6", "--extend", o("doe.csv"), "--out", o("doe_ext.csv")}) != 0)
    return "doe --extend";
  if (cli({"train-forward", "--config", c("fwd.json"), "--seed", "5", "--data", o("doe.csv"), "--out", o("s.json")}) != 0)
    return "train-forward";
  if (cli({"train-inverse", "--config", c("inv.json"), "--seed", "5", "--surrogate", o("s.json"), "--out",
           o("c.json")}) != 0)
    return "train-inverse";
  if (cli({"invert", "--model", o("c.json"), "--target", "2", "-S", "50", "--seed", "5", "--surrogate", o("s.json"),
           "--out", o("cand.csv")}) != 0)
    return "invert";
  const int v = cli({"validate", "--config", c("val.json"), "--seed", "5", "--model", o("c.json"), "--surrogate",
                     o("s.json"), "--targets", c("targets.csv"), "--out", o("validation.json")});
  if (v != kExitOk && v != kExitFailure) return "validate";
  if (cli({"toy", "--config", c("toy.json"), "--seed", "5", "--out", o("toy")}) != 0) return "toy";
  if (cli({"mf-study", "--config", c("mf.json"), "--seed", "5", "--out", o("mf")}) != 0) return "mf-study";
  const int b = cli({"blade-like", "--config", c("blade.json"), "--seed", "5", "--out", o("blade")});
  if (b != kExitOk && b != kExitFailure) return "blade-like";
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome criterion_determinism(const fs::path& out) {
  ::setenv("INVERSEFLOW_THREADS", "1", 1);
  const fs::path cfg = out / "cli_cfg";
  fs::remove_all(out / "cli_a");
  fs::remove_all(out / "cli_b");
  fs::create_directories(cfg);
  put(cfg / "doe.json", R"({"problem": "toy", "n_high": 40})");
  put(cfg / "fwd.json", R"({"gp": {"mcmc": {"n_steps": 400, "n_burn": 200, "n_keep": 4}}})");
  put(cfg / "inv.json", R"({"pairs": 512, "box_lo": -2, "box_hi": 2,
    "arch": {"blocks": 4, "cond_dim": 4, "subnet_hidden": [16], "cond_hidden": [8]},
    "train": {"epochs": 2, "batch_size": 64}})");
  put(cfg / "val.json", R"({"samples": 20})");
  put(cfg / "targets.csv", "y\n1\n3\n5\n");
  put(cfg / "toy.json", R"({"train": {"total_steps": 200, "steps_per_epoch": 50,
    "schedule": {"kind": "cosine", "lr_start": 0.003, "lr_end": 0.0001, "total_steps": 200}},
    "arch": {"subnet_hidden": [16], "cond_hidden": [8], "cond_dim": 4, "blocks": 4},
    "calibration_size": 1000, "samples": 100, "oracle_samples": 200})");
  put(cfg / "mf.json", R"({"repetitions": 2, "budget": 8, "sf_budgets": [4, 8],
    "gp": {"mcmc": {"n_steps": 400, "n_burn": 200, "n_keep": 4}}})");
  put(cfg / "blade.json", R"({"n_high_init": 30, "n_low_init": 60, "adaptive_rounds": 2, "candidates": 50,
    "gp": {"mcmc": {"n_steps": 300, "n_burn": 150, "n_keep": 3}}, "pairs": 400,
    "arch": {"blocks": 4, "cond_dim": 8, "subnet_hidden": [16], "cond_hidden": [16], "dropout_rate": 0.1},
    "train": {"epochs": 2, "batch_size": 64}, "targets": 10, "samples": 20, "profile_exports": 2})");

  std::string failed = cli_session(cfg, out / "cli_a");
  if (failed.empty()) failed = cli_session(cfg, out / "cli_b");
  ::unsetenv("INVERSEFLOW_THREADS");
  if (!failed.empty()) return {false, "command failed: " + failed};

  std::size_t files = 0;
  std::vector<std::string> differ;
  for (const auto& e : fs::recursive_directory_iterator(out / "cli_a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), out / "cli_a");
    ++files;
    const fs::path other = out / "cli_b" / rel;
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) differ.push_back(rel.string());
  }
  std::ostringstream d;
  d << files << " artifacts from 9 commands, " << differ.size() << " differ";
  for (const auto& f : differ) d << " " << f;
  return {files > 0 && differ.empty(), d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  std::string out = (fs::temp_directory_path() / "inverseflow_acceptance").string();
  std::string blade_config = "configs/blade_desk.json";
  bool strict = false;
  app.add_option("--only", only, "criteria to run (default all)")->delimiter(',');
  app.add_option("--out", out, "scratch directory for artifacts");
  app.add_option("--blade-config", blade_config, "blade-like configuration");
  app.add_flag("--strict", strict, "nonzero exit when any criterion fails");
  CLI11_PARSE(app, argc, argv);

  const fs::path dir(out);
  fs::create_directories(dir);
  auto wanted = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };

  // Also kept on disk: ctest hides the output of passing tests.
  std::ofstream summary(dir / "summary.txt");
  auto emit = [&](const std::string& line) {
    std::cout << line << std::endl;
    summary << line << std::endl;
  };

  int failures = 0, errors = 0;
  auto report = [&](int k, auto&& fn) {
    if (!wanted(k)) return;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
      ++errors;
    }
    failures += !o.pass;
    emit("criterion " + std::to_string(k) + ": " + (o.pass ? "PASS" : "FAIL") + "  " + o.detail +
         fmt("  [%.0f s]", seconds_since(t0)));
  };

  std::optional<CinnModel> trained;
  report(1, [&] {
    ToyRun r = criterion_toy(dir);
    trained = std::move(r.model);
    return r.outcome;
  });
  report(2, [&] {
    if (!trained) {
      // Short training run so the round trip also covers non-trivial weights.
      ToyConfig cfg;
      cfg.train.total_steps = 500;
      cfg.train.schedule = CosineAnneal{3e-3, 1e-5, 500};
      cfg.calibration_size = 1000;
      cfg.samples = 100;
      cfg.oracle_samples = 100;
      trained = run_toy(cfg, 2, dir / "toy_short").model;
    }
    return criterion_invertibility(&*trained);
  });
  report(3, criterion_logdet);
  report(4, criterion_gradients);
  report(5, criterion_gp);
  report(6, [&] { return criterion_mf(dir); });
  report(7, criterion_pca);
  report(8, [&] { return criterion_blade(blade_config, dir); });
  report(9, criterion_fixtures);
  report(10, [&] { return criterion_determinism(dir); });

  emit("acceptance: " + std::to_string(failures) + " failed" + (errors ? fmt(" (%d with errors)", errors) : ""));
  if (errors) return 2;
  return strict && failures ? 1 : 0;
}
