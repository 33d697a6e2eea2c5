#include <doctest.h>

#include "inverseflow/cli.hpp"
#include "inverseflow/experiments.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace inverseflow;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("inverseflow_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "inverseflow");
  return cli_dispatch(args);
}

// Byte comparison of every file two runs produced.
bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const fs::path other = b / e.path().filename();
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) return false;
    ++n;
  }
  return n > 0;
}

const char* kTinyToy = R"({"train": {"total_steps": 60, "steps_per_epoch": 30,
  "schedule": {"kind": "cosine", "lr_start": 0.003, "lr_end": 0.0001, "total_steps": 60}},
  "arch": {"subnet_hidden": [16], "cond_hidden": [8], "cond_dim": 4, "blocks": 4},
  "calibration_size": 500, "samples": 40, "oracle_samples": 50, "hist_bins": 8})";

}  // namespace

TEST_CASE("nrmse and r_squared closed forms") {
  const Vec t{{0.0, 1.0}};
  CHECK(nrmse(t, t) == 0.0);
  CHECK(r_squared(t, t) == 1.0);
  CHECK(nrmse(t.array() + 0.1, t) == doctest::Approx(0.1).epsilon(1e-14));
  const Vec truth{{1.0, 2.0, 4.0, 7.0}};
  CHECK(r_squared(Vec::Constant(4, truth.mean()), truth) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(r_squared(-truth, truth) < 0.0);
  // affine invariance of nRMSE
  const Vec p{{1.2, 1.7, 4.4, 6.1}};
  CHECK(nrmse(3.0 * p.array() - 2.0, 3.0 * truth.array() - 2.0) == doctest::Approx(nrmse(p, truth)).epsilon(1e-13));
  CHECK_THROWS_AS(nrmse(Vec::Ones(3), Vec::Ones(3)), RangeError);
  CHECK_THROWS_AS(r_squared(Vec::Ones(3), Vec::Ones(3)), RangeError);
  CHECK_THROWS_AS(nrmse(Vec::Ones(1), Vec::Zero(1)), RangeError);
}

TEST_CASE("metric fixtures agree with an independent recomputation") {
  // Expected values computed once with numpy and frozen.
  struct Fixture {
    std::vector<double> truth, pred;
    double nrmse, r2;
  };
  const std::vector<Fixture> fx{
      {{0.0, 1.0}, {0.1, 1.1}, 0.10000000000000005, 0.96},
      {{1.5, 2.0, -0.5, 3.25, 0.0}, {1.4, 2.3, -0.2, 3.0, 0.25}, 0.06693280212272604, 0.965945945945946},
      {{10.0, 12.0, 11.0, 15.0, 9.0, 13.5}, {10.5, 11.0, 11.5, 14.0, 9.5, 14.5}, 0.13176156917368248, 0.8492462311557789},
  };
  for (const auto& f : fx) {
    const Vec t = Eigen::Map<const Vec>(f.truth.data(), static_cast<Eigen::Index>(f.truth.size()));
    const Vec p = Eigen::Map<const Vec>(f.pred.data(), static_cast<Eigen::Index>(f.pred.size()));
    CHECK(std::abs(nrmse(p, t) - f.nrmse) <= 1e-12);
    CHECK(std::abs(r_squared(p, t) - f.r2) <= 1e-12);
  }
}

TEST_CASE("summary statistics") {
  const SummaryStats s = summarize({4.0, 1.0, 3.0, 2.0});
  CHECK(s.mean == 2.5);
  CHECK(s.median == 2.5);
  CHECK(s.q25 == doctest::Approx(1.75));
  CHECK(s.q75 == doctest::Approx(3.25));
  CHECK(s.std == doctest::Approx(std::sqrt(1.25)));
}

TEST_CASE("artifact metadata header") {
  const ArtifactMeta m{"toy", config_hash({{"a", 1}}), 7};
  const std::string h = m.csv_header();
  CHECK(h.rfind("# schema_version=1\n# kind=toy\n# config_hash=", 0) == 0);
  CHECK(h.find("# seed=7\n") != std::string::npos);
  CHECK(config_hash({{"a", 1}, {"b", 2}}) == config_hash({{"b", 2}, {"a", 1}}));
  CHECK(config_hash({{"a", 1}}) != config_hash({{"a", 2}}));
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("experiment configs round-trip through JSON") {
  const ToyConfig t = ToyConfig::from_json(ToyConfig{}.to_json());
  CHECK(t.to_json() == ToyConfig{}.to_json());
  CHECK(t.arch.blocks == 8);
  const MfStudyConfig m = MfStudyConfig::from_json(MfStudyConfig{}.to_json());
  CHECK(m.to_json() == MfStudyConfig{}.to_json());
  const BladeConfig b = BladeConfig::from_json(BladeConfig{}.to_json());
  CHECK(b.to_json() == BladeConfig{}.to_json());
  CHECK(b.arch.subnet_hidden == std::vector<int>{256, 512, 256});
  CHECK(b.pairs == 10000);
  CHECK_THROWS_AS(BladeConfig::from_json({{"pca_mode", "diagonal"}}), ConfigError);
  CHECK_THROWS_AS(ToyConfig::from_json({{"samples", 0}}), ConfigError);
}

TEST_CASE("CLI exit codes") {
  const fs::path dir = scratch("cli");
  CHECK(run({}) == kExitUsage);
  CHECK(run({"frobnicate"}) == kExitUsage);
  CHECK(run({"toy", "--no-such-flag"}) == kExitUsage);
  CHECK(run({"--help"}) == kExitOk);

  write(dir / "doe.json", R"({"problem": "toy", "n_high": 30})");
  REQUIRE(run({"doe", "--config", (dir / "doe.json").string(), "--seed", "3", "--out", (dir / "d.csv").string()}) == kExitOk);
  write(dir / "fwd.json", R"({"gp": {"mcmc": {"n_steps": 300, "n_burn": 100, "n_keep": 3}}})");
  REQUIRE(run({"train-forward", "--config", (dir / "fwd.json").string(), "--data", (dir / "d.csv").string(), "--out",
               (dir / "s.json").string()}) == kExitOk);
  write(dir / "inv.json", R"({"pairs": 256, "box_lo": -2, "box_hi": 2,
    "arch": {"blocks": 2, "cond_dim": 4, "subnet_hidden": [8], "cond_hidden": [8]},
    "train": {"epochs": 1, "batch_size": 64}})");
  REQUIRE(run({"train-inverse", "--config", (dir / "inv.json").string(), "--surrogate", (dir / "s.json").string(),
               "--out", (dir / "c.json").string()}) == kExitOk);

  const std::string model = (dir / "c.json").string();
  CHECK(run({"invert", "--model", model, "--target", "5", "-S", "0", "--out", (dir / "x.csv").string()}) == kExitUsage);
  CHECK(run({"invert", "--model", model, "--target", "5,1", "-S", "3", "--out", (dir / "x.csv").string()}) == kExitUsage);
  REQUIRE(run({"invert", "--model", model, "--target", "5", "-S", "4", "--surrogate", (dir / "s.json").string(), "--out",
               (dir / "x.csv").string()}) == kExitOk);
  const std::string cand = slurp(dir / "x.csv");
  CHECK(cand.rfind("# schema_version=1", 0) == 0);
  CHECK(cand.find("x1,x2,z1,z2,mean1,std1") != std::string::npos);

  // A one-epoch model is far from consistent: exit 2, report still written.
  write(dir / "targets.csv", "y\n0.5\n2\n4\n6\n");
  write(dir / "val.json", R"({"samples": 10, "r2_threshold": 0.999})");
  CHECK(run({"validate", "--config", (dir / "val.json").string(), "--model", model, "--surrogate",
             (dir / "s.json").string(), "--targets", (dir / "targets.csv").string(), "--out",
             (dir / "report.json").string()}) == kExitFailure);
  const auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(rep.at("passed") == false);
  CHECK(rep.at("metadata").at("kind") == "validation");

  write(dir / "bad.json", "{not json");
  CHECK(run({"toy", "--config", (dir / "bad.json").string()}) == kExitUsage);
}

TEST_CASE("toy command is byte-for-byte reproducible on one thread") {
  ::setenv("INVERSEFLOW_THREADS", "1", 1);
  const fs::path dir = scratch("toy");
  write(dir / "toy.json", kTinyToy);
  for (const char* sub : {"a", "b"}) {
    REQUIRE(run({"toy", "--config", (dir / "toy.json").string(), "--seed", "7", "--out", (dir / sub).string()}) == kExitOk);
  }
  CHECK(same_tree(dir / "a", dir / "b"));
  CHECK(fs::exists(dir / "a" / "toy_samples_y10.csv"));
  const std::string hist = slurp(dir / "a" / "toy_hist_y10.csv");
  CHECK(hist.find("# config_hash=") != std::string::npos);
  ::unsetenv("INVERSEFLOW_THREADS");
}

TEST_CASE("MF study with no low-fidelity budget reports degenerate mode") {
  MfStudyConfig c;
  c.repetitions = 1;
  c.budget = 5.0;
  c.sf_budgets = {5.0};
  c.n_high_init = 3;
  c.n_low_init = 0;
  c.gp.mcmc.n_steps = 400;
  c.gp.mcmc.n_burn = 200;
  c.gp.mcmc.n_keep = 3;
  c.fit_scale = false;
  const MfStudyReport r = run_mf_study(c, 1, scratch("mf"));
  CHECK(r.degenerate);
  REQUIRE(r.mf_nrmse.size() == 1);
  CHECK(std::isfinite(r.mf_nrmse[0]));
}
