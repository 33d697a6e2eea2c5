#include <doctest.h>

#include "inverseflow/cinn_train.hpp"
#include "inverseflow/inversion.hpp"
#include "inverseflow/problems.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace inverseflow;

namespace {

CinnArch arch(int m, int dy, int blocks, std::uint64_t seed) {
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

// Overwrites every parameter with N(0, scale^2) so no subnet is at its zero init.
void randomize(CinnModel& m, double scale, std::uint64_t seed) {
  Rng rng(seed);
  for (auto s : m.parameters())
    for (double& v : s) v = scale * standard_normal(rng);
}

Mat normal(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Mat out(r, c);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = standard_normal(rng);
  return out;
}

DenseNet constant_net(int in, double value) {
  return DenseNet({DenseLayer{Mat::Zero(1, in), Vec::Constant(1, value), Activation::Identity, 0.0}});
}

}  // namespace

TEST_CASE("conditioning net: identity example, determinism, shape") {
  CinnArch a = arch(2, 1, 2, 1);
  a.cond_dim = 1;
  CinnModel m = CinnModel::create(a);
  m.cond_net() = DenseNet({DenseLayer{Mat::Identity(1, 1), Vec::Zero(1), Activation::Identity, 0.0}});
  CHECK(m.condition(Mat::Constant(1, 1, 0.3))(0, 0) == doctest::Approx(0.3));

  CinnModel r = CinnModel::create(arch(3, 2, 2, 5));
  randomize(r, 0.3, 2);
  const Mat y = Mat::Random(2, 4);
  CHECK((r.condition(y).array() == r.condition(y).array()).all());
  CHECK(r.condition(100.0 * y).rows() == 3);
}

TEST_CASE("coupling closed forms") {
  CouplingBlock b;
  b.split = 1;
  b.s_clamp = 2.0;
  // s_raw chosen so that the clamped scale is exactly ln 2.
  b.s_net = constant_net(2, 2.0 * std::atanh(std::log(2.0) / 2.0));
  b.t_net = constant_net(2, 0.0);
  Mat x(2, 1);
  x << 3.0, 5.0;
  const Mat c = Mat::Constant(1, 1, 0.7);
  Vec ld;
  const Mat z = coupling_forward(b, x, c, ld);
  CHECK(z(0, 0) == doctest::Approx(3.0));
  CHECK(z(1, 0) == doctest::Approx(10.0));
  CHECK(ld(0) == doctest::Approx(std::log(2.0)));
  const Mat back = coupling_inverse(b, z, c);
  CHECK(back(1, 0) == doctest::Approx(5.0));

  b.s_net = constant_net(2, 0.0);
  const Mat id = coupling_forward(b, x, c, ld);
  CHECK((id.array() == x.array()).all());
  CHECK(ld(0) == 0.0);
}

TEST_CASE("per-block round trips on random blocks") {
  Rng rng(7);
  double worst = 0.0;
  for (int m : {2, 3, 4, 6}) {
    CinnModel model = CinnModel::create(arch(m, 2, 3, static_cast<std::uint64_t>(m)));
    randomize(model, 0.5, 10 + static_cast<std::uint64_t>(m));
    const Mat c = normal(3, 50, rng);
    for (std::size_t l = 0; l < model.block_count(); ++l) {
      const Mat x = normal(m, 50, rng);
      Vec ld;
      const Mat z = coupling_forward(model.block(l), x, c, ld);
      worst = std::max(worst, (coupling_inverse(model.block(l), z, c) - x).cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("fresh model is a pure permutation with zero logdet") {
  const CinnModel m = CinnModel::create(arch(5, 1, 4, 3));
  Rng rng(1);
  const Mat x = normal(5, 8, rng), y = normal(1, 8, rng);
  Vec ld;
  const Mat z = m.forward(x, y, ld);
  CHECK(ld.cwiseAbs().maxCoeff() == 0.0);
  Mat expect = x;
  for (std::size_t l = 0; l < m.block_count(); ++l) {
    Mat next(expect.rows(), expect.cols());
    const auto& p = m.permutation(l);
    for (int i = 0; i < 5; ++i) next.row(i) = expect.row(p[static_cast<std::size_t>(i)]);
    expect = next;
  }
  CHECK((z - expect).cwiseAbs().maxCoeff() == 0.0);
  // Every coordinate lands in the transformed half at least once.
  std::vector<int> active(5, 0);
  std::vector<int> where(5);
  for (int i = 0; i < 5; ++i) where[static_cast<std::size_t>(i)] = i;
  for (std::size_t l = 0; l < m.block_count(); ++l) {
    std::vector<int> next(5);
    const auto& p = m.permutation(l);
    for (int i = 0; i < 5; ++i) next[static_cast<std::size_t>(i)] = where[static_cast<std::size_t>(p[static_cast<std::size_t>(i)])];
    where = next;
    for (int i = m.block(l).split; i < 5; ++i) active[static_cast<std::size_t>(where[static_cast<std::size_t>(i)])] = 1;
  }
  CHECK(std::count(active.begin(), active.end(), 1) == 5);
}

TEST_CASE("full-model round trip on random models") {
  Rng rng(11);
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const int m = 2 + rep % 5;
    CinnModel model = CinnModel::create(arch(m, 2, 1 + rep % 4, 40 + static_cast<std::uint64_t>(rep)));
    randomize(model, 0.4, 90 + static_cast<std::uint64_t>(rep));
    const Mat x = normal(m, 100, rng), y = normal(2, 100, rng);
    Vec ld;
    worst = std::max(worst, (model.inverse(model.forward(x, y, ld), y) - x).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("logdet matches finite-difference Jacobians") {
  Rng rng(5);
  double worst = 0.0;
  for (int m : {2, 4, 6}) {
    for (int blocks : {1, 3}) {
      for (int rep = 0; rep < 50; ++rep) {
        const std::uint64_t s = static_cast<std::uint64_t>(1000 * m + 100 * blocks + rep);
        CinnModel model = CinnModel::create(arch(m, 1, blocks, s));
        randomize(model, 0.3, s + 1);
        const Mat x = normal(m, 1, rng), y = normal(1, 1, rng);
        Vec ld;
        model.forward(x, y, ld);
        worst = std::max(worst, oracle::rel_err(ld(0), oracle::fd_logdet(model, x, y), 1e-3));
      }
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("loss closed forms") {
  CHECK(cinn_loss(Mat::Zero(2, 1), Vec::Zero(1), 0.0, 0.0) == 0.0);
  Mat z(2, 1);
  z << 2.0, 0.0;
  CHECK(cinn_loss(z, Vec::Constant(1, 0.5), 10.0, 0.01) == doctest::Approx(1.6));
  Rng rng(2);
  const Mat zz = normal(3, 5, rng);
  const Vec ld = normal(5, 1, rng);
  Mat z2(3, 10);
  z2 << zz, zz;
  Vec ld2(10);
  ld2 << ld, ld;
  CHECK(cinn_loss(z2, ld2, 0.0, 0.0) == doctest::Approx(cinn_loss(zz, ld, 0.0, 0.0)).epsilon(1e-14));
}

TEST_CASE("full loss gradient matches central differences") {
  Rng rng(3);
  for (double tau : {0.0, 0.01}) {
    for (std::uint64_t rep = 0; rep < 3; ++rep) {
      CinnModel model = CinnModel::create(arch(4, 1, 3, 70 + rep));
      randomize(model, 0.3, 80 + rep);
      const Mat x = normal(4, 6, rng), y = normal(1, 6, rng);
      CinnGrad g = model.make_grad();
      cinn_loss_and_grad(model, x, y, tau, Mode::Infer, nullptr, g);
      auto loss = [&] {
        Vec ld;
        const Mat z = model.forward(x, y, ld);
        return cinn_loss(z, ld, model.squared_norm(), tau);
      };
      CHECK(oracle::fd_check(model.parameters(), g.spans(), loss) <= 1e-5);
    }
  }
}

TEST_CASE("model JSON round trip is exact and permutations are checked") {
  CinnModel m = CinnModel::create(arch(4, 2, 3, 12));
  randomize(m, 0.2, 1);
  const CinnModel back = CinnModel::from_json(m.to_json());
  Rng rng(1);
  const Mat x = normal(4, 5, rng), y = normal(2, 5, rng);
  Vec a, b;
  CHECK((m.forward(x, y, a).array() == back.forward(x, y, b).array()).all());
  nlohmann::json j = m.to_json();
  std::swap(j["permutations"][0][0], j["permutations"][0][1]);
  CHECK_THROWS(CinnModel::from_json(j));
}

TEST_CASE("training configuration errors") {
  TrainConfig t;
  t.tau = 0.1;
  t.adam.weight_decay = 1e-3;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("short toy training lowers the NLL; zero epochs keeps the init") {
  const ToyProblem p;
  OnlineSampler src(2, 1, [p](Eigen::Index n, Rng& rng) {
    PairBatch b{Mat(2, n), Mat(1, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
      b.x.col(i) = p.sample_x(rng);
      b.y(0, i) = toy_forward(p, b.x.col(i), &rng);
    }
    return b;
  }, 2000, 1);
  CinnArch a = arch(2, 1, 4, 9);
  a.subnet_hidden = {32, 32};
  a.cond_dim = 8;
  a.cond_hidden = {16};
  TrainConfig t;
  t.total_steps = 400;
  t.steps_per_epoch = 100;
  t.schedule = CosineAnneal{3e-3, 1e-4, 400};
  t.seed = 4;
  const TrainResult r = cinn_train(a, src, t);
  CHECK(r.steps == 400);
  CHECK(r.epoch_nll.back() < r.initial_nll);

  Mat xr(30, 2), yr(30, 1);
  Rng rng(2);
  for (int i = 0; i < 30; ++i) {
    xr.row(i) = p.sample_x(rng).transpose();
    yr(i, 0) = toy_forward(p, xr.row(i).transpose());
  }
  FixedPairs fixed(xr, yr);
  TrainConfig zero;
  zero.epochs = 0;
  zero.fit_normalization = false;
  const TrainResult z = cinn_train(a, fixed, zero);
  CinnModel init = CinnModel::create(a);
  auto pa = z.model.to_json(), pb = init.to_json();
  CHECK(pa["blocks"] == pb["blocks"]);
  CHECK(pa["cond_net"] == pb["cond_net"]);
}

TEST_CASE("inversion: determinism, identity flow, serial equals parallel") {
  CinnModel m = CinnModel::create(arch(3, 1, 2, 5));
  InverseQuery q{Vec::Constant(1, 0.4), 1, 77};
  const auto a = cinn_invert(m, q), b = cinn_invert(m, q);
  CHECK((a[0].x.array() == b[0].x.array()).all());
  // Untrained: x is the inverse-permuted latent, i.e. standard normal.
  CHECK((cinn_invert_one(m, a[0].z, q.target) - a[0].x).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(std::abs(a[0].x.squaredNorm() - a[0].z.squaredNorm()) <= 1e-12);

  randomize(m, 0.3, 8);
  q.samples = 300;
  const auto par = cinn_invert(m, q, true), ser = cinn_invert(m, q, false);
  for (std::size_t i = 0; i < par.size(); ++i) CHECK((par[i].x.array() == ser[i].x.array()).all());
  q.samples = 0;
  CHECK_THROWS_AS(cinn_invert(m, q), ConfigError);
}

TEST_CASE("post-processing through forward surrogates") {
  CinnModel m = CinnModel::create(arch(2, 1, 2, 5));
  auto cand = cinn_invert(m, InverseQuery{Vec::Constant(1, 1.0), 20, 3});
  postprocess(cand, AnalyticSurrogate(2, 1, [](const Vec&) { return Vec::Constant(1, 4.2); }));
  for (const auto& c : cand) {
    CHECK(c.forward_mean(0) == 4.2);
    CHECK(c.forward_std(0) == 0.0);
  }
  // GP surrogate with lambda ~ 0 reproduces its training output at a training point.
  Mat xt(5, 2);
  xt << 0, 0, 1, 0, 0, 1, 1, 1, 0.5, 0.5;
  const Vec yt{{0.0, 1.0, 1.0, 2.0, 0.5}};
  const GpModel gp = GpModel::with_hypers(xt, yt, {GpHyper{1.0, Vec::Constant(2, 2.0), 1e-6}}, Normalization::identity(2));
  const MultiOutputSurrogate sur({gp});
  std::vector<DesignCandidate> at{{xt.row(3).transpose(), Vec::Zero(2), {}, {}}};
  postprocess(at, sur);
  CHECK(at[0].forward_mean(0) == doctest::Approx(2.0).epsilon(1e-6));
  std::vector<DesignCandidate> wrong{{Vec::Zero(3), Vec::Zero(3), {}, {}}};
  CHECK_THROWS_AS(postprocess(wrong, sur), ShapeError);

  const auto kept = filter_candidates(cand, {[](const Vec& x) { return x(0) > 0.0; }});
  for (const auto& c : kept) CHECK(c.x(0) > 0.0);
}

TEST_CASE("blade-scale architecture trains without numeric error") {
  const BladeLikeProblem p(7);
  Rng rng(1);
  Mat x(64, 85), y(64, 4);
  for (int i = 0; i < 64; ++i) {
    for (int k = 0; k < 85; ++k) x(i, k) = uniform01(rng);
    const Vec f = p.eval_flat(x.row(i).transpose());
    y.row(i) << f(0), f(1), f(2), f(102);
  }
  CinnArch a;
  a.input_dim = 85;
  a.cond_input_dim = 4;
  a.cond_dim = 128;
  a.blocks = 8;
  a.subnet_hidden = {256, 512, 256};
  a.cond_hidden = {400, 512, 640, 896};
  a.dropout_rate = 0.2;
  TrainConfig t;
  t.batch_size = 16;
  t.epochs = 1;
  t.schedule = PlateauDrop{1e-5, 0.1, 10, 1, 1e-4};
  t.adam.weight_decay = 5e-7;
  FixedPairs src(x, y);
  const TrainResult r = cinn_train(a, src, t);
  CHECK(r.steps == 4);
  CHECK(std::isfinite(r.epoch_nll.back()));
}
