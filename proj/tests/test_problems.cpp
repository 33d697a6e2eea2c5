#include <doctest.h>

#include "inverseflow/dataset.hpp"
#include "inverseflow/problems.hpp"

#include <cmath>
#include <sstream>

using namespace inverseflow;

TEST_CASE("toy forward values") {
  const ToyProblem p;
  CHECK(toy_forward(p, Vec::Zero(2)) == 0.0);
  CHECK(toy_forward(p, Vec{{1.0, 0.0}}) == doctest::Approx(1.0));
  CHECK(toy_forward(p, Vec{{1.0, 1.0}}) == doctest::Approx(2.0));
  Rng rng(4);
  double mean = 0.0;
  for (int i = 0; i < 10000; ++i) mean += toy_forward(p, Vec::Zero(2), &rng);
  CHECK(std::abs(mean / 10000.0) <= 0.015 * 3);
}

TEST_CASE("toy level-set oracle") {
  const ToyProblem p;
  CHECK(toy_inverse_oracle(p, 10.0).radius == doctest::Approx(3.16228).epsilon(1e-5));
  CHECK(toy_inverse_oracle(p, 0.0).radius == 0.0);
  CHECK(toy_inverse_oracle(p, 2.0).radius == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("rejection posterior stays in the box and concentrates on the level set") {
  const ToyProblem p;
  Rng rng(2);
  const Mat s = toy_rejection_posterior(p, 2.0, 2000, rng);
  REQUIRE(s.rows() == 2000);
  CHECK(s.cwiseAbs().maxCoeff() <= 2.0);
  std::vector<double> r;
  for (Eigen::Index i = 0; i < s.rows(); ++i) r.push_back(s.row(i).norm());
  std::nth_element(r.begin(), r.begin() + 1000, r.end());
  CHECK(std::abs(r[1000] - std::sqrt(2.0)) <= 0.1);
}

TEST_CASE("Forrester pair values") {
  const MfPair a = synth_mf_pair(0.5);
  CHECK(a.high == doctest::Approx(std::sin(2.0)));
  CHECK(a.low == doctest::Approx(0.5 * std::sin(2.0) - 5.0));
  CHECK(std::abs(synth_mf_pair(1.0 / 3.0).high) <= 1e-12);
  Vec lo(100), hi(100);
  for (int i = 0; i < 100; ++i) {
    const MfPair v = synth_mf_pair(i / 99.0);
    lo(i) = v.low;
    hi(i) = v.high;
  }
  const Vec lc = lo.array() - lo.mean(), hc = hi.array() - hi.mean();
  CHECK(lc.dot(hc) / (lc.norm() * hc.norm()) > 0.6);
}

TEST_CASE("blade-like problem is deterministic, bounded and smooth") {
  const BladeLikeProblem a(7), b(7);
  Rng rng(3);
  for (int n = 0; n < 50; ++n) {
    Vec x(BladeLikeProblem::kInputs);
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = uniform01(rng);
    for (auto f : {Fidelity::High, Fidelity::Low}) {
      const Vec ya = a.eval_flat(x, f), yb = b.eval_flat(x, f);
      REQUIRE(ya.size() == 202);
      CHECK((ya.array() == yb.array()).all());
      if (f == Fidelity::High) CHECK((ya.cwiseAbs().array() <= a.output_bound().array()).all());
    }
  }
  CHECK(a.observed_smoothness() <= BladeLikeProblem::kSmoothnessBound);
  CHECK_THROWS_AS(a.eval(Vec::Zero(3)), ShapeError);
}

TEST_CASE("dataset CSV round trip and equivalent cost") {
  Dataset d = Dataset::empty(2, 1, 5.0);
  d.append(Vec{{0.1, 0.2}}, Vec::Constant(1, 1.5), Fidelity::High);
  d.append(Vec{{0.3, 0.4}}, Vec::Constant(1, -2.25), Fidelity::Low);
  std::stringstream ss;
  ss << "# schema_version=1\n";
  d.write_csv(ss);
  const Dataset back = Dataset::read_csv(ss);
  CHECK(back.rows() == 2);
  CHECK((back.x.array() == d.x.array()).all());
  CHECK((back.y.array() == d.y.array()).all());
  CHECK(back.fidelity == d.fidelity);
  CHECK(back.count(Fidelity::Low) == 1);
  std::stringstream bad("x1,y1,fidelity\n0.5,1,medium\n");
  CHECK_THROWS(Dataset::read_csv(bad));
}
