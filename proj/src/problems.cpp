#include "inverseflow/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace inverseflow {

void ToyProblem::validate() const {
  if (d_x < 1 || !(L_x > 0.0) || !(noise_std >= 0.0)) throw ConfigError("invalid toy problem parameters");
  require_shape(W.rows() == d_x && W.cols() == d_x && mu.size() == d_x, "toy problem W/mu shape mismatch");
}

Vec ToyProblem::sample_x(Rng& rng) const {
  Vec x(d_x);
  for (Eigen::Index k = 0; k < d_x; ++k) x(k) = (uniform01(rng) - 0.5) * L_x;
  return x;
}

double toy_forward(const ToyProblem& p, const Vec& x, Rng* rng) {
  require_shape(x.size() == p.d_x, "toy_forward: x has wrong dimension");
  const double half = 0.5 * p.L_x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (!(std::abs(x(k)) <= half)) throw DomainError("toy_forward: x outside [-L/2, L/2]^d");
  }
  const Vec r = p.W * x - p.mu;
  double y = r.squaredNorm();
  if (rng && p.noise_std > 0.0) y += p.noise_std * standard_normal(*rng);
  return y;
}

Ring toy_inverse_oracle(const ToyProblem& p, double y) {
  if (!p.W.isIdentity(0.0)) throw ConfigError("toy_inverse_oracle requires W = I");
  if (y < 0.0) throw DomainError("toy_inverse_oracle: y must be non-negative");
  return {p.mu, std::sqrt(y)};
}

Mat toy_rejection_posterior(const ToyProblem& p, double y, Eigen::Index n, Rng& rng) {
  p.validate();
  if (!(p.noise_std > 0.0)) throw ConfigError("rejection oracle needs positive noise");
  if (!p.W.isIdentity(0.0)) throw ConfigError("rejection oracle requires W = I");
  // attainable range of ||x - mu||^2 on the box
  const double half = 0.5 * p.L_x;
  double f_min = 0.0, f_max = 0.0;
  for (Eigen::Index k = 0; k < p.d_x; ++k) {
    const double m = p.mu(k);
    const double near = std::clamp(m, -half, half) - m;
    const double far = std::max(std::abs(half - m), std::abs(-half - m));
    f_min += near * near;
    f_max += far * far;
  }
  const double f_best = std::clamp(y, f_min, f_max);
  const double s2 = 2.0 * p.noise_std * p.noise_std;
  const double log_max = -(y - f_best) * (y - f_best) / s2;
  Mat out(n, p.d_x);
  Eigen::Index got = 0;
  while (got < n) {
    const Vec x = p.sample_x(rng);
    const double f = (x - p.mu).squaredNorm();
    const double log_acc = -(y - f) * (y - f) / s2 - log_max;
    if (std::log(uniform01(rng)) < log_acc) out.row(got++) = x.transpose();
  }
  return out;
}

MfPair synth_mf_pair(double x) {
  const double a = 6.0 * x - 2.0;
  const double high = a * a * std::sin(12.0 * x - 4.0);
  return {0.5 * high + 10.0 * (x - 0.5) - 5.0, high};
}

double BladeLikeProblem::Projection::eval(const Vec& x) const {
  double s = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) s += w[i] * (x(idx[i]) - 0.5);
  return s;
}

double BladeLikeProblem::Projection::max_abs() const {
  double s = 0.0;
  for (double v : w) s += 0.5 * std::abs(v);
  return s;
}

namespace {

// Unit variance under x ~ U(0,1)^d.
void normalize_weights(std::vector<double>& w) {
  double ss = 0.0;
  for (double v : w) ss += v * v;
  const double scale = std::sqrt(12.0 / ss);
  for (double& v : w) v *= scale;
}

constexpr std::array<double, 3> kPressureAmp{0.05, 0.045, 0.04};
constexpr std::array<double, 3> kSwirlAmp{4.0, 3.6, 3.2};

}  // namespace

BladeLikeProblem::BladeLikeProblem(std::uint64_t seed) : seed_(seed) {
  Rng rng(derive_seed(seed, 0xb1ade));
  auto sparse = [&](int count) {
    Projection p;
    std::vector<Eigen::Index> all(kInputs);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    p.idx.assign(all.begin(), all.begin() + count);
    std::sort(p.idx.begin(), p.idx.end());
    for (int i = 0; i < count; ++i) p.w.push_back(standard_normal(rng));
    normalize_weights(p.w);
    return p;
  };
  for (auto& p : eff_) p = sparse(6);
  for (auto& p : rea_) p = sparse(6);
  for (auto& p : modes_) {
    p.idx.resize(kInputs);
    std::iota(p.idx.begin(), p.idx.end(), 0);
    p.w.clear();
    for (Eigen::Index i = 0; i < kInputs; ++i) p.w.push_back(standard_normal(rng));
    normalize_weights(p.w);
  }

  const double pi = std::numbers::pi;
  basis_ = Mat::Zero(kModes, 2 * kSpan);
  base_.resize(2 * kSpan);
  for (Eigen::Index i = 0; i < kSpan; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(kSpan - 1);
    base_(i) = 1.0 - 0.2 * s + 0.05 * s * s;
    base_(kSpan + i) = -12.0 + 30.0 * s * s;
    basis_(0, i) = kPressureAmp[0] * std::sin(pi * s);
    basis_(1, i) = kPressureAmp[1] * std::cos(pi * s);
    basis_(2, i) = kPressureAmp[2] * std::sin(2.0 * pi * s);
    basis_(3, kSpan + i) = kSwirlAmp[0] * std::cos(pi * s);
    basis_(4, kSpan + i) = kSwirlAmp[1] * std::sin(pi * s);
    basis_(5, kSpan + i) = kSwirlAmp[2] * std::cos(2.0 * pi * s);
  }

  // Term-wise worst case over the unit box; eval() below mirrors these terms.
  bound_ = Vec::Zero(kScalars + 2 * kSpan);
  const double e0 = eff_[0].max_abs(), e1 = eff_[1].max_abs();
  const double r0 = rea_[0].max_abs(), r1 = rea_[1].max_abs();
  bound_(0) = 0.90 + 0.02 * e0 + 0.006 * e1 * e1 + 0.008 + 0.015 + 0.005;
  bound_(1) = 0.45 + 0.05 * r0 + 0.02 * r1 + 0.015 + 0.01 * r0 * r1 + 0.02 + 0.01 * r0;
  std::array<double, kModes> amax{};
  for (Eigen::Index k = 0; k < kModes; ++k) amax[static_cast<std::size_t>(k)] = modes_[static_cast<std::size_t>(k)].max_abs();
  for (Eigen::Index i = 0; i < 2 * kSpan; ++i) {
    double b = std::abs(base_(i));
    for (Eigen::Index k = 0; k < kModes; ++k) b += std::abs(basis_(k, i)) * amax[static_cast<std::size_t>(k)];
    if (i < kSpan) {
      b += 0.004 * amax[0] * amax[1] + 0.01 * (1.0 + 0.3 * amax[0]);
    } else {
      b += 0.3 * amax[3] * amax[4] + 1.0 * (1.0 + 0.3 * amax[3]);
    }
    bound_(kScalars + i) = b;
  }

  Rng probe(derive_seed(seed, 0x5a0071));
  for (int n = 0; n < 100; ++n) {
    Vec x(kInputs);
    for (Eigen::Index k = 0; k < kInputs; ++k) x(k) = uniform01(probe);
    const BladeOutputs o = eval(x);
    for (Eigen::Index c = 0; c < 2; ++c) {
      for (Eigen::Index i = 1; i + 1 < kSpan; ++i) {
        const Eigen::Index j = c * kSpan + i;
        const double d2 = std::abs(o.profiles(j + 1) - 2.0 * o.profiles(j) + o.profiles(j - 1));
        observed_smoothness_ = std::max(observed_smoothness_, d2);
      }
    }
  }
  if (observed_smoothness_ > kSmoothnessBound) {
    throw NumericError("blade-like profiles exceed the smoothness bound");
  }
}

BladeOutputs BladeLikeProblem::eval(const Vec& x, Fidelity fidelity) const {
  require_shape(x.size() == kInputs, "blade-like problem expects 85 inputs");
  const double pi = std::numbers::pi;
  const double pe0 = eff_[0].eval(x), pe1 = eff_[1].eval(x), pe2 = eff_[2].eval(x);
  const double pr0 = rea_[0].eval(x), pr1 = rea_[1].eval(x), pr2 = rea_[2].eval(x);
  BladeOutputs o;
  o.scalars.resize(kScalars);
  o.scalars(0) = 0.90 + 0.02 * pe0 - 0.006 * pe1 * pe1 + 0.008 * std::sin(1.5 * pe2);
  o.scalars(1) = 0.45 + 0.05 * pr0 + 0.02 * pr1 + 0.015 * std::sin(pr2) + 0.01 * pr0 * pr1;

  std::array<double, kModes> a{};
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = modes_[k].eval(x);
  o.profiles = base_;
  for (Eigen::Index k = 0; k < kModes; ++k) o.profiles += a[static_cast<std::size_t>(k)] * basis_.row(k).transpose();
  for (Eigen::Index i = 0; i < kSpan; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(kSpan - 1);
    const double wiggle = std::sin(3.0 * pi * s);
    o.profiles(i) += 0.004 * a[0] * a[1] * wiggle;
    o.profiles(kSpan + i) += 0.3 * a[3] * a[4] * wiggle;
  }

  if (fidelity == Fidelity::Low) {
    // smooth systematic bias of the cheap solver
    o.scalars(0) += -0.015 + 0.005 * std::sin(pe1);
    o.scalars(1) += 0.02 + 0.01 * pr0;
    for (Eigen::Index i = 0; i < kSpan; ++i) {
      const double s = static_cast<double>(i) / static_cast<double>(kSpan - 1);
      const double bump = 4.0 * s * (1.0 - s);
      o.profiles(i) += 0.01 * (1.0 + 0.3 * a[0]) * bump;
      o.profiles(kSpan + i) += 1.0 * (1.0 + 0.3 * a[3]) * bump;
    }
  }
  return o;
}

Vec BladeLikeProblem::eval_flat(const Vec& x, Fidelity fidelity) const {
  const BladeOutputs o = eval(x, fidelity);
  Vec out(kScalars + 2 * kSpan);
  out << o.scalars, o.profiles;
  return out;
}

}  // namespace inverseflow
