#pragma once

#include "inverseflow/common.hpp"
#include "inverseflow/dataset.hpp"

#include <array>
#include <cstdint>
#include <vector>
#include <utility>

namespace inverseflow {

// y = ||W x - mu||^2 + eps on the box [-L/2, L/2]^d with uniform p(x).
struct ToyProblem {
  Eigen::Index d_x = 2;
  double L_x = 4.0;
  Mat W = Mat::Identity(2, 2);
  Vec mu = Vec::Zero(2);
  double noise_std = 0.5;

  void validate() const;
  Vec sample_x(Rng& rng) const;
};

// Noise is drawn only when rng is non-null.
double toy_forward(const ToyProblem& p, const Vec& x, Rng* rng = nullptr);

struct Ring {
  Vec center;
  double radius = 0.0;
};

// Level set {x : f(x) = y}; only defined for W = I.
Ring toy_inverse_oracle(const ToyProblem& p, double y);

// Exact draws from p(x | y) under the uniform prior and Gaussian noise model,
// by rejection against the best attainable likelihood on the box.
Mat toy_rejection_posterior(const ToyProblem& p, double y, Eigen::Index n, Rng& rng);

struct MfPair {
  double low = 0.0;
  double high = 0.0;
};

// Forrester pair: high = (6x-2)^2 sin(12x-4), low = 0.5 high + 10(x-0.5) - 5.
MfPair synth_mf_pair(double x);

struct BladeOutputs {
  Vec scalars;   // efficiency-like, reaction-like
  Vec profiles;  // pressure (100) then swirl (100)
};

// Seeded stand-in for an 85-parameter blade evaluated by CFD: two scalar
// objectives and two 100-point span-wise profiles whose variation is driven by
// six linear functionals of x.
class BladeLikeProblem {
 public:
  static constexpr Eigen::Index kInputs = 85;
  static constexpr Eigen::Index kSpan = 100;
  static constexpr Eigen::Index kScalars = 2;
  static constexpr Eigen::Index kModes = 6;
  // Seed-independent cap on the span-wise second difference of any profile.
  static constexpr double kSmoothnessBound = 0.1;

  explicit BladeLikeProblem(std::uint64_t seed);

  BladeOutputs eval(const Vec& x, Fidelity fidelity = Fidelity::High) const;
  // Concatenated [scalars, profiles] row, 202 values.
  Vec eval_flat(const Vec& x, Fidelity fidelity = Fidelity::High) const;

  std::uint64_t seed() const { return seed_; }
  // Per-output absolute bound valid on the unit box, recorded at construction.
  const Vec& output_bound() const { return bound_; }
  // Largest second difference seen over the construction-time probe set.
  double observed_smoothness() const { return observed_smoothness_; }

 private:
  struct Projection {
    std::vector<Eigen::Index> idx;
    std::vector<double> w;
    double eval(const Vec& x) const;
    double max_abs() const;
  };

  std::uint64_t seed_;
  std::array<Projection, 3> eff_;
  std::array<Projection, 3> rea_;
  std::array<Projection, kModes> modes_;
  Mat basis_;  // kModes x 2*kSpan, each mode lives in one channel
  Vec base_;   // 2*kSpan
  Vec bound_;
  double observed_smoothness_ = 0.0;
};

}  // namespace inverseflow
