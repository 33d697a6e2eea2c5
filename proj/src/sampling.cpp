#include "inverseflow/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace inverseflow {

namespace {

std::vector<int> first_primes(std::size_t n) {
  std::vector<int> primes;
  for (int c = 2; primes.size() < n; ++c) {
    bool prime = true;
    for (int p : primes) {
      if (p * p > c) break;
      if (c % p == 0) {
        prime = false;
        break;
      }
    }
    if (prime) primes.push_back(c);
  }
  return primes;
}

double radical_inverse(long index, int base) {
  double result = 0.0, f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

}  // namespace

Mat latin_hypercube(Eigen::Index n, Eigen::Index d, Rng& rng) {
  if (n < 1 || d < 1) throw ConfigError("latin_hypercube needs n, d >= 1");
  Mat out(n, d);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < d; ++k) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index i = 0; i < n; ++i) {
      out(i, k) = (static_cast<double>(perm[static_cast<std::size_t>(i)]) + uniform01(rng)) / static_cast<double>(n);
    }
  }
  return out;
}

Mat shifted_halton(Eigen::Index n, Eigen::Index d, Rng& rng, Eigen::Index skip) {
  if (n < 1 || d < 1 || d > 200) throw ConfigError("shifted_halton supports 1 <= d <= 200");
  const auto primes = first_primes(static_cast<std::size_t>(d));
  Vec shift(d);
  for (Eigen::Index k = 0; k < d; ++k) shift(k) = uniform01(rng);
  Mat out(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const double v = radical_inverse(static_cast<long>(i + skip + 1), primes[static_cast<std::size_t>(k)]) + shift(k);
      out(i, k) = v - std::floor(v);
    }
  }
  return out;
}

Mat scale_to_box(const Mat& unit, const Vec& lo, const Vec& hi) {
  require_shape(unit.cols() == lo.size() && lo.size() == hi.size(), "scale_to_box dimension mismatch");
  Mat out = unit;
  for (Eigen::Index k = 0; k < unit.cols(); ++k) out.col(k) = lo(k) + (hi(k) - lo(k)) * unit.col(k).array();
  return out;
}

}  // namespace inverseflow
