#pragma once

// Data-parallel inner loops. Every kernel exists twice: a serial reference and
// an OpenMP version. Both walk the same fixed-size chunks in the same order
// inside a chunk, so their results are bitwise identical for any thread count.

#include "inverseflow/common.hpp"

#include <functional>

namespace inverseflow::kernels {

inline constexpr Eigen::Index kChunk = 64;

// View of one factorized GP posterior sample, all in normalized units.
struct GpSampleView {
  const Mat& train_x;     // N x d
  const Mat& chol_lower;  // N x N
  const Vec& alpha;       // (K + jitter I)^-1 y
  const Vec& beta;        // d
  double sigma2;
  double lambda2;
};

// Called once per chunk of kChunk consecutive items.
using ChunkFn = std::function<void(Eigen::Index first, Eigen::Index count)>;

namespace serial {
// out(i,j) = sigma2 * exp(-sum_k beta_k (a_ik - b_jk)^2); rows are points.
void sq_exp_cross(const Mat& a, const Mat& b, double sigma2, const Vec& beta, Mat& out);
void gp_predict(const GpSampleView& s, const Mat& query, Vec& mean, Vec& var);
void for_chunks(Eigen::Index n, const ChunkFn& fn);
}  // namespace serial

namespace omp {
void sq_exp_cross(const Mat& a, const Mat& b, double sigma2, const Vec& beta, Mat& out);
void gp_predict(const GpSampleView& s, const Mat& query, Vec& mean, Vec& var);
void for_chunks(Eigen::Index n, const ChunkFn& fn);
}  // namespace omp

// Honors INVERSEFLOW_THREADS when set; returns the effective thread count.
int configure_threads();
int max_threads();

}  // namespace inverseflow::kernels
