#include "inverseflow/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <exception>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace inverseflow::kernels {

namespace {

void cross_rows(const Mat& a, const Mat& b, double sigma2, const Vec& beta, Mat& out,
                Eigen::Index first, Eigen::Index count) {
  const Eigen::Index d = a.cols();
  for (Eigen::Index i = first; i < first + count; ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = a(i, k) - b(j, k);
        s += beta(k) * diff * diff;
      }
      out(i, j) = sigma2 * std::exp(-s);
    }
  }
}

void predict_chunk(const GpSampleView& s, const Mat& query, Vec& mean, Vec& var,
                   Eigen::Index first, Eigen::Index count) {
  Mat kq(count, s.train_x.rows());
  const Mat q = query.middleRows(first, count);
  cross_rows(q, s.train_x, s.sigma2, s.beta, kq, 0, count);
  mean.segment(first, count) = kq * s.alpha;
  Mat v = kq.transpose();
  s.chol_lower.triangularView<Eigen::Lower>().solveInPlace(v);
  const Vec reduction = v.colwise().squaredNorm().transpose();
  for (Eigen::Index i = 0; i < count; ++i) var(first + i) = s.sigma2 + s.lambda2 - reduction(i);
}

void check_cross(const Mat& a, const Mat& b, const Vec& beta) {
  require_shape(a.cols() == b.cols() && a.cols() == beta.size(), "kernel input dimension mismatch");
}

void check_predict(const GpSampleView& s, const Mat& query) {
  require_shape(query.cols() == s.train_x.cols(), "query dimension mismatch");
  require_shape(s.chol_lower.rows() == s.train_x.rows() && s.alpha.size() == s.train_x.rows(),
                "GP sample cache does not match training set");
}

}  // namespace

namespace serial {

void sq_exp_cross(const Mat& a, const Mat& b, double sigma2, const Vec& beta, Mat& out) {
  check_cross(a, b, beta);
  out.resize(a.rows(), b.rows());
  for_chunks(a.rows(), [&](Eigen::Index f, Eigen::Index c) { cross_rows(a, b, sigma2, beta, out, f, c); });
}

void gp_predict(const GpSampleView& s, const Mat& query, Vec& mean, Vec& var) {
  check_predict(s, query);
  mean.resize(query.rows());
  var.resize(query.rows());
  for_chunks(query.rows(), [&](Eigen::Index f, Eigen::Index c) { predict_chunk(s, query, mean, var, f, c); });
}

void for_chunks(Eigen::Index n, const ChunkFn& fn) {
  for (Eigen::Index first = 0; first < n; first += kChunk) fn(first, std::min(kChunk, n - first));
}

}  // namespace serial

namespace omp {

void sq_exp_cross(const Mat& a, const Mat& b, double sigma2, const Vec& beta, Mat& out) {
  check_cross(a, b, beta);
  out.resize(a.rows(), b.rows());
  for_chunks(a.rows(), [&](Eigen::Index f, Eigen::Index c) { cross_rows(a, b, sigma2, beta, out, f, c); });
}

void gp_predict(const GpSampleView& s, const Mat& query, Vec& mean, Vec& var) {
  check_predict(s, query);
  mean.resize(query.rows());
  var.resize(query.rows());
  for_chunks(query.rows(), [&](Eigen::Index f, Eigen::Index c) { predict_chunk(s, query, mean, var, f, c); });
}

void for_chunks(Eigen::Index n, const ChunkFn& fn) {
  const Eigen::Index chunks = (n + kChunk - 1) / kChunk;
  // Exceptions cannot cross the parallel region; keep the one from the
  // lowest chunk so the reported error matches the serial loop.
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index first = c * kChunk;
    try {
      fn(first, std::min(kChunk, n - first));
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace omp

int configure_threads() {
#ifdef _OPENMP
  if (const char* env = std::getenv("INVERSEFLOW_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) omp_set_num_threads(cap);
  }
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace inverseflow::kernels
