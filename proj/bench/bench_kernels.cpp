// Serial reference kernels against their OpenMP counterparts.
// Thread count follows OMP_NUM_THREADS / INVERSEFLOW_THREADS.

#include "inverseflow/gp.hpp"
#include "inverseflow/inversion.hpp"
#include "inverseflow/kernels.hpp"

#include <benchmark/benchmark.h>

using namespace inverseflow;

namespace {

Mat uniform(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform01(rng);
  return m;
}

template <bool Parallel>
void BM_SqExpCross(benchmark::State& state) {
  const Eigen::Index n = state.range(0), d = 8;
  const Mat a = uniform(n, d, 1), b = uniform(n, d, 2);
  const Vec beta = Vec::Constant(d, 3.0);
  Mat out;
  for (auto _ : state) {
    if constexpr (Parallel) kernels::omp::sq_exp_cross(a, b, 1.3, beta, out);
    else kernels::serial::sq_exp_cross(a, b, 1.3, beta, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}

template <bool Parallel>
void BM_GpPredict(benchmark::State& state) {
  const Eigen::Index n = 200, d = 8, q = state.range(0);
  const Mat x = uniform(n, d, 3);
  const Vec y = x.rowwise().sum().array().sin();
  const GpModel m =
      GpModel::with_hypers(x, y, {GpHyper{1.0, Vec::Constant(d, 2.0), 0.05}}, Normalization::identity(d));
  const Mat query = uniform(q, d, 4);
  Vec mean, var;
  for (auto _ : state) {
    m.predict_batch(query, mean, var, Parallel);
    benchmark::DoNotOptimize(mean.data());
  }
  state.SetItemsProcessed(state.iterations() * q);
}

template <bool Parallel>
void BM_Invert(benchmark::State& state) {
  CinnArch arch;
  arch.input_dim = 8;
  arch.cond_input_dim = 2;
  arch.seed = 5;
  const CinnModel model = CinnModel::create(arch);
  InverseQuery q;
  q.target = Vec::Constant(2, 0.5);
  q.samples = state.range(0);
  q.seed = 9;
  for (auto _ : state) benchmark::DoNotOptimize(cinn_invert(model, q, Parallel));
  state.SetItemsProcessed(state.iterations() * q.samples);
}

}  // namespace

BENCHMARK(BM_SqExpCross<false>)->Name("sq_exp_cross/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_SqExpCross<true>)->Name("sq_exp_cross/omp")->Arg(256)->Arg(1024);
BENCHMARK(BM_GpPredict<false>)->Name("gp_predict/serial")->Arg(1000)->Arg(10000);
BENCHMARK(BM_GpPredict<true>)->Name("gp_predict/omp")->Arg(1000)->Arg(10000);
BENCHMARK(BM_Invert<false>)->Name("cinn_invert/serial")->Arg(1000);
BENCHMARK(BM_Invert<true>)->Name("cinn_invert/omp")->Arg(1000);

BENCHMARK_MAIN();
