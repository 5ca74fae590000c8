// Serial reference kernels against their OpenMP twins.
//
//   bench_kernels [--benchmark_filter=...]
//
// The second argument of every omp case is the thread count.

#include "rmt/ensemble.hpp"
#include "rmt/kernels.hpp"
#include "rmt/rng.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

#include <cmath>
#include <vector>

using namespace rmt;

namespace {

SymCsr sparse(std::size_t n) {
  EnsembleSpec spec{n, std::cbrt(double(n)), {}, Model::centered_sparse};
  Stream rng(n);
  return sample(spec, rng).csr();
}

Eigen::MatrixXd gaussian(Eigen::Index n, std::uint64_t seed) {
  Stream rng(seed);
  Eigen::MatrixXd m(n, n);
  for (auto& x : m.reshaped()) x = rng.normal();
  return m;
}

Eigen::VectorXd weights(Eigen::Index n, std::uint64_t seed) {
  Stream rng(seed);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = rng.normal();
  return kernels::im_resolvent_weights(v, 0.5, 1e-2);
}

void spmv_serial(benchmark::State& s) {
  const SymCsr a = sparse(std::size_t(s.range(0)));
  std::vector<double> x(a.n, 1.0), y(a.n);
  for (auto _ : s) {
    kernels::spmv_serial(a, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void spmv_omp(benchmark::State& s) {
  const SymCsr a = sparse(std::size_t(s.range(0)));
  std::vector<double> x(a.n, 1.0), y(a.n);
  omp_set_num_threads(int(s.range(1)));
  for (auto _ : s) {
    kernels::spmv_omp(a, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void gram_serial(benchmark::State& s) {
  const Eigen::Index n = s.range(0);
  const auto v1 = gaussian(n, 1), v2 = gaussian(n, 2);
  const auto w1 = weights(n, 3), w2 = weights(n, 4);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::max_abs_diff_weighted_gram_serial(v1, w1, v2, w2));
}

void gram_omp(benchmark::State& s) {
  const Eigen::Index n = s.range(0);
  const auto v1 = gaussian(n, 1), v2 = gaussian(n, 2);
  const auto w1 = weights(n, 3), w2 = weights(n, 4);
  omp_set_num_threads(int(s.range(1)));
  for (auto _ : s) benchmark::DoNotOptimize(kernels::max_abs_diff_weighted_gram_omp(v1, w1, v2, w2));
}

void diagonal_serial(benchmark::State& s) {
  const Eigen::Index n = s.range(0);
  const auto v = gaussian(n, 1);
  const auto w = weights(n, 3);
  for (auto _ : s) benchmark::DoNotOptimize(kernels::weighted_gram_diagonal_serial(v, w));
}

void diagonal_omp(benchmark::State& s) {
  const Eigen::Index n = s.range(0);
  const auto v = gaussian(n, 1);
  const auto w = weights(n, 3);
  omp_set_num_threads(int(s.range(1)));
  for (auto _ : s) benchmark::DoNotOptimize(kernels::weighted_gram_diagonal_omp(v, w));
}

}  // namespace

BENCHMARK(spmv_serial)->Arg(2048)->Arg(16384)->Unit(benchmark::kMicrosecond);
BENCHMARK(spmv_omp)->ArgsProduct({{2048, 16384}, {1, 2, 4}})->Unit(benchmark::kMicrosecond);
BENCHMARK(gram_serial)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(gram_omp)->ArgsProduct({{256, 1024}, {1, 2, 4}})->Unit(benchmark::kMillisecond);
BENCHMARK(diagonal_serial)->Arg(1024)->Unit(benchmark::kMicrosecond);
BENCHMARK(diagonal_omp)->ArgsProduct({{1024}, {1, 2, 4}})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
