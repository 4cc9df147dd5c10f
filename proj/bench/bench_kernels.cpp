#include <benchmark/benchmark.h>

#include <cstdlib>

#include "peakload/kernels.hpp"

using namespace peakload;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c) {
  std::srand(1);
  return Eigen::MatrixXd::Random(r, c);
}

// Arguments: rows, columns, worker threads (0 = serial reference).
void BM_Gram(benchmark::State& state) {
  const auto X = random_matrix(state.range(0), state.range(1));
  const int jobs = static_cast<int>(state.range(2));
  kernels::set_jobs(std::max(jobs, 1));
  for (auto _ : state) {
    auto G = jobs == 0 ? kernels::serial::gram(X) : kernels::gram(X);
    benchmark::DoNotOptimize(G.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1) * state.range(1));
}

void BM_Gemm(benchmark::State& state) {
  const auto X = random_matrix(state.range(0), state.range(1));
  const auto B = random_matrix(state.range(1), 64);
  const int jobs = static_cast<int>(state.range(2));
  kernels::set_jobs(std::max(jobs, 1));
  for (auto _ : state) {
    auto C = jobs == 0 ? kernels::serial::gemm(X, B) : kernels::gemm(X, B);
    benchmark::DoNotOptimize(C.data());
  }
}

void BM_RowQuadratic(benchmark::State& state) {
  const auto X = random_matrix(state.range(0), state.range(1));
  Eigen::MatrixXd M = random_matrix(state.range(1), state.range(1));
  M = (M + M.transpose()).eval();
  const int jobs = static_cast<int>(state.range(2));
  kernels::set_jobs(std::max(jobs, 1));
  for (auto _ : state) {
    auto q = jobs == 0 ? kernels::serial::row_quadratic(X, M) : kernels::row_quadratic(X, M);
    benchmark::DoNotOptimize(q.data());
  }
}

void shapes(benchmark::internal::Benchmark* b) {
  for (auto [r, c] : {std::pair<int, int>{4000, 200}, {17520, 600}})
    for (int jobs : {0, 1, 2, 4, 8}) b->Args({r, c, jobs});
  b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_Gram)->Apply(shapes);
BENCHMARK(BM_Gemm)->Apply(shapes);
BENCHMARK(BM_RowQuadratic)->Apply(shapes);
BENCHMARK_MAIN();
