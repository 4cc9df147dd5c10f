#include "peakload/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace peakload::kernels {
namespace {

std::atomic<int> g_jobs{std::max(1, static_cast<int>(std::thread::hardware_concurrency()))};

struct TilePair {
  Eigen::Index row, col;
};

Eigen::Index tiles(Eigen::Index n) { return (n + kTile - 1) / kTile; }
Eigen::Index tile_width(Eigen::Index t, Eigen::Index n) { return std::min(kTile, n - t * kTile); }

}  // namespace

void set_jobs(int jobs) { g_jobs.store(std::max(1, jobs)); }
int jobs() noexcept { return g_jobs.load(); }

Eigen::MatrixXd gram(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  const Eigen::Index p = X.cols();
  Eigen::MatrixXd H(p, p);
  std::vector<TilePair> work;
  for (Eigen::Index j = 0; j < tiles(p); ++j) {
    for (Eigen::Index i = j; i < tiles(p); ++i) work.push_back({i, j});
  }
  const auto count = static_cast<std::ptrdiff_t>(work.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs())
  for (std::ptrdiff_t w = 0; w < count; ++w) {
    const auto [ti, tj] = work[static_cast<std::size_t>(w)];
    const Eigen::Index r0 = ti * kTile, c0 = tj * kTile;
    const Eigen::Index rw = tile_width(ti, p), cw = tile_width(tj, p);
    H.block(r0, c0, rw, cw).noalias() = X.middleCols(r0, rw).transpose() * X.middleCols(c0, cw);
  }
  // Mirror the lower triangle so H is exactly symmetric.
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index i = 0; i < j; ++i) H(i, j) = H(j, i);
  }
  return H;
}

Eigen::MatrixXd gemm(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B) {
  Eigen::MatrixXd C(A.rows(), B.cols());
  const Eigen::Index nt = tiles(B.cols());
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs())
  for (Eigen::Index t = 0; t < nt; ++t) {
    const Eigen::Index c0 = t * kTile, cw = tile_width(t, B.cols());
    C.middleCols(c0, cw).noalias() = A * B.middleCols(c0, cw);
  }
  return C;
}

Eigen::MatrixXd gemm_tn(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B) {
  Eigen::MatrixXd C(A.cols(), B.cols());
  const Eigen::Index nt = tiles(B.cols());
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs())
  for (Eigen::Index t = 0; t < nt; ++t) {
    const Eigen::Index c0 = t * kTile, cw = tile_width(t, B.cols());
    C.middleCols(c0, cw).noalias() = A.transpose() * B.middleCols(c0, cw);
  }
  return C;
}

Eigen::VectorXd row_quadratic(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::MatrixXd>& M) {
  const Eigen::Index n = X.rows();
  Eigen::VectorXd out(n);
  const Eigen::Index chunks = (n + kRowChunk - 1) / kRowChunk;
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs())
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index r0 = c * kRowChunk, rw = std::min(kRowChunk, n - r0);
    const Eigen::MatrixXd XM = X.middleRows(r0, rw) * M;
    out.segment(r0, rw) = (XM.array() * X.middleRows(r0, rw).array()).rowwise().sum();
  }
  return out;
}

}  // namespace peakload::kernels
