#pragma once

#include <Eigen/Dense>

/// Dense kernels behind the penalized least-squares engine.
///
/// The parallel versions split work into tiles whose shape depends only on
/// the problem size, never on the thread count, and each tile is reduced in a
/// fixed order. Results are therefore bit-identical for any number of
/// threads. The serial:: versions are plain loops kept as test references.
namespace peakload::kernels {

/// Worker count for parallel kernels and parallel work loops (>= 1).
void set_jobs(int jobs);
int jobs() noexcept;

inline constexpr Eigen::Index kTile = 128;
inline constexpr Eigen::Index kRowChunk = 256;

/// X^T X, full symmetric result.
Eigen::MatrixXd gram(const Eigen::Ref<const Eigen::MatrixXd>& X);
/// A * B.
Eigen::MatrixXd gemm(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B);
/// A^T * B.
Eigen::MatrixXd gemm_tn(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B);
/// diag(X M X^T) for symmetric M.
Eigen::VectorXd row_quadratic(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::MatrixXd>& M);

namespace serial {
Eigen::MatrixXd gram(const Eigen::Ref<const Eigen::MatrixXd>& X);
Eigen::MatrixXd gemm(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B);
Eigen::MatrixXd gemm_tn(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B);
Eigen::VectorXd row_quadratic(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::MatrixXd>& M);
}  // namespace serial

}  // namespace peakload::kernels
