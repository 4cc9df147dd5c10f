#include "peakload/kernels.hpp"

namespace peakload::kernels::serial {

Eigen::MatrixXd gram(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  const Eigen::Index n = X.rows(), p = X.cols();
  Eigen::MatrixXd H(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index i = j; i < p; ++i) {
      double s = 0.0;
      for (Eigen::Index r = 0; r < n; ++r) s += X(r, i) * X(r, j);
      H(i, j) = s;
      H(j, i) = s;
    }
  }
  return H;
}

Eigen::MatrixXd gemm(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B) {
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(A.rows(), B.cols());
  for (Eigen::Index j = 0; j < B.cols(); ++j) {
    for (Eigen::Index k = 0; k < A.cols(); ++k) {
      const double b = B(k, j);
      for (Eigen::Index i = 0; i < A.rows(); ++i) C(i, j) += A(i, k) * b;
    }
  }
  return C;
}

Eigen::MatrixXd gemm_tn(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B) {
  Eigen::MatrixXd C(A.cols(), B.cols());
  for (Eigen::Index j = 0; j < B.cols(); ++j) {
    for (Eigen::Index i = 0; i < A.cols(); ++i) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < A.rows(); ++k) s += A(k, i) * B(k, j);
      C(i, j) = s;
    }
  }
  return C;
}

Eigen::VectorXd row_quadratic(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::MatrixXd>& M) {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
      double inner = 0.0;
      for (Eigen::Index j = 0; j < X.cols(); ++j) inner += M(i, j) * X(r, j);
      s += X(r, i) * inner;
    }
    out[r] = s;
  }
  return out;
}

}  // namespace peakload::kernels::serial
