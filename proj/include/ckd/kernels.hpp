#pragma once

// Dense products with a fixed accumulation order.
//
// Each output element is accumulated along the shared dimension in index
// order, so results do not depend on SIMD width or cache-blocking choices.
// The inner loops run over independent output elements and still vectorize.

#include "ckd/core_math.hpp"

namespace ckd {

/// out = a * b
template <typename Scalar>
void matmul(const Matrix<Scalar>& a, const Matrix<Scalar>& b, Matrix<Scalar>& out) {
  const Eigen::Index m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw InvalidInput("matmul: inner dimension mismatch");
  out.setZero(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Scalar* oc = out.col(j).data();
    for (Eigen::Index p = 0; p < k; ++p) {
      const Scalar w = b(p, j);
      if (w == Scalar(0)) continue;
      const Scalar* ac = a.col(p).data();
      for (Eigen::Index i = 0; i < m; ++i) oc[i] += w * ac[i];
    }
  }
}

/// out += a * b^T
template <typename Scalar>
void matmul_add_bt(const Matrix<Scalar>& a, const Matrix<Scalar>& b, Matrix<Scalar>& out) {
  const Eigen::Index m = a.rows(), n = a.cols(), q = b.rows();
  if (b.cols() != n || out.rows() != m || out.cols() != q)
    throw InvalidInput("matmul_add_bt: dimension mismatch");
  for (Eigen::Index j = 0; j < n; ++j) {
    const Scalar* ac = a.col(j).data();
    for (Eigen::Index c = 0; c < q; ++c) {
      const Scalar w = b(c, j);
      if (w == Scalar(0)) continue;
      Scalar* oc = out.col(c).data();
      for (Eigen::Index i = 0; i < m; ++i) oc[i] += w * ac[i];
    }
  }
}

}  // namespace ckd
