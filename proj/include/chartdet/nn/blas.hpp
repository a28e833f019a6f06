#pragma once

#include <cblas.h>

#include <type_traits>

namespace chartdet::nn {

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
// M x K times K x N into M x N. Leading dimensions are row strides and may
// exceed the logical row length (used for head-sliced attention blocks).
template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a,
          int lda, const T* b, int ldb, T beta, T* c, int ldc) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  const CBLAS_TRANSPOSE ta = trans_a ? CblasTrans : CblasNoTrans;
  const CBLAS_TRANSPOSE tb = trans_b ? CblasTrans : CblasNoTrans;
  if (m == 0 || n == 0 || k == 0) {
    if (beta == T(0)) {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) c[static_cast<std::size_t>(i) * ldc + j] = T(0);
    }
    return;
  }
  if constexpr (std::is_same_v<T, float>) {
    cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  } else {
    cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
}

void set_blas_threads(int n);

}  // namespace chartdet::nn
