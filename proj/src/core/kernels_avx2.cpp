// SPDX-License-Identifier: Apache-2.0
// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma
// and only entered after a runtime CPU check.
#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "kernels_internal.hpp"

namespace varleak::core::kernels {
namespace {

constexpr std::size_t kDepthBlock = 256;

// C[4x8] += A[4,kc] * B[kc,8]
inline void micro_4x8(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                      std::size_t ldc, std::size_t kc) {
  __m256d c00 = _mm256_loadu_pd(c);
  __m256d c01 = _mm256_loadu_pd(c + 4);
  __m256d c10 = _mm256_loadu_pd(c + ldc);
  __m256d c11 = _mm256_loadu_pd(c + ldc + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * ldc);
  __m256d c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * ldc);
  __m256d c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
  const double* a0 = a;
  const double* a1 = a + lda;
  const double* a2 = a + 2 * lda;
  const double* a3 = a + 3 * lda;
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    __m256d av = _mm256_broadcast_sd(a0 + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a1 + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a2 + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a3 + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + ldc, c10);
  _mm256_storeu_pd(c + ldc + 4, c11);
  _mm256_storeu_pd(c + 2 * ldc, c20);
  _mm256_storeu_pd(c + 2 * ldc + 4, c21);
  _mm256_storeu_pd(c + 3 * ldc, c30);
  _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

inline void micro_1x8(const double* a, const double* b, std::size_t ldb, double* c, std::size_t kc) {
  __m256d c0 = _mm256_loadu_pd(c);
  __m256d c1 = _mm256_loadu_pd(c + 4);
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d av = _mm256_broadcast_sd(a + p);
    c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * ldb), c0);
    c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * ldb + 4), c1);
  }
  _mm256_storeu_pd(c, c0);
  _mm256_storeu_pd(c + 4, c1);
}

inline void micro_1x4(const double* a, const double* b, std::size_t ldb, double* c, std::size_t kc) {
  __m256d c0 = _mm256_loadu_pd(c);
  for (std::size_t p = 0; p < kc; ++p) {
    c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p), _mm256_loadu_pd(b + p * ldb), c0);
  }
  _mm256_storeu_pd(c, c0);
}

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
               bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  const std::size_t m4 = m - m % 4;
  const std::size_t n8 = n - n % 8;
  const std::size_t n4 = n - n % 4;
  for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
    const std::size_t kc = std::min(kDepthBlock, k - p0);
    for (std::size_t j0 = 0; j0 < n8; j0 += 8) {
      for (std::size_t i0 = 0; i0 < m4; i0 += 4) {
        micro_4x8(a + i0 * k + p0, k, b + p0 * n + j0, n, c + i0 * n + j0, n, kc);
      }
      for (std::size_t i = m4; i < m; ++i) micro_1x8(a + i * k + p0, b + p0 * n + j0, n, c + i * n + j0, kc);
    }
    if (n4 > n8) {
      for (std::size_t i = 0; i < m; ++i) micro_1x4(a + i * k + p0, b + p0 * n + n8, n, c + i * n + n8, kc);
    }
    for (std::size_t j = n4; j < n; ++j) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k + p0;
        double s = c[i * n + j];
        for (std::size_t p = 0; p < kc; ++p) s += arow[p] * b[(p0 + p) * n + j];
        c[i * n + j] = s;
      }
    }
  }
}

inline double horizontal_sum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  double s = horizontal_sum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void column_sums_avx2(const double* a, std::size_t m, std::size_t n, double* out) {
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = a + r * n;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      _mm256_storeu_pd(out + j, _mm256_add_pd(_mm256_loadu_pd(out + j), _mm256_loadu_pd(row + j)));
    }
    for (; j < n; ++j) out[j] += row[j];
  }
}

void adam_update_avx2(double* param, const double* grad, double* m1, double* m2, std::size_t n,
                      const AdamCoefficients& c) {
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b1c = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d b2c = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d corr1 = _mm256_set1_pd(c.correction1);
  const __m256d corr2 = _mm256_set1_pd(c.correction2);
  const __m256d lr = _mm256_set1_pd(c.lr);
  const __m256d eps = _mm256_set1_pd(c.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m1 + i)), _mm256_mul_pd(b1c, g));
    const __m256d vv =
        _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(m2 + i)), _mm256_mul_pd(_mm256_mul_pd(b2c, g), g));
    _mm256_storeu_pd(m1 + i, mv);
    _mm256_storeu_pd(m2 + i, vv);
    const __m256d mhat = _mm256_div_pd(mv, corr1);
    const __m256d vhat = _mm256_div_pd(vv, corr2);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, mhat), _mm256_add_pd(_mm256_sqrt_pd(vhat), eps));
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
  }
  for (; i < n; ++i) {
    m1[i] = c.beta1 * m1[i] + (1.0 - c.beta1) * grad[i];
    m2[i] = c.beta2 * m2[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    param[i] -= c.lr * (m1[i] / c.correction1) / (std::sqrt(m2[i] / c.correction2) + c.eps);
  }
}

}  // namespace

const KernelTable& avx2_table() noexcept {
  static const KernelTable table{Isa::kAvx2, gemm_avx2, dot_avx2, axpy_avx2, column_sums_avx2, adam_update_avx2};
  return table;
}

}  // namespace varleak::core::kernels
