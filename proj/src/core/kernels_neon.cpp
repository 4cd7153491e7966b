// SPDX-License-Identifier: Apache-2.0
// AArch64 Advanced SIMD kernels (two doubles per register).
#include <arm_neon.h>

#include <algorithm>
#include <cmath>

#include "kernels_internal.hpp"

namespace varleak::core::kernels {
namespace {

constexpr std::size_t kDepthBlock = 256;

// C[4x4] += A[4,kc] * B[kc,4]
inline void micro_4x4(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                      std::size_t ldc, std::size_t kc) {
  float64x2_t acc[4][2];
  for (int r = 0; r < 4; ++r) {
    acc[r][0] = vld1q_f64(c + r * ldc);
    acc[r][1] = vld1q_f64(c + r * ldc + 2);
  }
  for (std::size_t p = 0; p < kc; ++p) {
    const float64x2_t b0 = vld1q_f64(b + p * ldb);
    const float64x2_t b1 = vld1q_f64(b + p * ldb + 2);
    for (int r = 0; r < 4; ++r) {
      const float64x2_t av = vdupq_n_f64(a[r * lda + p]);
      acc[r][0] = vfmaq_f64(acc[r][0], av, b0);
      acc[r][1] = vfmaq_f64(acc[r][1], av, b1);
    }
  }
  for (int r = 0; r < 4; ++r) {
    vst1q_f64(c + r * ldc, acc[r][0]);
    vst1q_f64(c + r * ldc + 2, acc[r][1]);
  }
}

void gemm_neon(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
               bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  const std::size_t m4 = m - m % 4;
  const std::size_t n4 = n - n % 4;
  for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
    const std::size_t kc = std::min(kDepthBlock, k - p0);
    for (std::size_t j0 = 0; j0 < n4; j0 += 4) {
      for (std::size_t i0 = 0; i0 < m4; i0 += 4) {
        micro_4x4(a + i0 * k + p0, k, b + p0 * n + j0, n, c + i0 * n + j0, n, kc);
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t jstart = i < m4 ? n4 : 0;
      for (std::size_t j = jstart; j < n; ++j) {
        double s = c[i * n + j];
        for (std::size_t p = 0; p < kc; ++p) s += a[i * k + p0 + p] * b[(p0 + p) * n + j];
        c[i * n + j] = s;
      }
    }
  }
}

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), av, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void column_sums_neon(const double* a, std::size_t m, std::size_t n, double* out) {
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = a + r * n;
    std::size_t j = 0;
    for (; j + 2 <= n; j += 2) vst1q_f64(out + j, vaddq_f64(vld1q_f64(out + j), vld1q_f64(row + j)));
    for (; j < n; ++j) out[j] += row[j];
  }
}

void adam_update_neon(double* param, const double* grad, double* m1, double* m2, std::size_t n,
                      const AdamCoefficients& c) {
  const float64x2_t b1 = vdupq_n_f64(c.beta1);
  const float64x2_t b1c = vdupq_n_f64(1.0 - c.beta1);
  const float64x2_t b2 = vdupq_n_f64(c.beta2);
  const float64x2_t b2c = vdupq_n_f64(1.0 - c.beta2);
  const float64x2_t corr1 = vdupq_n_f64(c.correction1);
  const float64x2_t corr2 = vdupq_n_f64(c.correction2);
  const float64x2_t lr = vdupq_n_f64(c.lr);
  const float64x2_t eps = vdupq_n_f64(c.eps);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t g = vld1q_f64(grad + i);
    const float64x2_t mv = vaddq_f64(vmulq_f64(b1, vld1q_f64(m1 + i)), vmulq_f64(b1c, g));
    const float64x2_t vv = vaddq_f64(vmulq_f64(b2, vld1q_f64(m2 + i)), vmulq_f64(vmulq_f64(b2c, g), g));
    vst1q_f64(m1 + i, mv);
    vst1q_f64(m2 + i, vv);
    const float64x2_t mhat = vdivq_f64(mv, corr1);
    const float64x2_t vhat = vdivq_f64(vv, corr2);
    const float64x2_t step = vdivq_f64(vmulq_f64(lr, mhat), vaddq_f64(vsqrtq_f64(vhat), eps));
    vst1q_f64(param + i, vsubq_f64(vld1q_f64(param + i), step));
  }
  for (; i < n; ++i) {
    m1[i] = c.beta1 * m1[i] + (1.0 - c.beta1) * grad[i];
    m2[i] = c.beta2 * m2[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    param[i] -= c.lr * (m1[i] / c.correction1) / (std::sqrt(m2[i] / c.correction2) + c.eps);
  }
}

}  // namespace

const KernelTable& neon_table() noexcept {
  static const KernelTable table{Isa::kNeon, gemm_neon, dot_neon, axpy_neon, column_sums_neon, adam_update_neon};
  return table;
}

}  // namespace varleak::core::kernels
