// SPDX-License-Identifier: Apache-2.0
// Reference kernels. Every SIMD variant is tested against these.
#include <cmath>

#include "kernels_internal.hpp"

namespace varleak::core::kernels {
namespace {

void gemm_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                 bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    }
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void column_sums_scalar(const double* a, std::size_t m, std::size_t n, double* out) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a + i * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += row[j];
  }
}

void adam_update_scalar(double* param, const double* grad, double* m1, double* m2, std::size_t n,
                        const AdamCoefficients& c) {
  for (std::size_t i = 0; i < n; ++i) {
    m1[i] = c.beta1 * m1[i] + (1.0 - c.beta1) * grad[i];
    m2[i] = c.beta2 * m2[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double mhat = m1[i] / c.correction1;
    const double vhat = m2[i] / c.correction2;
    param[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

}  // namespace

const KernelTable& scalar_table() noexcept {
  static const KernelTable table{Isa::kScalar, gemm_scalar, dot_scalar, axpy_scalar, column_sums_scalar,
                                 adam_update_scalar};
  return table;
}

}  // namespace varleak::core::kernels
