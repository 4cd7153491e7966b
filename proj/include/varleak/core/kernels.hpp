// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string_view>

namespace varleak::core::kernels {

/// Instruction-set variants of the arithmetic inner loops.
enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa) noexcept;

/// Hyper-parameters of one Adam update, already bias-corrected.
struct AdamCoefficients {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double correction1;  // 1 - beta1^t
  double correction2;  // 1 - beta2^t
};

/// Function table for one instruction set. All matrices are row-major and
/// contiguous.
struct KernelTable {
  Isa isa;
  /// C[m,n] (+)= A[m,k] * B[k,n]; C is overwritten unless `accumulate`.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
               bool accumulate);
  double (*dot)(const double* x, const double* y, std::size_t n);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  /// out[j] += sum_i a[i, j]
  void (*column_sums)(const double* a, std::size_t m, std::size_t n, double* out);
  void (*adam_update)(double* param, const double* grad, double* m1, double* m2, std::size_t n,
                      const AdamCoefficients& coeff);
};

const KernelTable& scalar_table() noexcept;
/// Variant for `isa`, or nullptr when not compiled in or not supported by
/// the running CPU.
const KernelTable* table_for(Isa isa) noexcept;

/// The table used by the library. Chosen once from CPU features; the
/// VARLEAK_KERNELS environment variable ("scalar", "avx2", "neon") can force a
/// variant.
const KernelTable& active() noexcept;
/// Overrides the active table; returns false when `isa` is unavailable.
bool set_active(Isa isa) noexcept;

/// out[n,m] = in[m,n]
void transpose(const double* in, std::size_t m, std::size_t n, double* out) noexcept;

}  // namespace varleak::core::kernels
