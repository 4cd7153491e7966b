// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string_view>

#include "kernels_internal.hpp"

namespace varleak::core::kernels {
namespace {

bool cpu_supports(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(VARLEAK_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(VARLEAK_HAVE_NEON)
      return true;  // mandatory on AArch64
#else
      return false;
#endif
  }
  return false;
}

const KernelTable* initial_table() noexcept {
  if (const char* forced = std::getenv("VARLEAK_KERNELS")) {
    const std::string_view name(forced);
    for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) {
      if (name == isa_name(isa)) {
        if (const KernelTable* t = table_for(isa)) return t;
      }
    }
  }
  for (Isa isa : {Isa::kAvx2, Isa::kNeon}) {
    if (const KernelTable* t = table_for(isa)) return t;
  }
  return &scalar_table();
}

std::atomic<const KernelTable*>& active_slot() noexcept {
  static std::atomic<const KernelTable*> slot{initial_table()};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

const KernelTable* table_for(Isa isa) noexcept {
  if (!cpu_supports(isa)) return nullptr;
  switch (isa) {
    case Isa::kScalar:
      return &scalar_table();
    case Isa::kAvx2:
#if defined(VARLEAK_HAVE_AVX2)
      return &avx2_table();
#else
      return nullptr;
#endif
    case Isa::kNeon:
#if defined(VARLEAK_HAVE_NEON)
      return &neon_table();
#else
      return nullptr;
#endif
  }
  return nullptr;
}

const KernelTable& active() noexcept { return *active_slot().load(std::memory_order_relaxed); }

bool set_active(Isa isa) noexcept {
  const KernelTable* t = table_for(isa);
  if (t == nullptr) return false;
  active_slot().store(t, std::memory_order_relaxed);
  return true;
}

void transpose(const double* in, std::size_t m, std::size_t n, double* out) noexcept {
  constexpr std::size_t kTile = 32;
  for (std::size_t i0 = 0; i0 < m; i0 += kTile) {
    for (std::size_t j0 = 0; j0 < n; j0 += kTile) {
      const std::size_t i1 = i0 + kTile < m ? i0 + kTile : m;
      const std::size_t j1 = j0 + kTile < n ? j0 + kTile : n;
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) out[j * m + i] = in[i * n + j];
      }
    }
  }
}

}  // namespace varleak::core::kernels
