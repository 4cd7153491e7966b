// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "varleak/core/kernels.hpp"

namespace varleak::core::kernels {

#if defined(VARLEAK_HAVE_AVX2)
const KernelTable& avx2_table() noexcept;
#endif
#if defined(VARLEAK_HAVE_NEON)
const KernelTable& neon_table() noexcept;
#endif

}  // namespace varleak::core::kernels
