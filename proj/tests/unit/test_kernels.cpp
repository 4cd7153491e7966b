// SPDX-License-Identifier: Apache-2.0
// Every compiled SIMD variant must agree with the scalar reference.
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "varleak/core/kernels.hpp"
#include "varleak/core/rng.hpp"

namespace kern = varleak::core::kernels;
using varleak::core::Rng;

namespace {

std::vector<const kern::KernelTable*> simd_tables() {
  std::vector<const kern::KernelTable*> out;
  for (auto isa : {kern::Isa::kAvx2, kern::Isa::kNeon}) {
    if (const auto* t = kern::table_for(isa)) out.push_back(t);
  }
  return out;
}

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST(Kernels, ScalarGemmMatchesNaiveTripleLoop) {
  Rng rng(1);
  const std::size_t m = 5, n = 3, k = 7;
  auto a = random_vec(rng, m * k);
  auto b = random_vec(rng, k * n);
  std::vector<double> c(m * n, 0.0);
  kern::scalar_table().gemm(m, n, k, a.data(), b.data(), c.data(), false);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      EXPECT_NEAR(c[i * n + j], s, 1e-14);
    }
  }
}

TEST(Kernels, SimdGemmEquivalentToScalar) {
  const auto tables = simd_tables();
  if (tables.empty()) GTEST_SKIP() << "no SIMD variant on this CPU";
  Rng rng(2);
  const std::size_t sizes[][3] = {{1, 1, 1},   {4, 8, 3},    {5, 9, 17},  {13, 3, 300},
                                  {64, 256, 2352 / 8}, {7, 100, 520}, {3, 10, 32}};
  for (const auto* table : tables) {
    for (const auto& s : sizes) {
      const std::size_t m = s[0], n = s[1], k = s[2];
      auto a = random_vec(rng, m * k);
      auto b = random_vec(rng, k * n);
      auto c0 = random_vec(rng, m * n);
      for (bool accumulate : {false, true}) {
        auto ref = c0;
        auto got = c0;
        kern::scalar_table().gemm(m, n, k, a.data(), b.data(), ref.data(), accumulate);
        table->gemm(m, n, k, a.data(), b.data(), got.data(), accumulate);
        for (std::size_t i = 0; i < ref.size(); ++i) {
          ASSERT_NEAR(got[i], ref[i], 1e-12 * static_cast<double>(k)) << kern::isa_name(table->isa) << " m=" << m
                                                                     << " n=" << n << " k=" << k;
        }
      }
    }
  }
}

TEST(Kernels, SimdVectorOpsEquivalentToScalar) {
  const auto tables = simd_tables();
  if (tables.empty()) GTEST_SKIP() << "no SIMD variant on this CPU";
  Rng rng(3);
  const auto& ref = kern::scalar_table();
  for (const auto* table : tables) {
    for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 33u, 1000u}) {
      auto x = random_vec(rng, n);
      auto y = random_vec(rng, n);
      EXPECT_NEAR(table->dot(x.data(), y.data(), n), ref.dot(x.data(), y.data(), n), 1e-12);

      auto y1 = y, y2 = y;
      ref.axpy(0.37, x.data(), y1.data(), n);
      table->axpy(0.37, x.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-15);

      const std::size_t rows = 6;
      auto mat = random_vec(rng, rows * n);
      std::vector<double> s1(n, 0.5), s2(n, 0.5);
      ref.column_sums(mat.data(), rows, n, s1.data());
      table->column_sums(mat.data(), rows, n, s2.data());
      for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(s1[i], s2[i], 1e-14);

      auto p1 = random_vec(rng, n), g = random_vec(rng, n);
      auto p2 = p1;
      std::vector<double> m1a(n, 0.1), m2a(n, 0.2), m1b = m1a, m2b = m2a;
      const kern::AdamCoefficients coeff{0.01, 0.9, 0.999, 1e-8, 1 - 0.9 * 0.9, 1 - 0.999 * 0.999};
      ref.adam_update(p1.data(), g.data(), m1a.data(), m2a.data(), n, coeff);
      table->adam_update(p2.data(), g.data(), m1b.data(), m2b.data(), n, coeff);
      for (std::size_t i = 0; i < n; ++i) {
        EXPECT_NEAR(p1[i], p2[i], 1e-14);
        EXPECT_NEAR(m2a[i], m2b[i], 1e-15);
      }
    }
  }
}

TEST(Kernels, ActiveTableCanBeForcedToScalar) {
  const auto original = kern::active().isa;
  ASSERT_TRUE(kern::set_active(kern::Isa::kScalar));
  EXPECT_EQ(kern::active().isa, kern::Isa::kScalar);
  kern::set_active(original);
  EXPECT_EQ(kern::active().isa, original);
}

TEST(Kernels, TransposeRoundTrip) {
  Rng rng(4);
  const std::size_t m = 37, n = 70;
  auto a = random_vec(rng, m * n);
  std::vector<double> t(m * n), back(m * n);
  kern::transpose(a.data(), m, n, t.data());
  EXPECT_EQ(t[5 * m + 3], a[3 * n + 5]);
  kern::transpose(t.data(), n, m, back.data());
  EXPECT_EQ(a, back);
}
