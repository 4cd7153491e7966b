// SPDX-License-Identifier: Apache-2.0
#include "varleak/leakage/exact.hpp"

#include <cmath>
#include <numbers>

#include "varleak/error.hpp"

namespace varleak::leakage {

namespace {

void check_distribution(std::span<const double> p, const char* what) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " has a negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError(std::string(what) + " is not normalized");
}

double mi_nats(std::span<const double> joint, std::size_t na, std::size_t nb) {
  std::vector<double> pa(na, 0.0), pb(nb, 0.0);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      pa[i] += joint[i * nb + j];
      pb[j] += joint[i * nb + j];
    }
  }
  double mi = 0.0;
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const double p = joint[i * nb + j];
      if (p > 0.0) mi += p * std::log(p / (pa[i] * pb[j]));
    }
  }
  return mi;
}

}  // namespace

double Information::bits() const noexcept { return nats / std::numbers::ln2; }

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

Information mutual_information(std::span<const double> joint, std::size_t na, std::size_t nb) {
  if (joint.size() != na * nb) throw ConfigError("joint table size does not match its alphabets");
  check_distribution(joint, "joint table");
  return {mi_nats(joint, na, nb)};
}

Information conditional_mutual_information(std::span<const double> joint, std::size_t nc, std::size_t na,
                                           std::size_t nb) {
  if (joint.size() != nc * na * nb) throw ConfigError("joint table size does not match its alphabets");
  check_distribution(joint, "joint table");
  double total = 0.0;
  std::vector<double> slice(na * nb);
  for (std::size_t c = 0; c < nc; ++c) {
    double pc = 0.0;
    for (std::size_t k = 0; k < na * nb; ++k) pc += joint[c * na * nb + k];
    if (pc <= 0.0) continue;
    for (std::size_t k = 0; k < na * nb; ++k) slice[k] = joint[c * na * nb + k] / pc;
    total += pc * mi_nats(slice, na, nb);
  }
  return {total};
}

Information exact_mi(const data::DiscreteJoint& joint, Pair pair) {
  switch (pair) {
    case Pair::kSX: return mutual_information(joint.p_sx(), joint.ns(), joint.nx());
    case Pair::kUX: return mutual_information(joint.p_ux(), joint.nu(), joint.nx());
    case Pair::kSU: {
      std::vector<double> su(joint.ns() * joint.nu(), 0.0);
      for (std::size_t s = 0; s < joint.ns(); ++s) {
        for (std::size_t u = 0; u < joint.nu(); ++u) {
          for (std::size_t x = 0; x < joint.nx(); ++x) su[s * joint.nu() + u] += joint.p(s, u, x);
        }
      }
      return mutual_information(su, joint.ns(), joint.nu());
    }
  }
  return {};
}

MarkovCheck markov_identity_check(std::span<const double> p_sx, std::size_t ns, std::size_t nx,
                                  std::span<const double> channel, std::size_t nz) {
  for (std::size_t a : {ns, nx, nz}) {
    if (a == 0 || a > 32) throw ConfigError("alphabets for the Markov check must lie in [1, 32]");
  }
  if (p_sx.size() != ns * nx || channel.size() != nx * nz) throw ConfigError("table sizes do not match alphabets");
  check_distribution(p_sx, "P_{S,X}");
  for (std::size_t x = 0; x < nx; ++x) check_distribution(channel.subspan(x * nz, nz), "channel row");

  // Joint P(s, x, z) = P(s, x) P(z | x).
  std::vector<double> sz(ns * nz, 0.0), xz(nx * nz, 0.0), sxz(ns * nx * nz, 0.0);
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t x = 0; x < nx; ++x) {
      for (std::size_t z = 0; z < nz; ++z) {
        const double p = p_sx[s * nx + x] * channel[x * nz + z];
        sxz[(s * nx + x) * nz + z] = p;
        sz[s * nz + z] += p;
        xz[x * nz + z] += p;
      }
    }
  }
  MarkovCheck out;
  out.i_sz = {mi_nats(sz, ns, nz)};
  out.i_xz = {mi_nats(xz, nx, nz)};
  out.i_xz_given_s = conditional_mutual_information(sxz, ns, nx, nz);
  out.residual = out.i_sz.nats - out.i_xz.nats + out.i_xz_given_s.nats;
  out.dpi_margin = out.i_xz.nats - out.i_sz.nats;
  return out;
}

}  // namespace varleak::leakage
