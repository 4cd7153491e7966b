// SPDX-License-Identifier: Apache-2.0
#include "varleak/data/discrete.hpp"

#include <cmath>

#include "varleak/error.hpp"

namespace varleak::data {

DiscreteJoint::DiscreteJoint(std::size_t ns, std::size_t nu, std::size_t nx, std::vector<double> weights)
    : ns_(ns), nu_(nu), nx_(nx), table_(std::move(weights)) {
  for (std::size_t a : {ns, nu, nx}) {
    if (a == 0 || a > kMaxAlphabet) throw ConfigError("alphabet sizes must lie in [1, 64]");
  }
  if (table_.size() != ns * nu * nx) throw ConfigError("joint table has the wrong number of entries");
  double total = 0.0;
  for (double v : table_) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("joint table has a negative or non-finite entry");
    total += v;
  }
  if (!(total > 0.0)) throw ConfigError("joint table has zero mass");
  for (auto& v : table_) v /= total;
}

DiscreteJoint DiscreteJoint::from_sx(std::size_t ns, std::size_t nx, std::vector<double> weights) {
  return {ns, 1, nx, std::move(weights)};
}

DiscreteJoint DiscreteJoint::product(const std::vector<double>& ps, const std::vector<double>& pu,
                                     const std::vector<double>& px) {
  std::vector<double> t;
  t.reserve(ps.size() * pu.size() * px.size());
  for (double a : ps) {
    for (double b : pu) {
      for (double c : px) t.push_back(a * b * c);
    }
  }
  return {ps.size(), pu.size(), px.size(), std::move(t)};
}

DiscreteJoint DiscreteJoint::random(std::size_t ns, std::size_t nu, std::size_t nx, core::Rng& rng) {
  std::vector<double> t(ns * nu * nx);
  for (auto& v : t) v = rng.uniform();
  return {ns, nu, nx, std::move(t)};
}

std::vector<double> DiscreteJoint::p_sx() const {
  std::vector<double> out(ns_ * nx_, 0.0);
  for (std::size_t s = 0; s < ns_; ++s) {
    for (std::size_t u = 0; u < nu_; ++u) {
      for (std::size_t x = 0; x < nx_; ++x) out[s * nx_ + x] += p(s, u, x);
    }
  }
  return out;
}

std::vector<double> DiscreteJoint::p_ux() const {
  std::vector<double> out(nu_ * nx_, 0.0);
  for (std::size_t s = 0; s < ns_; ++s) {
    for (std::size_t u = 0; u < nu_; ++u) {
      for (std::size_t x = 0; x < nx_; ++x) out[u * nx_ + x] += p(s, u, x);
    }
  }
  return out;
}

std::vector<double> DiscreteJoint::p_s() const {
  std::vector<double> out(ns_, 0.0);
  const auto sx = p_sx();
  for (std::size_t s = 0; s < ns_; ++s) {
    for (std::size_t x = 0; x < nx_; ++x) out[s] += sx[s * nx_ + x];
  }
  return out;
}

std::vector<double> DiscreteJoint::p_x() const {
  std::vector<double> out(nx_, 0.0);
  const auto sx = p_sx();
  for (std::size_t s = 0; s < ns_; ++s) {
    for (std::size_t x = 0; x < nx_; ++x) out[x] += sx[s * nx_ + x];
  }
  return out;
}

JointSampler::JointSampler(const DiscreteJoint& joint, std::uint64_t seed)
    : nu_(joint.nu()), nx_(joint.nx()), engine_(seed), cells_(joint.table().begin(), joint.table().end()) {}

SxuSample JointSampler::operator()() {
  const std::size_t cell = cells_(engine_);
  return {cell / (nu_ * nx_), (cell / nx_) % nu_, cell % nx_};
}

}  // namespace varleak::data
