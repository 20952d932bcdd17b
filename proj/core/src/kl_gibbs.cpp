// SPDX-License-Identifier: Apache-2.0

#include "erprm/kl_gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "erprm/errors.hpp"

namespace erprm {

namespace detail {

double log_sum_exp_sparse(std::span<const double> values) {
  double shift = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw NumericError("log_sum_exp_sparse: invalid term");
    }
    shift = std::max(shift, v);
  }
  if (shift == -std::numeric_limits<double>::infinity()) return shift;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - shift);
  return shift + std::log(sum);
}

}  // namespace detail

FiniteDistribution::FiniteDistribution(std::vector<std::string> atoms, std::vector<double> probs)
    : atoms_(std::move(atoms)), probs_(std::move(probs)) {
  if (atoms_.empty()) {
    throw PreconditionError("distribution needs at least one atom");
  }
  if (atoms_.size() != probs_.size()) {
    throw PreconditionError("atoms and probabilities differ in length");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    if (!(probs_[i] >= 0.0) || !std::isfinite(probs_[i])) {
      throw PreconditionError("probability of atom '" + atoms_[i] + "' is negative or non-finite");
    }
    if (!index_.emplace(atoms_[i], i).second) {
      throw PreconditionError("duplicate atom '" + atoms_[i] + "'");
    }
    total += probs_[i];
  }
  if (std::fabs(total - 1.0) > kNormalizationTolerance) {
    throw PreconditionError("probabilities sum to " + std::to_string(total) + ", not 1");
  }
}

FiniteDistribution FiniteDistribution::uniform(std::vector<std::string> atoms) {
  const std::size_t n = atoms.size();
  if (n == 0) throw PreconditionError("distribution needs at least one atom");
  std::vector<double> probs(n, 1.0 / static_cast<double>(n));
  return FiniteDistribution(std::move(atoms), std::move(probs));
}

std::optional<std::size_t> FiniteDistribution::index_of(std::string_view atom) const {
  auto it = index_.find(atom);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

double FiniteDistribution::prob(std::string_view atom) const {
  auto idx = index_of(atom);
  return idx ? probs_[*idx] : 0.0;
}

namespace {

double reward_of(const RewardTable& reward, const std::string& atom) {
  auto it = reward.find(atom);
  if (it == reward.end()) {
    throw PreconditionError("reward table has no entry for atom '" + atom + "'");
  }
  if (!std::isfinite(it->second)) {
    throw PreconditionError("reward for atom '" + atom + "' is not finite");
  }
  return it->second;
}

}  // namespace

GibbsResult gibbs_tilt(const FiniteDistribution& p0, const RewardTable& reward, Eta eta) {
  const auto probs = p0.probs();
  std::vector<double> log_weight(p0.size());
  for (std::size_t i = 0; i < p0.size(); ++i) {
    const double r = reward_of(reward, p0.atoms()[i]);
    log_weight[i] = probs[i] > 0.0 ? std::log(probs[i]) + eta.value() * r
                                   : -std::numeric_limits<double>::infinity();
  }
  const double log_z = detail::log_sum_exp_sparse(log_weight);
  std::vector<double> tilted(p0.size());
  for (std::size_t i = 0; i < p0.size(); ++i) {
    tilted[i] = std::exp(log_weight[i] - log_z);
  }
  return {FiniteDistribution(p0.atoms(), std::move(tilted)), log_z};
}

double kl_divergence(const FiniteDistribution& p, const FiniteDistribution& q) {
  double kl = 0.0;
  const auto probs = p.probs();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (probs[i] == 0.0) continue;
    const double qi = q.prob(p.atoms()[i]);
    if (qi == 0.0) {
      throw PreconditionError("KL undefined: atom '" + p.atoms()[i] +
                              "' has mass under p but not under q");
    }
    kl += probs[i] * (std::log(probs[i]) - std::log(qi));
  }
  // Rounding may leave a tiny negative value for p == q.
  return std::max(kl, 0.0);
}

double kl_objective(const FiniteDistribution& p, const FiniteDistribution& p0,
                    const RewardTable& reward, Eta eta) {
  double expected = 0.0;
  const auto probs = p.probs();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (probs[i] == 0.0) continue;
    expected += probs[i] * reward_of(reward, p.atoms()[i]);
  }
  return -expected + kl_divergence(p, p0) / eta.value();
}

}  // namespace erprm
