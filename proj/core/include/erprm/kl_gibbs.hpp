// SPDX-License-Identifier: Apache-2.0

#pragma once

/**
 * @file kl_gibbs.hpp
 * @brief Exact KL-regularized optimization over finite action sets.
 *
 * For a reference policy p0 and reward r, the loss
 *
 *   L(p) = -E_p[r] + (1/eta) KL(p || p0)
 *
 * is minimized by the Gibbs distribution p*(a) = p0(a) e^{eta r(a)} / C_r with
 * C_r = E_{p0} e^{eta r}, and L(p*) = -(1/eta) ln C_r. The admissible policy
 * class is every distribution absolutely continuous w.r.t. p0.
 *
 * Everything is computed in the log domain; linear probabilities appear only
 * at the API boundary.
 */

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "erprm/reward_core.hpp"

namespace erprm {

/// Tolerance for probability normalization checks.
inline constexpr double kNormalizationTolerance = 1e-12;
/// Tolerance for identities verified by exact enumeration.
inline constexpr double kEnumerationTolerance = 1e-10;

class FiniteDistribution {
 public:
  /// Throws PreconditionError unless atoms are distinct, probs are
  /// non-negative and sum to 1 within kNormalizationTolerance.
  FiniteDistribution(std::vector<std::string> atoms, std::vector<double> probs);

  static FiniteDistribution uniform(std::vector<std::string> atoms);

  const std::vector<std::string>& atoms() const noexcept { return atoms_; }
  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return atoms_.size(); }

  std::optional<std::size_t> index_of(std::string_view atom) const;
  /// Probability of `atom`, 0 when the atom is not listed.
  double prob(std::string_view atom) const;

 private:
  std::vector<std::string> atoms_;
  std::vector<double> probs_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

using RewardTable = std::map<std::string, double, std::less<>>;

struct GibbsResult {
  FiniteDistribution tilted;
  /// ln E_{p0} e^{eta r}, i.e. ln C_r.
  double log_normalizer;
};

/// p*(a) proportional to p0(a) e^{eta r(a)}. Throws PreconditionError when r
/// misses an atom of p0 or holds a non-finite value.
GibbsResult gibbs_tilt(const FiniteDistribution& p0, const RewardTable& reward, Eta eta);

/// KL(p || q) with 0 ln 0 = 0. Throws PreconditionError if p puts mass where q has none.
double kl_divergence(const FiniteDistribution& p, const FiniteDistribution& q);

/// -E_p[r] + (1/eta) KL(p || p0).
double kl_objective(const FiniteDistribution& p, const FiniteDistribution& p0,
                    const RewardTable& reward, Eta eta);

namespace detail {
/// log-sum-exp that tolerates -inf entries (zero-probability terms).
/// Returns -inf when every entry is -inf.
double log_sum_exp_sparse(std::span<const double> values);
}  // namespace detail

}  // namespace erprm
