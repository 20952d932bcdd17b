// SPDX-License-Identifier: Apache-2.0

#pragma once

/**
 * @file reward_core.hpp
 * @brief Label aggregation rules over Monte-Carlo rollout outcomes.
 *
 * Given rollout rewards y_1..y_n in [0,1] collected from one partial chain,
 * each rule condenses them into a single step label:
 *
 *   er_softmax : (1/eta) ln( (1/n) sum_i exp(eta * y_i) )     rollouts from pi0
 *   er_softmin : -(1/eta) ln( (1/n) sum_i exp(-eta * y_i) )   rollouts from pi*
 *   soft       : (1/n) sum_i y_i
 *   hard       : max_i y_i
 *
 * eta -> 0 recovers the soft label; eta -> infinity recovers the hard label.
 * The expectation is the plain empirical mean, so the ER estimator carries an
 * O(1/n) bias that vanishes as n grows.
 *
 * All functions are pure and thread-safe.
 */

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace erprm {

/// Regularization strength. Always positive and finite.
class Eta {
 public:
  explicit Eta(double value);
  double value() const noexcept { return value_; }

 private:
  double value_;
};

/// Multiset of rollout rewards drawn from one partial chain.
class OutcomeSamples {
 public:
  explicit OutcomeSamples(std::vector<double> rewards);

  /// Binary samples with `correct` ones out of `total`.
  static OutcomeSamples from_counts(std::size_t correct, std::size_t total);

  std::span<const double> rewards() const noexcept { return rewards_; }
  std::size_t size() const noexcept { return rewards_.size(); }
  bool is_binary() const noexcept { return binary_; }
  /// Number of rewards equal to 1.
  std::size_t correct_count() const noexcept { return correct_; }
  double min() const noexcept { return min_; }
  double max() const noexcept { return max_; }

 private:
  std::vector<double> rewards_;
  std::size_t correct_ = 0;
  double min_ = 0.0;
  double max_ = 0.0;
  bool binary_ = true;
};

enum class LabelMethod { er_softmax, er_softmin, soft, hard, orm };

/// Stable textual names: "er_softmax", "er_softmin", "soft", "hard", "orm".
std::string_view to_string(LabelMethod method);
/// Inverse of to_string. Also accepts "er" as an alias of er_softmax.
LabelMethod parse_label_method(std::string_view name);
bool needs_eta(LabelMethod method) noexcept;

struct ProcessRewardLabel {
  double value;
  LabelMethod method;
};

/// ln sum_i exp(v_i) with max-shift. Throws PreconditionError on an empty or
/// non-finite input.
double log_sum_exp(std::span<const double> values);

ProcessRewardLabel er_softmax_reward(const OutcomeSamples& samples, Eta eta);
ProcessRewardLabel er_softmin_reward(const OutcomeSamples& samples, Eta eta);
ProcessRewardLabel soft_label_reward(const OutcomeSamples& samples);
ProcessRewardLabel hard_label_reward(const OutcomeSamples& samples);

/// Dispatches on `method`. eta must be present exactly for the two ER methods;
/// orm labels come from the chain's own answer and are rejected here.
ProcessRewardLabel aggregate(const OutcomeSamples& samples, LabelMethod method,
                             std::optional<Eta> eta = std::nullopt);

/// ER soft-max label for binary rollouts, straight from the counts. Used by
/// the pipeline and by recomputation checks on stored records.
double er_softmax_from_counts(std::size_t correct, std::size_t total, double eta);
/// (1/eta) ln(p e^eta + 1 - p) for a success probability p in [0, 1].
double er_softmax_from_probability(double p, double eta);
double er_softmin_from_counts(std::size_t correct, std::size_t total, double eta);

}  // namespace erprm
