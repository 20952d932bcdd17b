// SPDX-License-Identifier: Apache-2.0

#include "erprm/reward_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "erprm/errors.hpp"

namespace erprm {

namespace {

// Neumaier-compensated sum; rollout batches go up to 10^6 values.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double checked(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string(what) + ": non-finite result");
  }
  return value;
}

}  // namespace

Eta::Eta(double value) : value_(value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw PreconditionError("eta must be positive and finite, got " + std::to_string(value));
  }
}

OutcomeSamples::OutcomeSamples(std::vector<double> rewards) : rewards_(std::move(rewards)) {
  if (rewards_.empty()) {
    throw PreconditionError("outcome samples must contain at least one reward");
  }
  min_ = std::numeric_limits<double>::infinity();
  max_ = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rewards_.size(); ++i) {
    const double y = rewards_[i];
    if (!(y >= 0.0 && y <= 1.0)) {
      throw PreconditionError("reward " + std::to_string(i) + " outside [0,1]: " + std::to_string(y));
    }
    if (y == 1.0) {
      ++correct_;
    } else if (y != 0.0) {
      binary_ = false;
    }
    min_ = std::min(min_, y);
    max_ = std::max(max_, y);
  }
}

OutcomeSamples OutcomeSamples::from_counts(std::size_t correct, std::size_t total) {
  if (correct > total) {
    throw PreconditionError("correct count exceeds total");
  }
  std::vector<double> rewards(total, 0.0);
  std::fill_n(rewards.begin(), correct, 1.0);
  return OutcomeSamples(std::move(rewards));
}

std::string_view to_string(LabelMethod method) {
  switch (method) {
    case LabelMethod::er_softmax: return "er_softmax";
    case LabelMethod::er_softmin: return "er_softmin";
    case LabelMethod::soft: return "soft";
    case LabelMethod::hard: return "hard";
    case LabelMethod::orm: return "orm";
  }
  return "unknown";
}

LabelMethod parse_label_method(std::string_view name) {
  if (name == "er_softmax" || name == "er") return LabelMethod::er_softmax;
  if (name == "er_softmin") return LabelMethod::er_softmin;
  if (name == "soft") return LabelMethod::soft;
  if (name == "hard") return LabelMethod::hard;
  if (name == "orm") return LabelMethod::orm;
  throw UsageError("unknown label method '" + std::string(name) + "'");
}

bool needs_eta(LabelMethod method) noexcept {
  return method == LabelMethod::er_softmax || method == LabelMethod::er_softmin;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) {
    throw PreconditionError("log_sum_exp of an empty list");
  }
  double shift = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw PreconditionError("log_sum_exp input is not finite");
    }
    shift = std::max(shift, v);
  }
  CompensatedSum sum;
  for (double v : values) sum.add(std::exp(v - shift));
  return shift + std::log(sum.value());
}

double er_softmax_from_probability(double p, double eta) {
  if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("success probability outside [0, 1]");
  Eta checked_eta(eta);
  (void)checked_eta;
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  double value;
  if (eta <= 1.0) {
    // ln(1 + p (e^eta - 1)) / eta, accurate as eta -> 0.
    value = std::log1p(p * std::expm1(eta)) / eta;
  } else {
    // ln(p e^eta + (1-p)) = eta + ln p + ln(1 + (1-p)/p e^-eta); no overflow for large eta.
    value = 1.0 + (std::log(p) + std::log1p((1.0 - p) / p * std::exp(-eta))) / eta;
  }
  return checked(value, "er_softmax");
}

double er_softmax_from_counts(std::size_t correct, std::size_t total, double eta) {
  if (total == 0 || correct > total) {
    throw PreconditionError("invalid rollout counts");
  }
  if (correct == total) {
    Eta checked_eta(eta);
    return 1.0;
  }
  return er_softmax_from_probability(static_cast<double>(correct) / static_cast<double>(total), eta);
}

double er_softmin_from_counts(std::size_t correct, std::size_t total, double eta) {
  if (total == 0 || correct > total) {
    throw PreconditionError("invalid rollout counts");
  }
  Eta checked_eta(eta);
  (void)checked_eta;
  if (correct == 0) return 0.0;
  if (correct == total) return 1.0;
  const double p = static_cast<double>(correct) / static_cast<double>(total);
  // -ln((1-p) + p e^-eta) / eta
  return checked(-std::log1p(p * std::expm1(-eta)) / eta, "er_softmin");
}

ProcessRewardLabel er_softmax_reward(const OutcomeSamples& samples, Eta eta) {
  if (samples.is_binary()) {
    return {er_softmax_from_counts(samples.correct_count(), samples.size(), eta.value()),
            LabelMethod::er_softmax};
  }
  // m + ln(1 + mean(expm1(eta (y - m)))) / eta with m = max y; every term is in (-1, 0].
  const double m = samples.max();
  const double e = eta.value();
  CompensatedSum sum;
  for (double y : samples.rewards()) sum.add(std::expm1(e * (y - m)));
  const double mean = sum.value() / static_cast<double>(samples.size());
  return {checked(m + std::log1p(mean) / e, "er_softmax"), LabelMethod::er_softmax};
}

ProcessRewardLabel er_softmin_reward(const OutcomeSamples& samples, Eta eta) {
  if (samples.is_binary()) {
    return {er_softmin_from_counts(samples.correct_count(), samples.size(), eta.value()),
            LabelMethod::er_softmin};
  }
  const double m = samples.min();
  const double e = eta.value();
  CompensatedSum sum;
  for (double y : samples.rewards()) sum.add(std::expm1(-e * (y - m)));
  const double mean = sum.value() / static_cast<double>(samples.size());
  return {checked(m - std::log1p(mean) / e, "er_softmin"), LabelMethod::er_softmin};
}

ProcessRewardLabel soft_label_reward(const OutcomeSamples& samples) {
  if (samples.is_binary()) {
    return {static_cast<double>(samples.correct_count()) / static_cast<double>(samples.size()),
            LabelMethod::soft};
  }
  CompensatedSum sum;
  for (double y : samples.rewards()) sum.add(y);
  return {sum.value() / static_cast<double>(samples.size()), LabelMethod::soft};
}

ProcessRewardLabel hard_label_reward(const OutcomeSamples& samples) {
  return {samples.max(), LabelMethod::hard};
}

ProcessRewardLabel aggregate(const OutcomeSamples& samples, LabelMethod method,
                             std::optional<Eta> eta) {
  if (needs_eta(method) && !eta) {
    throw UsageError(std::string(to_string(method)) + " requires eta");
  }
  if (!needs_eta(method) && eta) {
    throw UsageError(std::string(to_string(method)) + " does not take eta");
  }
  switch (method) {
    case LabelMethod::er_softmax: return er_softmax_reward(samples, *eta);
    case LabelMethod::er_softmin: return er_softmin_reward(samples, *eta);
    case LabelMethod::soft: return soft_label_reward(samples);
    case LabelMethod::hard: return hard_label_reward(samples);
    case LabelMethod::orm: break;
  }
  throw UsageError("orm labels come from the chain's final answer, not from rollouts");
}

}  // namespace erprm
