// SPDX-License-Identifier: Apache-2.0

#pragma once

/**
 * @file synthetic_env.hpp
 * @brief Seeded multi-step environment with exactly known process rewards.
 *
 * Each problem hides a ReasoningTree. Step k of a chain reads
 * "choose branch j" (j is 1-based); the final step additionally states
 * "The answer is A", where A is the gold answer exactly when the leaf reward
 * is 1. Sampling follows the tree's branch probabilities.
 */

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "erprm/chain_model.hpp"
#include "erprm/reasoning_tree.hpp"
#include "erprm/rng.hpp"

namespace erprm {

struct EnvConfig {
  std::size_t num_problems = 200;
  std::size_t depth = 3;
  std::size_t branching = 3;
  double rho_min = 0.1;
  double rho_max = 0.9;
  std::uint64_t seed = 0;

  /// L >= 1, b >= 2, 0 < rho_min <= rho_max < 1; PreconditionError otherwise.
  void validate() const;
};

struct EnvProblem {
  Problem problem;
  ReasoningTree tree;
};

std::vector<EnvProblem> build_env(const EnvConfig& config);

/// Text of the step that enters `node` (must not be the root).
std::string env_step_text(const EnvProblem& env, NodeId node);
/// Step texts along the path to `node`.
std::vector<std::string> env_steps_to(const EnvProblem& env, NodeId node);
/// Answer written on a leaf: gold for reward 1, a distinct wrong number otherwise.
std::string env_leaf_answer(const EnvProblem& env, NodeId leaf);

/// Node reached by `steps`; PreconditionError when any step text does not
/// name a branch of the tree exactly.
NodeId env_locate(const EnvProblem& env, std::span<const std::string> steps);

struct Completion {
  std::vector<std::string> steps;  // the full chain: prefix followed by the continuation
  std::string final_answer;
  bool correct = false;
  bool parse_failure = false;
};

/// `n` independent continuations of `prefix` under `policy`, a tree of the
/// same shape as env.tree (env.tree itself for pi0). Draw i uses the stream
/// key.child(i). Throws PreconditionError for n == 0 or an invalid prefix.
std::vector<Completion> env_complete(const EnvProblem& env, const ReasoningTree& policy,
                                     const PartialChain& prefix, std::size_t n, const StreamKey& key);
std::vector<Completion> env_complete(const EnvProblem& env, const PartialChain& prefix, std::size_t n,
                                     const StreamKey& key);

double env_success_probability(const EnvProblem& env, const PartialChain& prefix);

/// (1/eta) ln(p e^eta + 1 - p) with p the exact success probability.
double env_analytic_er_reward(const EnvProblem& env, const PartialChain& prefix, double eta);

/// {"format":"erprm-env-1","config":{...},"problems":[{id,statement,gold_answer,tree},...]}.
std::string env_to_json(const EnvConfig& config, std::span<const EnvProblem> env);
struct LoadedEnv {
  std::optional<EnvConfig> config;
  std::vector<EnvProblem> problems;
};
LoadedEnv env_from_json(std::string_view text);

/// Finds a problem by id; nullptr when absent.
const EnvProblem* find_problem(std::span<const EnvProblem> env, std::string_view id);

std::vector<Problem> env_problems(std::span<const EnvProblem> env);

}  // namespace erprm
