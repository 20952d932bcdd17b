// SPDX-License-Identifier: Apache-2.0

#pragma once

/**
 * @file reasoning_tree.hpp
 * @brief Finite multi-step reasoning instances solved by exact enumeration.
 *
 * A ReasoningTree is a policy pi0 factorized over steps: every edge is one
 * step with its branch probability, every root-to-leaf path is a full chain a,
 * every node is a partial chain a^[l], and each leaf carries a binary terminal
 * reward r(a, x). All leaves sit at the same depth L.
 *
 * The free functions below compute, by brute force over leaves,
 *
 *   r(a^[l]) = (1/eta) ln E_{a^-[l] ~ pi0(.|a^[l])} e^{eta r(a)}           (soft-max form)
 *   r(a^[l]) = -(1/eta) ln E_{a^-[l] ~ pi*(.|a^[l])} e^{-eta r(a)}         (soft-min form)
 *
 * and the step-wise factorization of the chain-level Gibbs policy
 * pi*(a) proportional to pi0(a) e^{eta r(a)}, so every identity linking them
 * can be checked numerically.
 */

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "erprm/reward_core.hpp"

namespace erprm {

using NodeId = std::size_t;

/// Nested description used to build trees by hand (tests, fixtures).
struct TreeSpec {
  int reward = 0;  // leaves only
  std::vector<std::pair<double, TreeSpec>> children;

  static TreeSpec leaf(int reward) { return TreeSpec{reward, {}}; }
  static TreeSpec node(std::vector<std::pair<double, TreeSpec>> children) {
    return TreeSpec{0, std::move(children)};
  }
};

struct TreeNode {
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  double prob = 1.0;      // pi0(node | parent); 1 at the root
  double log_prob = 0.0;  // ln prob
  int reward = 0;         // leaves only, in {0, 1}
  std::size_t depth = 0;
  std::size_t branch = 0;  // position among the parent's children

  bool is_leaf() const noexcept { return children.empty(); }
};

class ReasoningTree {
 public:
  /// Validates: children probabilities sum to 1 within kNormalizationTolerance,
  /// leaf rewards binary, every leaf at the same depth L >= 1.
  explicit ReasoningTree(const TreeSpec& spec);

  NodeId root() const noexcept { return 0; }
  const TreeNode& node(NodeId id) const { return nodes_.at(id); }
  std::span<const TreeNode> nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  /// Number of steps L in every full chain.
  std::size_t depth() const noexcept { return depth_; }

  /// Node reached by following branch indices from the root. Throws
  /// PreconditionError when the path leaves the tree.
  NodeId find(std::span<const std::size_t> path) const;
  std::vector<std::size_t> path_of(NodeId id) const;
  /// Leaves in the subtree of `id` (the node itself when it is a leaf).
  std::vector<NodeId> leaves_under(NodeId id) const;
  /// ln pi0(descendant | ancestor); requires `ancestor` on the path to the root.
  double log_prob_between(NodeId ancestor, NodeId descendant) const;
  bool is_ancestor(NodeId ancestor, NodeId descendant) const;

  /// Same shape with new branch probabilities given in the log domain (one per
  /// node, root entry ignored). Validates normalization.
  ReasoningTree with_log_probs(std::span<const double> log_probs) const;

  TreeSpec to_spec() const;

 private:
  ReasoningTree() = default;
  void validate();

  std::vector<TreeNode> nodes_;
  std::size_t depth_ = 0;
};

/// Generator settings. Depth is drawn once per tree, branching once per
/// internal node, branch probabilities from Dirichlet(1,...,1), leaf rewards
/// Bernoulli(rho) with rho ~ U[rho_min, rho_max] once per tree.
struct RandomTreeConfig {
  std::size_t min_depth = 1;
  std::size_t max_depth = 5;
  std::size_t min_branching = 2;
  std::size_t max_branching = 4;
  double rho_min = 0.1;
  double rho_max = 0.9;
};

ReasoningTree random_tree(const RandomTreeConfig& config, std::uint64_t seed);

/// (1/eta) ln sum_{leaves under prefix} pi0(leaf | prefix) e^{eta r(leaf)}, by
/// enumerating leaves.
double exact_partial_reward(const ReasoningTree& tree, NodeId prefix, Eta eta);
double exact_partial_reward(const ReasoningTree& tree, std::span<const std::size_t> prefix, Eta eta);

/// Exact success probability sum_{leaves} pi0(leaf | prefix) r(leaf).
double exact_success_probability(const ReasoningTree& tree, NodeId prefix);

/// eta * r(a^[l]) for every node by backward recursion (the soft value).
std::vector<double> soft_values(const ReasoningTree& tree, Eta eta);

/// Tree of identical shape whose branch probabilities factorize the
/// chain-level Gibbs policy: pi*(c | v) = pi0(c | v) e^{eta (r(c) - r(v))}.
ReasoningTree optimal_chain_policy(const ReasoningTree& tree, Eta eta);

/// |(-1/eta) ln E_{pi*}[e^{-eta r}] - r(a^[l])| at `prefix`, both sides by enumeration.
double softmin_equivalence_residual(const ReasoningTree& tree, NodeId prefix, Eta eta);
/// Same, reusing `optimal` = optimal_chain_policy(tree, eta).
double softmin_equivalence_residual(const ReasoningTree& tree, const ReasoningTree& optimal,
                                    NodeId prefix, Eta eta);

/// max_c |pi0(c | prefix) - pi*(c | prefix) e^{-eta r(c)} / E_{pi*} e^{-eta r}|.
double reparameterization_residual(const ReasoningTree& tree, NodeId prefix, Eta eta);
double reparameterization_residual(const ReasoningTree& tree, const ReasoningTree& optimal,
                                   NodeId prefix, Eta eta);

/// Largest gap, over all non-root nodes v, between
///  (a) the marginal of v under the chain-level Gibbs distribution (gibbs_tilt over leaves),
///  (b) pi0(v) e^{eta r(v)} / sum_{v' at depth(v)} pi0(v') e^{eta r(v')}, and
///  (c) the product of optimal_chain_policy branch probabilities down to v.
double marginal_consistency_residual(const ReasoningTree& tree, Eta eta);

/// JSON document {"format":"erprm-tree-1","root":NODE}, where NODE is either
/// {"reward":0|1} or {"children":[{"prob":p,"node":NODE},...]}.
std::string tree_to_json(const ReasoningTree& tree);
ReasoningTree tree_from_json(std::string_view text);

}  // namespace erprm
