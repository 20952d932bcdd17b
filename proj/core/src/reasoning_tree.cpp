// SPDX-License-Identifier: Apache-2.0

#include "erprm/reasoning_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "erprm/errors.hpp"
#include "erprm/kl_gibbs.hpp"
#include "erprm/rng.hpp"
#include "json_io.hpp"

namespace erprm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

void flatten(const TreeSpec& spec, std::optional<NodeId> parent, double prob, std::size_t depth,
             std::size_t branch, std::vector<TreeNode>& out) {
  const NodeId id = out.size();
  TreeNode node;
  node.parent = parent;
  node.prob = prob;
  node.log_prob = safe_log(prob);
  node.reward = spec.reward;
  node.depth = depth;
  node.branch = branch;
  out.push_back(node);
  for (std::size_t i = 0; i < spec.children.size(); ++i) {
    const NodeId child = out.size();
    out[id].children.push_back(child);
    flatten(spec.children[i].second, id, spec.children[i].first, depth + 1, i, out);
  }
}

}  // namespace

ReasoningTree::ReasoningTree(const TreeSpec& spec) {
  flatten(spec, std::nullopt, 1.0, 0, 0, nodes_);
  validate();
}

void ReasoningTree::validate() {
  std::optional<std::size_t> leaf_depth;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const TreeNode& n = nodes_[id];
    if (n.is_leaf()) {
      if (n.reward != 0 && n.reward != 1) {
        throw PreconditionError("leaf " + std::to_string(id) + " has non-binary reward");
      }
      if (leaf_depth && *leaf_depth != n.depth) {
        throw PreconditionError("leaves at different depths (" + std::to_string(*leaf_depth) +
                                " and " + std::to_string(n.depth) + ")");
      }
      leaf_depth = n.depth;
      continue;
    }
    double total = 0.0;
    for (NodeId c : n.children) {
      const double p = nodes_[c].prob;
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw PreconditionError("branch probability of node " + std::to_string(c) + " is invalid");
      }
      total += p;
    }
    if (std::fabs(total - 1.0) > kNormalizationTolerance) {
      throw PreconditionError("children of node " + std::to_string(id) + " sum to " +
                              std::to_string(total));
    }
  }
  if (!leaf_depth || *leaf_depth == 0) {
    throw PreconditionError("reasoning tree must have depth >= 1");
  }
  depth_ = *leaf_depth;
}

NodeId ReasoningTree::find(std::span<const std::size_t> path) const {
  NodeId id = root();
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto& children = nodes_[id].children;
    if (path[i] >= children.size()) {
      throw PreconditionError("prefix leaves the tree at step " + std::to_string(i + 1) +
                              " (branch " + std::to_string(path[i]) + " of " +
                              std::to_string(children.size()) + ")");
    }
    id = children[path[i]];
  }
  return id;
}

std::vector<std::size_t> ReasoningTree::path_of(NodeId id) const {
  std::vector<std::size_t> path;
  for (NodeId cur = id; nodes_.at(cur).parent; cur = *nodes_[cur].parent) {
    path.push_back(nodes_[cur].branch);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<NodeId> ReasoningTree::leaves_under(NodeId id) const {
  std::vector<NodeId> leaves;
  std::vector<NodeId> stack{id};
  while (!stack.empty()) {
    const NodeId cur = stack.back();
    stack.pop_back();
    const auto& n = nodes_.at(cur);
    if (n.is_leaf()) {
      leaves.push_back(cur);
      continue;
    }
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
  }
  return leaves;
}

bool ReasoningTree::is_ancestor(NodeId ancestor, NodeId descendant) const {
  for (std::optional<NodeId> cur = descendant; cur; cur = nodes_.at(*cur).parent) {
    if (*cur == ancestor) return true;
  }
  return false;
}

double ReasoningTree::log_prob_between(NodeId ancestor, NodeId descendant) const {
  double lp = 0.0;
  NodeId cur = descendant;
  while (cur != ancestor) {
    const auto& n = nodes_.at(cur);
    if (!n.parent) {
      throw PreconditionError("node " + std::to_string(ancestor) + " is not an ancestor of " +
                              std::to_string(descendant));
    }
    lp += n.log_prob;
    cur = *n.parent;
  }
  return lp;
}

ReasoningTree ReasoningTree::with_log_probs(std::span<const double> log_probs) const {
  if (log_probs.size() != nodes_.size()) {
    throw PreconditionError("one log probability per node required");
  }
  ReasoningTree out;
  out.nodes_ = nodes_;
  for (NodeId id = 1; id < out.nodes_.size(); ++id) {
    out.nodes_[id].log_prob = log_probs[id];
    out.nodes_[id].prob = std::exp(log_probs[id]);
  }
  out.validate();
  return out;
}

TreeSpec ReasoningTree::to_spec() const {
  struct Builder {
    const ReasoningTree& t;
    TreeSpec build(NodeId id) const {
      const auto& n = t.nodes_[id];
      if (n.is_leaf()) return TreeSpec::leaf(n.reward);
      TreeSpec spec;
      for (NodeId c : n.children) spec.children.emplace_back(t.nodes_[c].prob, build(c));
      return spec;
    }
  };
  return Builder{*this}.build(root());
}

ReasoningTree random_tree(const RandomTreeConfig& config, std::uint64_t seed) {
  if (config.min_depth < 1 || config.max_depth < config.min_depth) {
    throw PreconditionError("random tree depth range is invalid");
  }
  if (config.min_branching < 1 || config.max_branching < config.min_branching) {
    throw PreconditionError("random tree branching range is invalid");
  }
  if (!(config.rho_min >= 0.0 && config.rho_min <= config.rho_max && config.rho_max <= 1.0)) {
    throw PreconditionError("random tree success range is invalid");
  }
  Rng rng(StreamKey(seed).child("random_tree"));
  const std::size_t depth =
      config.min_depth + rng.uniform_index(config.max_depth - config.min_depth + 1);
  const double rho = rng.uniform_real(config.rho_min, config.rho_max);

  struct Grow {
    const RandomTreeConfig& cfg;
    Rng& rng;
    std::size_t depth;
    double rho;
    TreeSpec build(std::size_t level) {
      if (level == depth) return TreeSpec::leaf(rng.bernoulli(rho) ? 1 : 0);
      const std::size_t branching =
          cfg.min_branching + rng.uniform_index(cfg.max_branching - cfg.min_branching + 1);
      const auto probs = sample_flat_dirichlet(rng, branching);
      TreeSpec spec;
      for (double p : probs) spec.children.emplace_back(p, build(level + 1));
      return spec;
    }
  };
  Grow grow{config, rng, depth, rho};
  return ReasoningTree(grow.build(0));
}

double exact_partial_reward(const ReasoningTree& tree, NodeId prefix, Eta eta) {
  const auto leaves = tree.leaves_under(prefix);
  std::vector<double> terms;
  terms.reserve(leaves.size());
  for (NodeId leaf : leaves) {
    terms.push_back(tree.log_prob_between(prefix, leaf) + eta.value() * tree.node(leaf).reward);
  }
  return detail::log_sum_exp_sparse(terms) / eta.value();
}

double exact_partial_reward(const ReasoningTree& tree, std::span<const std::size_t> prefix,
                            Eta eta) {
  return exact_partial_reward(tree, tree.find(prefix), eta);
}

double exact_success_probability(const ReasoningTree& tree, NodeId prefix) {
  double p = 0.0;
  for (NodeId leaf : tree.leaves_under(prefix)) {
    if (tree.node(leaf).reward == 1) p += std::exp(tree.log_prob_between(prefix, leaf));
  }
  // Summed leaf mass can land a few ulps above 1.
  return std::min(p, 1.0);
}

std::vector<double> soft_values(const ReasoningTree& tree, Eta eta) {
  std::vector<double> value(tree.size());
  // Preorder layout: children always follow their parent.
  std::vector<double> terms;
  for (NodeId id = tree.size(); id-- > 0;) {
    const auto& n = tree.node(id);
    if (n.is_leaf()) {
      value[id] = eta.value() * n.reward;
      continue;
    }
    terms.clear();
    for (NodeId c : n.children) terms.push_back(tree.node(c).log_prob + value[c]);
    value[id] = detail::log_sum_exp_sparse(terms);
  }
  return value;
}

ReasoningTree optimal_chain_policy(const ReasoningTree& tree, Eta eta) {
  const auto value = soft_values(tree, eta);
  std::vector<double> log_probs(tree.size(), 0.0);
  std::vector<double> terms;
  for (NodeId id = 0; id < tree.size(); ++id) {
    const auto& n = tree.node(id);
    if (n.is_leaf()) continue;
    terms.clear();
    for (NodeId c : n.children) terms.push_back(tree.node(c).log_prob + value[c] - value[id]);
    // value[id] already normalizes; the second pass removes residual rounding.
    const double norm = detail::log_sum_exp_sparse(terms);
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      log_probs[n.children[i]] = terms[i] - norm;
    }
  }
  return tree.with_log_probs(log_probs);
}

double softmin_equivalence_residual(const ReasoningTree& tree, NodeId prefix, Eta eta) {
  return softmin_equivalence_residual(tree, optimal_chain_policy(tree, eta), prefix, eta);
}

double softmin_equivalence_residual(const ReasoningTree& tree, const ReasoningTree& optimal,
                                    NodeId prefix, Eta eta) {
  if (optimal.size() != tree.size()) throw PreconditionError("optimal tree shape mismatch");
  std::vector<double> terms;
  for (NodeId leaf : optimal.leaves_under(prefix)) {
    terms.push_back(optimal.log_prob_between(prefix, leaf) - eta.value() * optimal.node(leaf).reward);
  }
  const double softmin = -detail::log_sum_exp_sparse(terms) / eta.value();
  return std::fabs(softmin - exact_partial_reward(tree, prefix, eta));
}

double reparameterization_residual(const ReasoningTree& tree, NodeId prefix, Eta eta) {
  return reparameterization_residual(tree, optimal_chain_policy(tree, eta), prefix, eta);
}

double reparameterization_residual(const ReasoningTree& tree, const ReasoningTree& optimal,
                                   NodeId prefix, Eta eta) {
  if (optimal.size() != tree.size()) throw PreconditionError("optimal tree shape mismatch");
  const auto leaves = tree.leaves_under(prefix);
  std::vector<double> log_weight;
  for (NodeId leaf : leaves) {
    log_weight.push_back(optimal.log_prob_between(prefix, leaf) -
                         eta.value() * tree.node(leaf).reward);
  }
  const double log_norm = detail::log_sum_exp_sparse(log_weight);
  double residual = 0.0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const double reference = std::exp(tree.log_prob_between(prefix, leaves[i]));
    const double reconstructed = std::exp(log_weight[i] - log_norm);
    residual = std::max(residual, std::fabs(reference - reconstructed));
  }
  return residual;
}

double marginal_consistency_residual(const ReasoningTree& tree, Eta eta) {
  // (a) chain-level Gibbs distribution over leaves, pushed up to every ancestor.
  const auto leaves = tree.leaves_under(tree.root());
  std::vector<std::string> atoms;
  std::vector<double> probs;
  RewardTable reward;
  for (NodeId leaf : leaves) {
    atoms.push_back("leaf" + std::to_string(leaf));
    probs.push_back(std::exp(tree.log_prob_between(tree.root(), leaf)));
    reward[atoms.back()] = tree.node(leaf).reward;
  }
  const auto gibbs = gibbs_tilt(FiniteDistribution(atoms, probs), reward, eta);
  std::vector<double> gibbs_marginal(tree.size(), 0.0);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const double mass = gibbs.tilted.probs()[i];
    for (std::optional<NodeId> cur = leaves[i]; cur; cur = tree.node(*cur).parent) {
      gibbs_marginal[*cur] += mass;
    }
  }

  // (b) pi0(v) e^{eta r(v)} normalized within each depth, r from enumeration.
  std::vector<std::vector<NodeId>> by_depth(tree.depth() + 1);
  for (NodeId id = 0; id < tree.size(); ++id) by_depth[tree.node(id).depth].push_back(id);
  std::vector<double> formula(tree.size(), 0.0);
  for (const auto& level : by_depth) {
    std::vector<double> log_w;
    for (NodeId v : level) {
      log_w.push_back(tree.log_prob_between(tree.root(), v) +
                      eta.value() * exact_partial_reward(tree, v, eta));
    }
    const double norm = detail::log_sum_exp_sparse(log_w);
    for (std::size_t i = 0; i < level.size(); ++i) formula[level[i]] = std::exp(log_w[i] - norm);
  }

  // (c) step-wise factorization.
  const ReasoningTree optimal = optimal_chain_policy(tree, eta);

  double residual = 0.0;
  for (NodeId id = 1; id < tree.size(); ++id) {
    const double stepwise = std::exp(optimal.log_prob_between(optimal.root(), id));
    residual = std::max(residual, std::fabs(gibbs_marginal[id] - formula[id]));
    residual = std::max(residual, std::fabs(gibbs_marginal[id] - stepwise));
  }
  return residual;
}

namespace json_io {

Json tree_node_to_json(const ReasoningTree& tree, NodeId id) {
  const auto& n = tree.node(id);
  Json out = Json::object();
  if (n.is_leaf()) {
    out["reward"] = n.reward;
    return out;
  }
  Json children = Json::array();
  for (NodeId c : n.children) {
    Json edge = Json::object();
    edge["prob"] = tree.node(c).prob;
    edge["node"] = tree_node_to_json(tree, c);
    children.push_back(std::move(edge));
  }
  out["children"] = std::move(children);
  return out;
}

TreeSpec tree_spec_from_json(const Json& node, const std::string& where) {
  if (!node.is_object()) throw DataError(where + ": tree node must be an object");
  if (node.contains("reward")) {
    const auto& r = node["reward"];
    if (!r.is_number_integer()) throw DataError(where + ": leaf reward must be 0 or 1");
    return TreeSpec::leaf(r.get<int>());
  }
  const auto& children = require(node, "children", where);
  if (!children.is_array() || children.empty()) {
    throw DataError(where + ": 'children' must be a non-empty array");
  }
  TreeSpec spec;
  for (std::size_t i = 0; i < children.size(); ++i) {
    const std::string child_where = where + ".children[" + std::to_string(i) + "]";
    const auto& prob = require(children[i], "prob", child_where);
    if (!prob.is_number()) throw DataError(child_where + ": 'prob' must be a number");
    spec.children.emplace_back(prob.get<double>(),
                               tree_spec_from_json(require(children[i], "node", child_where),
                                                   child_where + ".node"));
  }
  return spec;
}

Json tree_document(const ReasoningTree& tree) {
  Json doc = Json::object();
  doc["format"] = "erprm-tree-1";
  doc["root"] = tree_node_to_json(tree, tree.root());
  return doc;
}

ReasoningTree tree_from_document(const Json& doc, const std::string& where) {
  const auto& format = require(doc, "format", where);
  if (!format.is_string() || format.get<std::string>() != "erprm-tree-1") {
    throw DataError(where + ": unsupported tree format");
  }
  try {
    return ReasoningTree(tree_spec_from_json(require(doc, "root", where), where + ".root"));
  } catch (const PreconditionError& e) {
    throw DataError(where + ": " + e.what());
  }
}

const Json& require(const Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw DataError(where + ": missing field '" + key + "'");
  }
  return obj[key];
}

std::string dump_line(const Json& value) {
  return value.dump(-1, ' ', false, Json::error_handler_t::strict);
}

}  // namespace json_io

std::string tree_to_json(const ReasoningTree& tree) {
  return json_io::tree_document(tree).dump(2);
}

ReasoningTree tree_from_json(std::string_view text) {
  json_io::Json doc;
  try {
    doc = json_io::Json::parse(text);
  } catch (const json_io::Json::parse_error& e) {
    throw DataError(std::string("tree JSON: ") + e.what());
  }
  return json_io::tree_from_document(doc, "tree");
}

}  // namespace erprm
