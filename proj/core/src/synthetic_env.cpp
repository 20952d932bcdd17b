// SPDX-License-Identifier: Apache-2.0

#include "erprm/synthetic_env.hpp"

#include <cstdio>

#include "erprm/errors.hpp"
#include "json_io.hpp"

namespace erprm {

using json_io::Json;

namespace {

constexpr std::string_view kEnvFormat = "erprm-env-1";
constexpr std::string_view kBranchPrefix = "choose branch ";

std::string problem_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%04zu", index);
  return buf;
}

// 0-based rank of `leaf` among all leaves in preorder.
std::size_t leaf_rank(const ReasoningTree& tree, NodeId leaf) {
  std::size_t rank = 0;
  for (NodeId id = 0; id < leaf; ++id) {
    if (tree.node(id).is_leaf()) ++rank;
  }
  return rank;
}

const EnvProblem& require_problem(const EnvProblem& env, const PartialChain& prefix) {
  if (!prefix.problem_id.empty() && prefix.problem_id != env.problem.id) {
    throw PreconditionError("prefix belongs to problem '" + prefix.problem_id + "', not '" +
                            env.problem.id + "'");
  }
  return env;
}

}  // namespace

void EnvConfig::validate() const {
  if (depth < 1) throw PreconditionError("environment depth must be >= 1");
  if (branching < 2) throw PreconditionError("environment branching must be >= 2");
  if (!(rho_min > 0.0 && rho_min <= rho_max && rho_max < 1.0)) {
    throw PreconditionError("environment needs 0 < rho_min <= rho_max < 1");
  }
}

std::vector<EnvProblem> build_env(const EnvConfig& config) {
  config.validate();
  const RandomTreeConfig tree_config{config.depth, config.depth, config.branching,
                                     config.branching, config.rho_min, config.rho_max};
  const StreamKey root = StreamKey(config.seed).child("env");
  std::vector<EnvProblem> env;
  env.reserve(config.num_problems);
  for (std::size_t i = 0; i < config.num_problems; ++i) {
    const StreamKey key = root.child(i);
    Rng rng(key.child("gold"));
    const std::string id = problem_id(i);
    Problem problem{id,
                    "Problem " + id + ": walk the hidden tree from its root, one branch per step, "
                    "and report the answer written at the leaf.",
                    std::to_string(10 + rng.uniform_index(990))};
    env.push_back({std::move(problem), random_tree(tree_config, key.child("tree").value())});
  }
  return env;
}

std::string env_leaf_answer(const EnvProblem& env, NodeId leaf) {
  const TreeNode& n = env.tree.node(leaf);
  if (!n.is_leaf()) throw PreconditionError("node " + std::to_string(leaf) + " is not a leaf");
  if (n.reward == 1) return env.problem.gold_answer;
  // Distinct from the gold answer and from every other wrong leaf.
  const long gold = std::stol(env.problem.gold_answer);
  return std::to_string(gold + 1 + static_cast<long>(leaf_rank(env.tree, leaf)));
}

std::string env_step_text(const EnvProblem& env, NodeId node) {
  const TreeNode& n = env.tree.node(node);
  if (!n.parent) throw PreconditionError("the root has no step text");
  std::string text = std::string(kBranchPrefix) + std::to_string(n.branch + 1);
  if (n.is_leaf()) text += ". The answer is " + env_leaf_answer(env, node);
  return text;
}

std::vector<std::string> env_steps_to(const EnvProblem& env, NodeId node) {
  std::vector<std::string> steps(env.tree.node(node).depth);
  for (NodeId id = node; env.tree.node(id).parent; id = *env.tree.node(id).parent) {
    steps[env.tree.node(id).depth - 1] = env_step_text(env, id);
  }
  return steps;
}

NodeId env_locate(const EnvProblem& env, std::span<const std::string> steps) {
  NodeId at = env.tree.root();
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::string& step = steps[i];
    const auto& children = env.tree.node(at).children;
    auto invalid = [&](const std::string& why) {
      return PreconditionError("step " + std::to_string(i + 1) + " of problem '" + env.problem.id +
                               "' " + why);
    };
    if (children.empty()) throw invalid("continues past a leaf");
    if (step.rfind(kBranchPrefix, 0) != 0) throw invalid("does not name a branch");
    std::size_t j = 0;
    std::size_t pos = kBranchPrefix.size();
    while (pos < step.size() && step[pos] >= '0' && step[pos] <= '9' && j <= children.size()) {
      j = j * 10 + static_cast<std::size_t>(step[pos++] - '0');
    }
    if (j < 1 || j > children.size()) throw invalid("names a branch outside the tree");
    const NodeId next = children[j - 1];
    if (step != env_step_text(env, next)) throw invalid("does not match the branch text");
    at = next;
  }
  return at;
}

std::vector<Completion> env_complete(const EnvProblem& env, const ReasoningTree& policy,
                                     const PartialChain& prefix, std::size_t n, const StreamKey& key) {
  if (n == 0) throw PreconditionError("completions per prefix must be >= 1");
  if (policy.size() != env.tree.size()) {
    throw PreconditionError("sampling policy does not match the environment tree");
  }
  require_problem(env, prefix);
  const NodeId start = env_locate(env, prefix.steps);
  std::vector<Completion> out;
  out.reserve(n);
  std::vector<double> weights;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(key.child(i));
    NodeId at = start;
    Completion c;
    c.steps = prefix.steps;
    while (!policy.node(at).is_leaf()) {
      const auto& children = policy.node(at).children;
      weights.clear();
      for (NodeId child : children) weights.push_back(policy.node(child).prob);
      at = children[rng.categorical(weights)];
      c.steps.push_back(env_step_text(env, at));
    }
    c.final_answer = extract_final_answer(c.steps.back());
    c.correct = answers_match(c.final_answer, env.problem.gold_answer);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<Completion> env_complete(const EnvProblem& env, const PartialChain& prefix, std::size_t n,
                                     const StreamKey& key) {
  return env_complete(env, env.tree, prefix, n, key);
}

double env_success_probability(const EnvProblem& env, const PartialChain& prefix) {
  require_problem(env, prefix);
  return exact_success_probability(env.tree, env_locate(env, prefix.steps));
}

double env_analytic_er_reward(const EnvProblem& env, const PartialChain& prefix, double eta) {
  return er_softmax_from_probability(env_success_probability(env, prefix), eta);
}

std::string env_to_json(const EnvConfig& config, std::span<const EnvProblem> env) {
  Json doc = Json::object();
  doc["format"] = kEnvFormat;
  doc["config"] = Json{{"num_problems", config.num_problems}, {"depth", config.depth},
                       {"branching", config.branching},       {"rho_min", config.rho_min},
                       {"rho_max", config.rho_max},           {"seed", config.seed}};
  Json problems = Json::array();
  for (const EnvProblem& p : env) {
    problems.push_back(Json{{"id", p.problem.id},
                            {"statement", p.problem.statement},
                            {"gold_answer", p.problem.gold_answer},
                            {"tree", json_io::tree_document(p.tree)}});
  }
  doc["problems"] = std::move(problems);
  return doc.dump(1) + "\n";
}

LoadedEnv env_from_json(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("environment file is not valid JSON: ") + e.what());
  }
  const std::string where = "environment";
  if (!doc.is_object() || json_io::require(doc, "format", where) != kEnvFormat) {
    throw DataError("environment file has an unknown format tag");
  }
  LoadedEnv loaded;
  try {
    if (doc.contains("config")) {
      const Json& c = doc["config"];
      EnvConfig config;
      config.num_problems = c.at("num_problems").get<std::size_t>();
      config.depth = c.at("depth").get<std::size_t>();
      config.branching = c.at("branching").get<std::size_t>();
      config.rho_min = c.at("rho_min").get<double>();
      config.rho_max = c.at("rho_max").get<double>();
      config.seed = c.at("seed").get<std::uint64_t>();
      loaded.config = config;
    }
    const Json& problems = json_io::require(doc, "problems", where);
    for (std::size_t i = 0; i < problems.size(); ++i) {
      const Json& p = problems[i];
      const std::string at = where + " problem " + std::to_string(i);
      Problem problem{p.at("id").get<std::string>(), p.at("statement").get<std::string>(),
                      p.at("gold_answer").get<std::string>()};
      loaded.problems.push_back(
          {std::move(problem), json_io::tree_from_document(json_io::require(p, "tree", at), at)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("environment file is malformed: ") + e.what());
  }
  return loaded;
}

const EnvProblem* find_problem(std::span<const EnvProblem> env, std::string_view id) {
  for (const EnvProblem& p : env) {
    if (p.problem.id == id) return &p;
  }
  return nullptr;
}

std::vector<Problem> env_problems(std::span<const EnvProblem> env) {
  std::vector<Problem> out;
  out.reserve(env.size());
  for (const EnvProblem& p : env) out.push_back(p.problem);
  return out;
}

}  // namespace erprm
