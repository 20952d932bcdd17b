// SPDX-License-Identifier: Apache-2.0

#include "erprm/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "erprm/errors.hpp"
#include "erprm/synthetic_env.hpp"

namespace erprm {

double OracleSuiteReport::worst() const {
  return std::max({backward_recursion, marginal_consistency, softmin_equivalence, reparameterization,
                   oracle_agreement});
}

std::string OracleSuiteReport::to_text() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "trees: %zu  nodes: %zu  tolerance: %.1e\n"
                "max residual backward_recursion    %.3e\n"
                "max residual marginal_consistency  %.3e\n"
                "max residual softmin_equivalence   %.3e\n"
                "max residual reparameterization    %.3e\n"
                "max residual oracle_agreement      %.3e\n"
                "%s\n",
                trees, nodes, tolerance, backward_recursion, marginal_consistency, softmin_equivalence,
                reparameterization, oracle_agreement, passed() ? "PASS" : "FAIL");
  return buf;
}

OracleSuiteReport run_oracle_suite(const OracleSuiteConfig& config) {
  if (config.etas.empty()) throw PreconditionError("oracle suite needs at least one eta");
  OracleSuiteReport report;
  report.tolerance = config.tolerance;
  const StreamKey root = StreamKey(config.seed).child("oracle_suite");

  for (std::size_t t = 0; t < config.trees; ++t) {
    const ReasoningTree tree = random_tree(config.tree, root.child(t).value());
    report.nodes += tree.size();
    for (double eta_value : config.etas) {
      const Eta eta(eta_value);
      const auto values = soft_values(tree, eta);
      const ReasoningTree optimal = optimal_chain_policy(tree, eta);
      for (NodeId id = 0; id < tree.size(); ++id) {
        const double exact = exact_partial_reward(tree, id, eta);
        report.backward_recursion =
            std::max(report.backward_recursion, std::fabs(values[id] / eta_value - exact));
        if (tree.node(id).is_leaf()) continue;
        report.softmin_equivalence = std::max(report.softmin_equivalence,
                                              softmin_equivalence_residual(tree, optimal, id, eta));
        report.reparameterization = std::max(report.reparameterization,
                                             reparameterization_residual(tree, optimal, id, eta));
      }
      report.marginal_consistency =
          std::max(report.marginal_consistency, marginal_consistency_residual(tree, eta));
    }
  }
  report.trees = config.trees;

  // Closed form over the environment's own sampling interface.
  EnvConfig env_config;
  env_config.num_problems = config.trees;
  env_config.depth = 4;
  env_config.branching = 3;
  env_config.seed = config.seed;
  for (const EnvProblem& env : build_env(env_config)) {
    for (double eta_value : config.etas) {
      for (NodeId id = 0; id < env.tree.size(); ++id) {
        const PartialChain prefix{env.problem.id, env_steps_to(env, id)};
        const double analytic = env_analytic_er_reward(env, prefix, eta_value);
        const double exact = exact_partial_reward(env.tree, id, Eta(eta_value));
        report.oracle_agreement = std::max(report.oracle_agreement, std::fabs(analytic - exact));
      }
    }
  }
  return report;
}

}  // namespace erprm
