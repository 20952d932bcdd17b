// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"
#include "erprm/errors.hpp"
#include "erprm/reasoning_tree.hpp"

using namespace erprm;

namespace {
// Root with two branches; left has leaves {1, 0}, right has leaves {0, 0}.
ReasoningTree small_tree() {
  return ReasoningTree(TreeSpec::node({
      {0.6, TreeSpec::node({{0.5, TreeSpec::leaf(1)}, {0.5, TreeSpec::leaf(0)}})},
      {0.4, TreeSpec::node({{0.25, TreeSpec::leaf(0)}, {0.75, TreeSpec::leaf(0)}})},
  }));
}
}  // namespace

TEST_CASE("exact partial reward on a hand-built tree") {
  const ReasoningTree t = small_tree();
  const std::vector<std::size_t> left{0};
  const double eta = 2.0;
  // Root: success probability 0.3.
  CHECK(exact_success_probability(t, t.root()) == doctest::Approx(0.3));
  CHECK(exact_partial_reward(t, t.root(), Eta(eta)) ==
        doctest::Approx(std::log1p(0.3 * std::expm1(eta)) / eta).epsilon(1e-14));
  CHECK(exact_partial_reward(t, left, Eta(eta)) == doctest::Approx(std::log1p(0.5 * std::expm1(eta)) / eta));
  CHECK(exact_partial_reward(t, std::vector<std::size_t>{1}, Eta(eta)) == doctest::Approx(0.0));
  CHECK(t.depth() == 2);
  CHECK(t.path_of(t.find(left)) == left);
}

TEST_CASE("soft values follow backward log-sum-exp") {
  const ReasoningTree t = small_tree();
  const auto v = soft_values(t, Eta(3.0));
  CHECK(v[t.root()] / 3.0 == doctest::Approx(exact_partial_reward(t, t.root(), Eta(3.0))).epsilon(1e-14));
}

TEST_CASE("optimal chain policy is normalized and tilts toward success") {
  const ReasoningTree t = small_tree();
  const ReasoningTree opt = optimal_chain_policy(t, Eta(2.0));
  for (NodeId id = 0; id < opt.size(); ++id) {
    const auto& n = opt.node(id);
    if (n.is_leaf()) continue;
    double total = 0.0;
    for (NodeId c : n.children) total += opt.node(c).prob;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  }
  const NodeId left = t.find(std::vector<std::size_t>{0});
  CHECK(opt.node(left).prob > t.node(left).prob);
}

TEST_CASE("identity residuals vanish on random trees") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ReasoningTree t = random_tree(RandomTreeConfig{1, 4, 2, 3, 0.1, 0.9}, seed);
    for (double eta : {0.1, 2.0, 15.0}) {
      CHECK(marginal_consistency_residual(t, Eta(eta)) < 1e-10);
      for (NodeId id = 0; id < t.size(); ++id) {
        CHECK(softmin_equivalence_residual(t, id, Eta(eta)) < 1e-10);
        CHECK(reparameterization_residual(t, id, Eta(eta)) < 1e-10);
      }
    }
  }
}

TEST_CASE("random trees are reproducible and serializable") {
  const RandomTreeConfig config{2, 4, 2, 4, 0.2, 0.8};
  const ReasoningTree a = random_tree(config, 9);
  const ReasoningTree b = random_tree(config, 9);
  CHECK(tree_to_json(a) == tree_to_json(b));
  const ReasoningTree c = tree_from_json(tree_to_json(a));
  CHECK(tree_to_json(c) == tree_to_json(a));
  CHECK(a.depth() >= 2);
  CHECK(a.depth() <= 4);
}

TEST_CASE("malformed trees are rejected") {
  CHECK_THROWS_AS(ReasoningTree(TreeSpec::node({{0.5, TreeSpec::leaf(1)}, {0.6, TreeSpec::leaf(0)}})),
                  PreconditionError);
  CHECK_THROWS_AS(ReasoningTree(TreeSpec::node({{1.0, TreeSpec::leaf(2)}})), PreconditionError);
  CHECK_THROWS_AS(ReasoningTree(TreeSpec::node(
                      {{0.5, TreeSpec::leaf(1)}, {0.5, TreeSpec::node({{1.0, TreeSpec::leaf(0)}})}})),
                  PreconditionError);
  const ReasoningTree t = small_tree();
  CHECK_THROWS_AS(t.find(std::vector<std::size_t>{5}), PreconditionError);
  CHECK_THROWS(tree_from_json("{\"not\":\"a tree\"}"));
}
