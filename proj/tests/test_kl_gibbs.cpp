// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "erprm/errors.hpp"
#include "erprm/kl_gibbs.hpp"
#include "erprm/rng.hpp"

using namespace erprm;

TEST_CASE("kl_objective on a two-atom instance") {
  const auto p0 = FiniteDistribution::uniform({"a", "b"});
  const RewardTable r{{"a", 1.0}, {"b", 0.0}};
  const FiniteDistribution p({"a", "b"}, {0.9, 0.1});
  CHECK(kl_objective(p, p0, r, Eta(1.0)) == doctest::Approx(-0.53193579283150293009).epsilon(1e-14));

  const GibbsResult g = gibbs_tilt(p0, r, Eta(1.0));
  CHECK(g.tilted.prob("a") == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)));
  CHECK(kl_objective(g.tilted, p0, r, Eta(1.0)) == doctest::Approx(-0.62011450695827752463).epsilon(1e-14));
  CHECK(g.log_normalizer == doctest::Approx(std::log((std::exp(1.0) + 1.0) / 2.0)));
}

TEST_CASE("Gibbs tilt minimizes the objective on random instances") {
  Rng rng(StreamKey(3));
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = 2 + rng.uniform_index(5);
    std::vector<std::string> atoms;
    RewardTable r;
    for (std::size_t i = 0; i < k; ++i) {
      atoms.push_back(std::string(1, static_cast<char>('a' + i)));
      r[atoms.back()] = rng.uniform();
    }
    const FiniteDistribution p0(atoms, sample_flat_dirichlet(rng, k));
    const double eta = rng.uniform_real(0.1, 10.0);
    const GibbsResult g = gibbs_tilt(p0, r, Eta(eta));
    const double best = kl_objective(g.tilted, p0, r, Eta(eta));
    CHECK(best == doctest::Approx(-g.log_normalizer / eta).epsilon(1e-12));
    for (int j = 0; j < 20; ++j) {
      const FiniteDistribution other(atoms, sample_flat_dirichlet(rng, k));
      CHECK(kl_objective(other, p0, r, Eta(eta)) >= best - 1e-12);
    }
  }
}

TEST_CASE("zero-mass atoms stay at zero and KL handles support") {
  const FiniteDistribution p0({"a", "b", "c"}, {0.5, 0.5, 0.0});
  const RewardTable r{{"a", 0.0}, {"b", 1.0}, {"c", 1.0}};
  const GibbsResult g = gibbs_tilt(p0, r, Eta(5.0));
  CHECK(g.tilted.prob("c") == 0.0);
  const FiniteDistribution q({"a", "b", "c"}, {0.0, 0.0, 1.0});
  CHECK_THROWS_AS(kl_divergence(q, p0), PreconditionError);
  CHECK(kl_divergence(p0, p0) == 0.0);
}

TEST_CASE("distributions are validated") {
  CHECK_THROWS_AS(FiniteDistribution({"a", "b"}, {0.5, 0.6}), PreconditionError);
  CHECK_THROWS_AS(FiniteDistribution({"a", "a"}, {0.5, 0.5}), PreconditionError);
  CHECK_THROWS_AS(FiniteDistribution({"a"}, {-0.1}), PreconditionError);
  CHECK_THROWS_AS(FiniteDistribution({"a", "b"}, {1.0}), PreconditionError);
  const auto u = FiniteDistribution::uniform({"x", "y", "z", "w"});
  CHECK(u.prob("y") == 0.25);
  CHECK_FALSE(u.index_of("q").has_value());
}
