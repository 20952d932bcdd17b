// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "erprm/rng.hpp"

using namespace erprm;

TEST_CASE("stream keys are deterministic and distinct") {
  const StreamKey a = StreamKey(7).child("rollouts").child(3);
  const StreamKey b = StreamKey(7).child("rollouts").child(3);
  CHECK(a == b);
  CHECK_FALSE(a == StreamKey(7).child("rollouts").child(4));
  CHECK_FALSE(a == StreamKey(8).child("rollouts").child(3));
  CHECK_FALSE(StreamKey(7).child("x").child("y") == StreamKey(7).child("y").child("x"));
  Rng r1(a), r2(b);
  for (int i = 0; i < 10; ++i) CHECK(r1.next_u64() == r2.next_u64());
}

TEST_CASE("hashes match published reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
}

TEST_CASE("sampling helpers stay in range") {
  Rng rng(StreamKey(1));
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.uniform_index(7) < 7);
  }
  const auto w = sample_flat_dirichlet(rng, 5);
  CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
  auto perm = random_permutation(rng, 20);
  std::sort(perm.begin(), perm.end());
  for (std::size_t i = 0; i < 20; ++i) CHECK(perm[i] == i);
  const std::vector<double> weights{0.0, 1.0, 0.0};
  for (int i = 0; i < 50; ++i) CHECK(rng.categorical(weights) == 1);
}
