// SPDX-License-Identifier: Apache-2.0

#include "erprm/rng.hpp"

#include <cmath>
#include <numeric>

#include "erprm/errors.hpp"

namespace erprm {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

StreamKey::StreamKey(std::uint64_t seed) : state_(splitmix64(seed)) {}

StreamKey StreamKey::child(std::uint64_t component) const {
  StreamKey k(0);
  k.state_ = splitmix64(state_ ^ splitmix64(component ^ 0x6A09E667F3BCC909ULL));
  return k;
}

StreamKey StreamKey::child(std::string_view label) const { return child(fnv1a64(label)); }

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw PreconditionError("uniform_index over an empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double Rng::exponential() { return -std::log1p(-uniform()); }

std::size_t Rng::categorical(std::span<const double> weights) {
  if (weights.empty()) throw PreconditionError("categorical over no outcomes");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw PreconditionError("categorical weights sum to zero");
  const double u = uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

std::vector<double> sample_flat_dirichlet(Rng& rng, std::size_t k) {
  std::vector<double> out(k);
  double total = 0.0;
  for (auto& x : out) {
    // Guard against an exact zero so every branch keeps positive mass.
    do {
      x = rng.exponential();
    } while (x <= 0.0);
    total += x;
  }
  for (auto& x : out) x /= total;
  return out;
}

std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
  }
  return perm;
}

}  // namespace erprm
