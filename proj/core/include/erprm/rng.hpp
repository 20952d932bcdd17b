// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace erprm {

/// Hierarchical stream identifier. Each child() mixes one more key component
/// into the 64-bit state, so (seed, problem, solution, step, draw) always maps
/// to the same stream no matter which thread asks for it.
class StreamKey {
 public:
  explicit StreamKey(std::uint64_t seed);

  StreamKey child(std::uint64_t component) const;
  StreamKey child(std::string_view label) const;

  std::uint64_t value() const noexcept { return state_; }
  bool operator==(const StreamKey&) const = default;

 private:
  std::uint64_t state_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// mt19937_64 with portable variate conversions (the std distributions are
/// implementation-defined, which would break byte-identical outputs).
class Rng {
 public:
  explicit Rng(StreamKey key) : engine_(key.value()) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer on [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);
  double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Standard exponential variate.
  double exponential();
  /// Index drawn with probability proportional to weights (non-negative, positive sum).
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
};

/// Dirichlet(1, ..., 1) sample of dimension k (normalized exponentials).
std::vector<double> sample_flat_dirichlet(Rng& rng, std::size_t k);

/// Uniformly random permutation of 0..n-1 (Fisher-Yates).
std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n);

}  // namespace erprm
