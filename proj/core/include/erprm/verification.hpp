// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "erprm/kl_gibbs.hpp"
#include "erprm/reasoning_tree.hpp"

namespace erprm {

/// The eta values swept by the oracle suite and the label comparison.
inline const std::vector<double> kEtaGrid{0.1, 1.0, 2.0, 5.0, 8.0, 10.0, 15.0};

struct OracleSuiteConfig {
  std::uint64_t seed = 0;
  std::size_t trees = 100;
  RandomTreeConfig tree{1, 5, 2, 4, 0.1, 0.9};
  std::vector<double> etas = kEtaGrid;
  double tolerance = kEnumerationTolerance;
};

/// Largest residual of each identity over every tree, node and eta.
struct OracleSuiteReport {
  std::size_t trees = 0;
  std::size_t nodes = 0;
  double backward_recursion = 0.0;    // soft_values vs leaf enumeration
  double marginal_consistency = 0.0;
  double softmin_equivalence = 0.0;
  double reparameterization = 0.0;
  double oracle_agreement = 0.0;      // env closed form vs leaf enumeration
  double tolerance = 0.0;

  double worst() const;
  bool passed() const { return worst() < tolerance; }
  std::string to_text() const;
};

OracleSuiteReport run_oracle_suite(const OracleSuiteConfig& config);

}  // namespace erprm
