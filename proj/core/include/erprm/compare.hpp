// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "erprm/labeling.hpp"
#include "erprm/scoring.hpp"
#include "erprm/synthetic_env.hpp"
#include "erprm/verification.hpp"

namespace erprm {

struct CompareConfig {
  /// m, n, eta, seed and parallelism of the shared labeling run; its
  /// `methods` field is ignored in favour of `methods` below.
  PipelineConfig pipeline;
  std::vector<LabelMethod> methods{LabelMethod::er_softmax, LabelMethod::soft, LabelMethod::hard};
  /// One ER row per grid value instead of a single row at pipeline.eta.
  bool eta_sweep = false;
  std::vector<double> eta_grid = kEtaGrid;
  std::vector<std::size_t> ns{1, 4, 16, 64};
  std::size_t pool_size = 64;
  std::size_t replicates = 5;
  TrainHyperparams train;
  /// Adds the ground-truth outcome verifier as a ceiling row.
  bool include_oracle = true;

  void validate() const;
};

struct CompareRow {
  std::string name;
  std::optional<LabelMethod> method;  // empty for the oracle row
  std::optional<double> eta;
  BonResult bon;
  double final_loss = 0.0;
};

struct CompareTable {
  std::vector<std::size_t> ns;
  std::vector<CompareRow> rows;
  /// Mean over problems of 1 - (1 - p)^N with p the exact success probability.
  std::vector<double> analytic;
  RunCounts labeling;
  bool eta_sweep = false;

  /// "method,N,mean,std" with one line per row and N.
  std::string to_csv() const;
  /// Rows by N with mean +- std cells; in sweep mode also an N by eta table.
  std::string to_text() const;

  const CompareRow* find(std::string_view name) const;
  /// ER row with the highest mean at `n`; nullptr when there is none.
  const CompareRow* best_er_row(std::size_t n) const;
};

std::string compare_row_name(LabelMethod method, std::optional<double> eta);

/// Labels the environment once (shared rollouts), trains one tabular scorer
/// per method (ER targets at each eta are recomputed from the stored counts),
/// then runs bon_evaluate on fresh candidate pools of the same problems.
CompareTable compare_label_methods(std::span<const EnvProblem> env, const CompareConfig& config);

/// Mean over problems of 1 - (1 - p)^N, p the root success probability.
double analytic_bon_accuracy(std::span<const EnvProblem> env, std::size_t n);

}  // namespace erprm
