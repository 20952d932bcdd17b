// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "erprm/chain_model.hpp"
#include "erprm/http_client.hpp"
#include "erprm/reward_core.hpp"
#include "erprm/rng.hpp"
#include "erprm/synthetic_env.hpp"

namespace erprm {

/// Source of continuations. Implementations must be safe to call from
/// several threads at once.
class Completer {
 public:
  virtual ~Completer() = default;

  /// Identifier stored in provenance and the run manifest.
  virtual std::string id() const = 0;
  /// True when continuations come from the optimal (updated) policy rather
  /// than the initial one; only then is the soft-min label meaningful.
  virtual bool samples_optimal_policy() const { return false; }
  /// `n` full chains continuing `prefix`; draw i depends only on key.child(i)
  /// for deterministic completers.
  virtual std::vector<Completion> complete(const Problem& problem, const PartialChain& prefix,
                                           std::size_t n, const StreamKey& key) const = 0;
};

/// Samples from the synthetic environment, under pi0 by default or under the
/// optimal chain policy at `optimal_eta`.
class SyntheticCompleter final : public Completer {
 public:
  explicit SyntheticCompleter(std::vector<EnvProblem> env, std::optional<double> optimal_eta = std::nullopt);

  std::string id() const override;
  bool samples_optimal_policy() const override { return optimal_eta_.has_value(); }
  std::vector<Completion> complete(const Problem& problem, const PartialChain& prefix, std::size_t n,
                                   const StreamKey& key) const override;

  const std::vector<EnvProblem>& env() const noexcept { return env_; }

 private:
  std::size_t index_of(const std::string& problem_id) const;

  std::vector<EnvProblem> env_;
  std::vector<ReasoningTree> policies_;  // only with optimal_eta
  std::optional<double> optimal_eta_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct CompleterSpec {
  enum class Kind { synthetic, http };
  Kind kind = Kind::synthetic;
  double temperature = 0.7;
  std::size_t max_steps = 32;
  std::size_t max_tokens = 1024;
  std::string base_url;  // http only
  std::string model;     // http only

  /// temperature >= 0 and max_steps >= 1; UsageError otherwise.
  void validate() const;
};

/// Chat-completions backed completer. The prompt is the problem statement
/// followed by the rendered prefix; the reply is appended to the prefix and
/// parsed with parse_chain_text. Unparseable replies, or replies longer than
/// max_steps, come back incorrect with parse_failure set.
class HttpCompleter final : public Completer {
 public:
  HttpCompleter(EndpointSpec endpoint, CompleterSpec settings, StepFormat format = {});

  std::string id() const override;
  std::vector<Completion> complete(const Problem& problem, const PartialChain& prefix, std::size_t n,
                                   const StreamKey& key) const override;

  /// Exposed for tests.
  std::string prompt_for(const Problem& problem, const PartialChain& prefix) const;
  Completion interpret(const Problem& problem, const PartialChain& prefix, const std::string& reply) const;

 private:
  EndpointSpec endpoint_;
  CompleterSpec settings_;
  StepFormat format_;
};

struct PipelineConfig {
  std::size_t solutions_per_problem = 15;
  std::size_t completions_per_step = 16;
  double eta = 2.0;
  std::vector<LabelMethod> methods{LabelMethod::er_softmax, LabelMethod::soft, LabelMethod::hard};
  std::uint64_t seed = 0;
  std::size_t parallelism = 1;

  /// m >= 1, n >= 1, eta > 0, parallelism >= 1; UsageError otherwise.
  void validate() const;
};

/// Checks `methods` against the completer: er_softmin requires an
/// optimal-policy completer. Returns the sorted, de-duplicated list.
std::vector<LabelMethod> resolve_methods(std::span<const LabelMethod> methods, const Completer& completer);

/// Validates n >= 1 and forwards to the completer.
std::vector<Completion> complete(const Completer& completer, const Problem& problem, const PartialChain& prefix,
                                 std::size_t n, const StreamKey& key);

/// m full chains from the empty prefix. Unparseable ones are kept with
/// parse_failure set.
std::vector<Completion> generate_solutions(const Completer& completer, const Problem& problem, std::size_t m,
                                           const StreamKey& key);

/// Stream keys used by the pipeline.
StreamKey solutions_key(std::uint64_t seed, const std::string& problem_id);
StreamKey rollouts_key(std::uint64_t seed, const std::string& problem_id, std::size_t solution, std::size_t step);

/// Labels every step of `chain` from n fresh continuations per prefix.
LabeledRecord annotate_chain(const Completer& completer, const Problem& problem, const Chain& chain,
                             const PipelineConfig& config, std::size_t solution_index);

struct RunCounts {
  std::size_t problems = 0;
  std::size_t solutions = 0;
  std::size_t solution_parse_failures = 0;
  std::size_t records = 0;
  std::size_t step_annotations = 0;
  std::size_t rollouts = 0;
  std::size_t parse_failures = 0;

  bool operator==(const RunCounts&) const = default;
};

/// Counts derivable from the records themselves.
RunCounts tally(std::span<const LabeledRecord> records);

struct LabeledDataset {
  std::vector<LabeledRecord> records;
  RunCounts counts;
};

/// In-memory pipeline: generate_solutions then annotate_chain for every
/// parseable solution, in input order.
LabeledDataset label_dataset(std::span<const Problem> problems, const Completer& completer,
                             const PipelineConfig& config);

struct PipelineOutput {
  std::string path;                           // labeled JSON Lines
  bool resume = false;
  std::optional<std::string> math_shepherd;   // optional text export
  MathShepherdOptions math_shepherd_options;
};

struct PipelineSummary {
  RunCounts counts;
  std::size_t resumed_records = 0;
  std::string manifest_path;
};

/// Streams records to output.path, keeps a manifest at "<path>.manifest.json"
/// and the sampled solutions at "<path>.solutions.jsonl". With resume set,
/// completed records are kept and only the remainder is sampled; a manifest
/// whose configuration differs is refused with DataError.
PipelineSummary run_pipeline(std::span<const Problem> problems, const Completer& completer,
                             const PipelineConfig& config, const PipelineOutput& output);

std::string manifest_path_for(const std::string& output_path);
std::string solutions_path_for(const std::string& output_path);

}  // namespace erprm
