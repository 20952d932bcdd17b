// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "erprm/chain_model.hpp"
#include "erprm/reward_core.hpp"
#include "erprm/synthetic_env.hpp"

namespace erprm {

/// Assigns a score to every prefix a^[1..L] of a chain (process scorers) or a
/// single score to the whole response (outcome scorers).
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual std::vector<double> step_scores(const Problem& problem, const Chain& chain) const = 0;
  /// Outcome scorers return one score from step_scores.
  virtual bool outcome_only() const { return false; }
};

// ---------------------------------------------------------------- training

enum class LossKind { cross_entropy, squared_error };
std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

/// Identifies the state a^[l] of a problem; equal prefixes share a key.
std::string state_key(std::string_view problem_id, std::span<const std::string> steps);

struct TrainingExample {
  std::size_t state;
  double target;
};

struct TrainingSet {
  std::vector<std::string> states;  // sorted
  std::vector<TrainingExample> examples;
  LabelMethod method = LabelMethod::er_softmax;
  std::optional<double> eta;
};

/// One example per annotated step (or per record for the orm method). ER
/// targets are recomputed from each step's (k, n) at `eta`, so any eta works
/// on a dataset labeled at another one. DataError when no example results.
TrainingSet build_training_set(std::span<const LabeledRecord> records, LabelMethod method,
                               std::optional<double> eta = std::nullopt);

/// Sum over examples of BCE(sigmoid(w_s), t) or (sigmoid(w_s) - t)^2.
double training_loss(const TrainingSet& set, std::span<const double> logits, LossKind loss);
/// d training_loss / d w_s for every state.
std::vector<double> training_gradient(const TrainingSet& set, std::span<const double> logits, LossKind loss);

struct TrainHyperparams {
  LossKind loss = LossKind::cross_entropy;
  std::size_t epochs = 1000;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;

  /// epochs >= 1, learning_rate > 0; UsageError otherwise.
  void validate() const;
};

struct TrainingMetadata {
  LossKind loss = LossKind::cross_entropy;
  std::size_t epochs = 0;
  double learning_rate = 0.0;
  std::uint64_t seed = 0;
  LabelMethod method = LabelMethod::er_softmax;
  std::optional<double> eta;
  std::size_t examples = 0;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // loss before each epoch, then the final loss
};

/// Logistic scorer with one log-odds weight per seen state. Unseen states
/// fall back to `bias`, the log-odds of the mean training target.
class TabularScorer final : public StepScorer {
 public:
  TabularScorer() = default;
  TabularScorer(std::map<std::string, double, std::less<>> weights, double bias, bool outcome_only,
                TrainingMetadata metadata);

  std::vector<double> step_scores(const Problem& problem, const Chain& chain) const override;
  bool outcome_only() const override { return outcome_only_; }

  /// sigmoid of the state's weight, or of the bias when unseen.
  double score_state(std::string_view key) const;
  const std::map<std::string, double, std::less<>>& weights() const noexcept { return weights_; }
  double bias() const noexcept { return bias_; }
  const TrainingMetadata& metadata() const noexcept { return metadata_; }

  std::string to_json() const;
  static TabularScorer from_json(std::string_view text);

 private:
  std::map<std::string, double, std::less<>> weights_;
  double bias_ = 0.0;
  bool outcome_only_ = false;
  TrainingMetadata metadata_;
};

/// Full-batch gradient descent from a small seeded initialization.
TabularScorer train_scorer(const TrainingSet& set, const TrainHyperparams& hyper);
TabularScorer train_scorer(std::span<const LabeledRecord> records, LabelMethod method, std::optional<double> eta,
                           const TrainHyperparams& hyper);

double sigmoid(double x) noexcept;

// ---------------------------------------------------------------- other scorers

/// Exact scores from the synthetic environment.
class OracleScorer final : public StepScorer {
 public:
  enum class Mode {
    er_reward,            // env_analytic_er_reward at eta, per step
    success_probability,  // env_success_probability, per step
    outcome,              // 1 when the final answer is correct, else 0
  };

  OracleScorer(std::span<const EnvProblem> env, Mode mode, double eta = 2.0, bool negate = false);

  std::vector<double> step_scores(const Problem& problem, const Chain& chain) const override;
  bool outcome_only() const override { return mode_ == Mode::outcome; }

 private:
  std::unordered_map<std::string, const EnvProblem*> index_;
  Mode mode_;
  double eta_;
  bool negate_;
};

/// Wraps a callable; handy for fixed scores in tests.
class FunctionScorer final : public StepScorer {
 public:
  using Fn = std::function<std::vector<double>(const Problem&, const Chain&)>;
  explicit FunctionScorer(Fn fn, bool outcome_only = false) : fn_(std::move(fn)), outcome_only_(outcome_only) {}
  std::vector<double> step_scores(const Problem& problem, const Chain& chain) const override {
    return fn_(problem, chain);
  }
  bool outcome_only() const override { return outcome_only_; }

 private:
  Fn fn_;
  bool outcome_only_;
};

// ---------------------------------------------------------------- evaluation

struct Candidate {
  Chain chain;
  bool parse_failure = false;

  static Candidate from_chain(Chain chain) { return {std::move(chain), false}; }
  /// Parses `text`; failures become a flagged candidate with no steps.
  static Candidate from_text(const std::string& problem_id, std::string_view text, const StepFormat& format = {});
};

struct ResponseScore {
  double value = 0.0;
  bool parse_failure = false;
};

/// Minimum step score; the single score for outcome scorers; 0 with the
/// flag set for unparseable candidates.
ResponseScore score_response(const StepScorer& scorer, const Problem& problem, const Candidate& candidate);
double min_step_score(std::span<const double> step_scores);

/// Index of the first maximum of `scores`.
std::size_t first_argmax(std::span<const double> scores);

/// Argmax of score_response over the first N candidates, lowest index on
/// ties. PreconditionError when N is 0 or exceeds the pool.
std::size_t best_of_n(const StepScorer& scorer, const Problem& problem, std::span<const Candidate> candidates,
                      std::size_t n);

bool candidate_correct(const Problem& problem, const Candidate& candidate);

struct EvalItem {
  Problem problem;
  std::vector<Candidate> candidates;
};

struct BonResult {
  std::vector<std::size_t> ns;
  std::vector<double> mean;    // per N
  std::vector<double> stdev;   // per N, sample std over replicates
  std::vector<std::vector<double>> replicate_accuracy;  // [N][replicate]
  /// Selected pool index, [N][replicate][problem].
  std::vector<std::vector<std::vector<std::size_t>>> selected;
  std::size_t replicates = 0;
  std::size_t problems = 0;
  /// Expected accuracy of picking a pool member uniformly at random.
  double random_baseline = 0.0;
  /// Accuracy at max N below some smaller N by more than one pooled std.
  bool reward_hacking = false;
};

/// For replicate r, each problem's pool is shuffled with the stream
/// (seed, "bon", r, problem id); best_of_n then sees the first N of that
/// order, so the subsets are nested in N and shared by every scorer
/// evaluated with the same seed.
BonResult bon_evaluate(const StepScorer& scorer, std::span<const EvalItem> items, std::span<const std::size_t> ns,
                       std::size_t replicates, std::uint64_t seed);

/// Pool of `pool_size` pi0 samples per problem from the stream (seed, "pool", id).
std::vector<EvalItem> sample_env_pools(std::span<const EnvProblem> env, std::size_t pool_size, std::uint64_t seed);

/// {"id","statement","gold_answer","candidates":[text,...]} per line.
std::vector<EvalItem> read_pools_jsonl(std::istream& in, const StepFormat& format = {});
std::string pool_to_jsonl_line(const EvalItem& item, const StepFormat& format = {});

struct RaftSelection {
  Problem problem;
  Chain chain;
  std::size_t index = 0;
  double score = 0.0;
  std::size_t pool_size = 0;
  std::optional<double> runner_up_score;
};

struct RaftResult {
  std::vector<RaftSelection> selections;
  std::vector<std::string> skipped;  // problems with empty pools
};

/// Top-scoring candidate per problem; correctness plays no part.
RaftResult raft_select(std::span<const EvalItem> items, const StepScorer& scorer);
std::string raft_to_jsonl_line(const RaftSelection& selection);

}  // namespace erprm
