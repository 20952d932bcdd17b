// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "erprm/reward_core.hpp"

namespace erprm {

/// Answer assigned when nothing can be extracted. Never matches any gold answer.
inline constexpr std::string_view kNoAnswer = "\xE2\x88\x85";  // U+2205

/// Schema tag written into every labeled record.
inline constexpr std::string_view kLabeledSchemaVersion = "erprm-1";

struct Problem {
  std::string id;
  std::string statement;
  std::string gold_answer;

  bool operator==(const Problem&) const = default;
};

struct Chain {
  std::string problem_id;
  std::vector<std::string> steps;
  std::string final_answer;

  std::size_t length() const noexcept { return steps.size(); }
  bool operator==(const Chain&) const = default;
};

struct PartialChain {
  std::string problem_id;
  std::vector<std::string> steps;

  std::size_t depth() const noexcept { return steps.size(); }
};

/// First `depth` steps of `chain`.
PartialChain prefix_of(const Chain& chain, std::size_t depth);

/// Builds a Chain, deriving final_answer from the last step.
Chain make_chain(std::string problem_id, std::vector<std::string> steps);

struct StepFormat {
  /// Steps are lines beginning "<label> <k>:" with k = 1, 2, ...
  std::string label = "Step";
  /// Without any labeled line, split on blank lines instead.
  bool blank_line_fallback = true;
};

/// Throws DataError naming the byte offset of the first offending position.
Chain parse_chain_text(std::string_view text, std::string problem_id = {},
                       const StepFormat& format = {});

/// "Step 1: ...\nStep 2: ..." - the inverse of parse_chain_text.
std::string render_chain_text(std::span<const std::string> steps, const StepFormat& format = {});

/// Trim, drop '$' delimiters and a \boxed{...} wrapper, strip trailing
/// periods, collapse internal whitespace.
std::string normalize_answer(std::string_view raw);

/// Content after the last "The answer is", else the last \boxed{...}, else the
/// last numeric token, normalized. kNoAnswer when nothing is found.
std::string extract_final_answer(std::string_view last_step);

/// True when `text` contains an explicit final-answer marker.
bool has_answer_marker(std::string_view text);

/// String equality, then numeric equality (integers, decimals, a/b, \frac{a}{b})
/// with 1e-6 relative tolerance. kNoAnswer never matches.
bool answers_match(std::string_view candidate, std::string_view gold);

struct AnnotatedStep {
  std::size_t index = 0;  // 1-based step position l
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t parse_failures = 0;
  std::vector<std::pair<LabelMethod, double>> labels;  // ordered by LabelMethod

  std::optional<double> label(LabelMethod method) const;
  void set_label(LabelMethod method, double value);
};

struct Provenance {
  std::string completer;
  double eta = 0.0;
  std::size_t completions_per_step = 0;
  std::uint64_t seed = 0;
  std::size_t solution_index = 0;
};

struct LabeledRecord {
  Problem problem;
  Chain chain;
  std::vector<AnnotatedStep> annotations;
  int orm_label = 0;
  Provenance provenance;
};

/// Canonical single-line JSON; keys in the order id, statement, gold_answer,
/// steps, annotations, orm_label, provenance, schema_version.
std::string to_jsonl_line(const LabeledRecord& record);
/// `line_number` only feeds error messages.
LabeledRecord from_jsonl_line(std::string_view line, std::size_t line_number);

void write_labeled_jsonl(std::span<const LabeledRecord> records, std::ostream& out);
std::vector<LabeledRecord> read_labeled_jsonl(std::istream& in);
std::string write_labeled_jsonl(std::span<const LabeledRecord> records);
std::vector<LabeledRecord> read_labeled_jsonl(std::string_view text);

/// Problems input: one {"id","statement","gold_answer"} object per line.
std::vector<Problem> read_problems_jsonl(std::istream& in);
std::string problem_to_jsonl_line(const Problem& problem);

struct MathShepherdOptions {
  double threshold = 0.5;
  std::string step_token = "\xD0\xBA\xD0\xB8";  // "ки"
  LabelMethod method = LabelMethod::er_softmax;
  /// Outcome-style rendering: one tag after the final step carrying orm_label.
  bool outcome = false;
};

/// Input block (statement, then every step followed by the step token) and a
/// label line with one '+' / '-' per tag. A label maps to '+' when it is
/// positive and at least the threshold. Throws DataError for unannotated steps.
std::string render_math_shepherd(const LabeledRecord& record, const MathShepherdOptions& options = {});

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomically(const std::string& path, std::string_view contents);

}  // namespace erprm
