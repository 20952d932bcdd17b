// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "erprm/errors.hpp"
#include "erprm/labeling.hpp"
#include "erprm/synthetic_env.hpp"

namespace fs = std::filesystem;
using namespace erprm;

namespace {

std::vector<EnvProblem> small_env(std::size_t problems = 5) {
  EnvConfig c;
  c.num_problems = problems;
  c.seed = 21;
  return build_env(c);
}

PipelineConfig small_pipeline() {
  PipelineConfig c;
  c.solutions_per_problem = 3;
  c.completions_per_step = 8;
  c.seed = 5;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("annotations count rollouts and store every requested label") {
  const auto env = small_env();
  const SyntheticCompleter completer(env);
  const auto problems = env_problems(env);
  const LabeledDataset data = label_dataset(problems, completer, small_pipeline());
  CHECK(data.records.size() == 15);
  CHECK(data.counts.records == 15);
  CHECK(data.counts.rollouts == 15 * 3 * 8);
  for (const LabeledRecord& r : data.records) {
    CHECK(r.annotations.size() == r.chain.steps.size());
    CHECK(r.orm_label == (answers_match(r.chain.final_answer, r.problem.gold_answer) ? 1 : 0));
    for (const AnnotatedStep& a : r.annotations) {
      CHECK(a.total == 8);
      CHECK(a.label(LabelMethod::soft).value() == doctest::Approx(a.correct / 8.0));
      CHECK(a.label(LabelMethod::hard).value() == (a.correct > 0 ? 1.0 : 0.0));
      CHECK(a.label(LabelMethod::er_softmax).value() == doctest::Approx(er_softmax_from_counts(a.correct, 8, 2.0)));
    }
    // The final step's rollouts are the chain itself.
    const AnnotatedStep& last = r.annotations.back();
    CHECK(last.correct == (r.orm_label ? 8u : 0u));
  }
}

TEST_CASE("soft-min labels need the optimal-policy completer") {
  const auto env = small_env(2);
  PipelineConfig c = small_pipeline();
  c.methods = {LabelMethod::er_softmin};
  const auto problems = env_problems(env);
  const SyntheticCompleter plain(env);
  CHECK_THROWS_AS(label_dataset(problems, plain, c), UsageError);
  const SyntheticCompleter optimal(env, 2.0);
  const LabeledDataset data = label_dataset(problems, optimal, c);
  for (const auto& r : data.records) {
    for (const auto& a : r.annotations) {
      CHECK(a.label(LabelMethod::er_softmin).value() ==
            doctest::Approx(er_softmin_from_counts(a.correct, a.total, 2.0)));
    }
  }
}

TEST_CASE("output is identical across parallelism settings") {
  const auto env = small_env();
  const SyntheticCompleter completer(env);
  const auto problems = env_problems(env);
  PipelineConfig c = small_pipeline();
  const std::string serial = write_labeled_jsonl(label_dataset(problems, completer, c).records);
  c.parallelism = 3;
  CHECK(write_labeled_jsonl(label_dataset(problems, completer, c).records) == serial);
}

TEST_CASE("pipeline writes a manifest and resumes an interrupted run") {
  TempDir dir("erprm_labeling_resume");
  const auto env = small_env();
  const SyntheticCompleter completer(env);
  const auto problems = env_problems(env);
  const PipelineConfig c = small_pipeline();

  PipelineOutput full;
  full.path = (dir.path / "full.jsonl").string();
  full.math_shepherd = (dir.path / "full.txt").string();
  const PipelineSummary s = run_pipeline(problems, completer, c, full);
  CHECK(s.counts.records == 15);
  CHECK(fs::exists(manifest_path_for(full.path)));
  CHECK(slurp(manifest_path_for(full.path)).find("\"status\": \"complete\"") != std::string::npos);
  CHECK(fs::file_size(*full.math_shepherd) > 0);
  const std::string expected = slurp(full.path);

  // Simulate a crash: keep 4 lines plus half of the fifth.
  PipelineOutput partial;
  partial.path = (dir.path / "partial.jsonl").string();
  run_pipeline(problems, completer, c, partial);
  std::size_t cut = 0;
  for (int i = 0; i < 4; ++i) cut = expected.find('\n', cut) + 1;
  {
    std::ofstream out(partial.path, std::ios::binary | std::ios::trunc);
    out << expected.substr(0, cut + 20);
  }
  partial.resume = true;
  const PipelineSummary resumed = run_pipeline(problems, completer, c, partial);
  CHECK(resumed.resumed_records == 4);
  CHECK(slurp(partial.path) == expected);

  // A different configuration refuses to append.
  PipelineConfig other = c;
  other.eta = 5.0;
  CHECK_THROWS_WITH_AS(run_pipeline(problems, completer, other, partial), doctest::Contains("refusing"), DataError);
}

TEST_CASE("pipeline configuration is validated") {
  PipelineConfig c;
  c.completions_per_step = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = PipelineConfig{};
  c.eta = -1.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = PipelineConfig{};
  c.methods.clear();
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("tally sums counts over records") {
  const auto env = small_env(2);
  const SyntheticCompleter completer(env);
  const auto problems = env_problems(env);
  const LabeledDataset data = label_dataset(problems, completer, small_pipeline());
  CHECK(tally(data.records).step_annotations == data.counts.step_annotations);
  CHECK(tally(data.records).records == data.records.size());
}
