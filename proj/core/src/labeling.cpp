// SPDX-License-Identifier: Apache-2.0

#include "erprm/labeling.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "erprm/errors.hpp"
#include "json_io.hpp"
#include "parallel.hpp"

namespace erprm {

using json_io::Json;

namespace {

constexpr std::string_view kManifestFormat = "erprm-manifest-1";
constexpr std::string_view kSolutionsFormat = "erprm-solutions-1";

std::string format_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- completers

SyntheticCompleter::SyntheticCompleter(std::vector<EnvProblem> env, std::optional<double> optimal_eta)
    : env_(std::move(env)), optimal_eta_(optimal_eta) {
  for (std::size_t i = 0; i < env_.size(); ++i) {
    if (!index_.emplace(env_[i].problem.id, i).second) {
      throw PreconditionError("duplicate problem id '" + env_[i].problem.id + "' in environment");
    }
  }
  if (optimal_eta_) {
    const Eta eta(*optimal_eta_);
    policies_.reserve(env_.size());
    for (const EnvProblem& p : env_) policies_.push_back(optimal_chain_policy(p.tree, eta));
  }
}

std::string SyntheticCompleter::id() const {
  return optimal_eta_ ? "synthetic-optimal(eta=" + format_g(*optimal_eta_) + ")" : "synthetic";
}

std::size_t SyntheticCompleter::index_of(const std::string& problem_id) const {
  auto it = index_.find(problem_id);
  if (it == index_.end()) {
    throw PreconditionError("problem '" + problem_id + "' is not part of the synthetic environment");
  }
  return it->second;
}

std::vector<Completion> SyntheticCompleter::complete(const Problem& problem, const PartialChain& prefix,
                                                     std::size_t n, const StreamKey& key) const {
  const std::size_t i = index_of(problem.id);
  const ReasoningTree& policy = optimal_eta_ ? policies_[i] : env_[i].tree;
  return env_complete(env_[i], policy, prefix, n, key);
}

void CompleterSpec::validate() const {
  if (!(temperature >= 0.0)) throw UsageError("temperature must be >= 0");
  if (max_steps < 1) throw UsageError("max completion steps must be >= 1");
  if (kind == Kind::http && max_tokens < 1) throw UsageError("max tokens must be >= 1");
}

HttpCompleter::HttpCompleter(EndpointSpec endpoint, CompleterSpec settings, StepFormat format)
    : endpoint_(std::move(endpoint)), settings_(std::move(settings)), format_(std::move(format)) {
  settings_.validate();
}

std::string HttpCompleter::id() const { return "http:" + endpoint_.model; }

std::string HttpCompleter::prompt_for(const Problem& problem, const PartialChain& prefix) const {
  const std::string next = std::to_string(prefix.depth() + 1);
  std::string prompt = "Solve the following problem step by step. Write each step on its own line as \"" +
                       format_.label + " k: ...\" and end the last step with \"The answer is <answer>\".\n\n" +
                       "Problem: " + problem.statement + "\n";
  if (prefix.depth() == 0) return prompt;
  prompt += "\nThe solution so far:\n" + render_chain_text(prefix.steps, format_) +
            "\n\nContinue from " + format_.label + " " + next + ". Do not repeat earlier steps.";
  return prompt;
}

Completion HttpCompleter::interpret(const Problem& problem, const PartialChain& prefix,
                                    const std::string& reply) const {
  Completion c;
  std::string text = render_chain_text(prefix.steps, format_);
  if (!text.empty()) text.push_back('\n');
  text += reply;
  try {
    Chain chain = parse_chain_text(text, problem.id, format_);
    if (chain.steps.size() < prefix.depth() || chain.steps.size() - prefix.depth() > settings_.max_steps) {
      throw DataError("continuation length outside the allowed range");
    }
    c.steps = std::move(chain.steps);
    c.final_answer = std::move(chain.final_answer);
    c.correct = answers_match(c.final_answer, problem.gold_answer);
  } catch (const DataError&) {
    c.steps = prefix.steps;
    c.final_answer = std::string(kNoAnswer);
    c.correct = false;
    c.parse_failure = true;
  }
  return c;
}

std::vector<Completion> HttpCompleter::complete(const Problem& problem, const PartialChain& prefix,
                                                std::size_t n, const StreamKey&) const {
  if (prefix.depth() > 0 && has_answer_marker(prefix.steps.back())) {
    // The prefix already states its answer; every continuation is the prefix itself.
    Completion c;
    c.steps = prefix.steps;
    c.final_answer = extract_final_answer(prefix.steps.back());
    c.correct = answers_match(c.final_answer, problem.gold_answer);
    return std::vector<Completion>(n, c);
  }
  const auto replies = http_request_completions(endpoint_, prompt_for(problem, prefix), n,
                                                settings_.temperature, settings_.max_tokens);
  std::vector<Completion> out;
  out.reserve(replies.size());
  for (const auto& reply : replies) out.push_back(interpret(problem, prefix, reply));
  return out;
}

// ---------------------------------------------------------------- single units

void PipelineConfig::validate() const {
  if (solutions_per_problem < 1) throw UsageError("solutions per problem must be >= 1");
  if (completions_per_step < 1) throw UsageError("completions per step must be >= 1");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw UsageError("eta must be a positive finite number");
  if (parallelism < 1) throw UsageError("parallelism must be >= 1");
  if (methods.empty()) throw UsageError("at least one label method is required");
}

std::vector<LabelMethod> resolve_methods(std::span<const LabelMethod> methods, const Completer& completer) {
  std::vector<LabelMethod> out(methods.begin(), methods.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  for (LabelMethod m : out) {
    if (m == LabelMethod::er_softmin && !completer.samples_optimal_policy()) {
      throw UsageError("er_softmin needs rollouts from the optimal policy; completer '" + completer.id() +
                       "' samples the initial policy");
    }
  }
  return out;
}

std::vector<Completion> complete(const Completer& completer, const Problem& problem, const PartialChain& prefix,
                                 std::size_t n, const StreamKey& key) {
  if (n == 0) throw PreconditionError("completions per prefix must be >= 1");
  auto out = completer.complete(problem, prefix, n, key);
  if (out.size() != n) {
    throw DataError("completer '" + completer.id() + "' returned " + std::to_string(out.size()) +
                    " completions, expected " + std::to_string(n));
  }
  return out;
}

std::vector<Completion> generate_solutions(const Completer& completer, const Problem& problem, std::size_t m,
                                           const StreamKey& key) {
  if (m == 0) throw PreconditionError("solutions per problem must be >= 1");
  return complete(completer, problem, PartialChain{problem.id, {}}, m, key);
}

StreamKey solutions_key(std::uint64_t seed, const std::string& problem_id) {
  return StreamKey(seed).child("solutions").child(problem_id);
}

StreamKey rollouts_key(std::uint64_t seed, const std::string& problem_id, std::size_t solution,
                       std::size_t step) {
  return StreamKey(seed).child("rollouts").child(problem_id).child(solution).child(step);
}

LabeledRecord annotate_chain(const Completer& completer, const Problem& problem, const Chain& chain,
                             const PipelineConfig& config, std::size_t solution_index) {
  config.validate();
  if (chain.steps.empty()) throw PreconditionError("cannot annotate an empty chain");
  const auto methods = resolve_methods(config.methods, completer);
  const std::size_t n = config.completions_per_step;
  const Eta eta(config.eta);

  LabeledRecord record;
  record.problem = problem;
  record.chain = chain;
  for (std::size_t l = 1; l <= chain.steps.size(); ++l) {
    const auto rollouts = complete(completer, problem, prefix_of(chain, l), n,
                                   rollouts_key(config.seed, problem.id, solution_index, l));
    AnnotatedStep step;
    step.index = l;
    step.total = n;
    for (const Completion& c : rollouts) {
      if (c.correct) ++step.correct;
      if (c.parse_failure) ++step.parse_failures;
    }
    const auto samples = OutcomeSamples::from_counts(step.correct, step.total);
    for (LabelMethod m : methods) {
      if (m == LabelMethod::orm) continue;
      step.set_label(m, aggregate(samples, m, needs_eta(m) ? std::optional<Eta>(eta) : std::nullopt).value);
    }
    record.annotations.push_back(std::move(step));
  }
  record.orm_label = answers_match(chain.final_answer, problem.gold_answer) ? 1 : 0;
  record.provenance = {completer.id(), config.eta, n, config.seed, solution_index};
  return record;
}

RunCounts tally(std::span<const LabeledRecord> records) {
  RunCounts c;
  for (const LabeledRecord& r : records) {
    ++c.records;
    c.step_annotations += r.annotations.size();
    for (const AnnotatedStep& s : r.annotations) {
      c.rollouts += s.total;
      c.parse_failures += s.parse_failures;
    }
  }
  return c;
}

// ---------------------------------------------------------------- whole runs

namespace {

struct Unit {
  std::size_t problem;
  std::size_t solution;
  const Chain* chain;
};

struct SolutionPool {
  std::vector<std::vector<Completion>> per_problem;
  std::vector<std::vector<Chain>> chains;  // parsed solutions, aligned with per_problem
};

void add_counts(RunCounts& total, const RunCounts& part) {
  total.records += part.records;
  total.step_annotations += part.step_annotations;
  total.rollouts += part.rollouts;
  total.parse_failures += part.parse_failures;
}

void finish_pool(SolutionPool& pool, std::span<const Problem> problems) {
  pool.chains.assign(problems.size(), {});
  for (std::size_t p = 0; p < problems.size(); ++p) {
    for (const Completion& c : pool.per_problem[p]) {
      if (c.parse_failure || c.steps.empty()) {
        pool.chains[p].push_back(Chain{problems[p].id, {}, std::string(kNoAnswer)});
      } else {
        pool.chains[p].push_back(make_chain(problems[p].id, c.steps));
      }
    }
  }
}

SolutionPool sample_solutions(std::span<const Problem> problems, const Completer& completer,
                              const PipelineConfig& config) {
  SolutionPool pool;
  pool.per_problem.resize(problems.size());
  detail::ordered_parallel_for(
      problems.size(), config.parallelism,
      [&](std::size_t p) {
        return generate_solutions(completer, problems[p], config.solutions_per_problem,
                                  solutions_key(config.seed, problems[p].id));
      },
      [&](std::size_t p, std::vector<Completion> solutions) { pool.per_problem[p] = std::move(solutions); });
  finish_pool(pool, problems);
  return pool;
}

std::vector<Unit> units_of(const SolutionPool& pool) {
  std::vector<Unit> units;
  for (std::size_t p = 0; p < pool.per_problem.size(); ++p) {
    for (std::size_t j = 0; j < pool.per_problem[p].size(); ++j) {
      if (!pool.per_problem[p][j].parse_failure) units.push_back({p, j, &pool.chains[p][j]});
    }
  }
  return units;
}

RunCounts pool_counts(const SolutionPool& pool) {
  RunCounts c;
  c.problems = pool.per_problem.size();
  for (const auto& solutions : pool.per_problem) {
    c.solutions += solutions.size();
    for (const Completion& s : solutions) {
      if (s.parse_failure) ++c.solution_parse_failures;
    }
  }
  return c;
}

template <typename Sink>
void annotate_units(std::span<const Problem> problems, std::span<const Unit> units, const Completer& completer,
                    const PipelineConfig& config, Sink&& sink) {
  detail::ordered_parallel_for(
      units.size(), config.parallelism,
      [&](std::size_t i) {
        const Unit& u = units[i];
        return annotate_chain(completer, problems[u.problem], *u.chain, config, u.solution);
      },
      sink);
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

Json manifest_config(std::span<const Problem> problems, const Completer& completer, const PipelineConfig& config,
                     std::span<const LabelMethod> methods) {
  std::string digest_input;
  for (const Problem& p : problems) digest_input += problem_to_jsonl_line(p) + "\n";
  Json names = Json::array();
  for (LabelMethod m : methods) names.push_back(to_string(m));
  return Json{{"completer", completer.id()},
              {"solutions_per_problem", config.solutions_per_problem},
              {"completions_per_step", config.completions_per_step},
              {"eta", config.eta},
              {"methods", std::move(names)},
              {"seed", config.seed},
              {"problems", problems.size()},
              {"problems_digest", hex64(fnv1a64(digest_input))}};
}

Json counts_json(const RunCounts& c) {
  return Json{{"problems", c.problems},
              {"solutions", c.solutions},
              {"solution_parse_failures", c.solution_parse_failures},
              {"records", c.records},
              {"step_annotations", c.step_annotations},
              {"rollouts", c.rollouts},
              {"parse_failures", c.parse_failures}};
}

void write_manifest(const std::string& path, const Json& config, const std::string& status, const RunCounts& counts) {
  Json doc = Json::object();
  doc["format"] = kManifestFormat;
  doc["status"] = status;
  doc["config"] = config;
  doc["counts"] = counts_json(counts);
  write_file_atomically(path, doc.dump(2) + "\n");
}

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string solutions_document(std::span<const Problem> problems, const SolutionPool& pool) {
  std::string out;
  for (std::size_t p = 0; p < problems.size(); ++p) {
    Json items = Json::array();
    for (const Completion& c : pool.per_problem[p]) {
      items.push_back(Json{{"steps", c.steps}, {"parse_failure", c.parse_failure}});
    }
    Json line = Json::object();
    line["id"] = problems[p].id;
    line["solutions"] = std::move(items);
    line["format"] = kSolutionsFormat;
    out += json_io::dump_line(line) + "\n";
  }
  return out;
}

// nullopt when the file is missing or does not describe exactly these problems.
std::optional<SolutionPool> load_solutions(const std::string& path, std::span<const Problem> problems,
                                           const PipelineConfig& config) {
  auto text = read_file(path);
  if (!text) return std::nullopt;
  SolutionPool pool;
  std::istringstream in(*text);
  std::string line;
  try {
    while (std::getline(in, line)) {
      const Json doc = Json::parse(line);
      const std::size_t p = pool.per_problem.size();
      if (p >= problems.size() || doc.at("id") != problems[p].id || doc.at("format") != kSolutionsFormat) {
        return std::nullopt;
      }
      std::vector<Completion> solutions;
      for (const Json& item : doc.at("solutions")) {
        Completion c;
        c.steps = item.at("steps").get<std::vector<std::string>>();
        c.parse_failure = item.at("parse_failure").get<bool>();
        if (!c.parse_failure) {
          c.final_answer = extract_final_answer(c.steps.back());
          c.correct = answers_match(c.final_answer, problems[p].gold_answer);
        }
        solutions.push_back(std::move(c));
      }
      if (solutions.size() != config.solutions_per_problem) return std::nullopt;
      pool.per_problem.push_back(std::move(solutions));
    }
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (pool.per_problem.size() != problems.size()) return std::nullopt;
  finish_pool(pool, problems);
  return pool;
}

std::string describe_difference(const Json& stored, const Json& current) {
  for (const auto& [key, value] : current.items()) {
    if (!stored.contains(key)) return "'" + key + "' missing from the manifest";
    if (stored[key] != value) {
      return "'" + key + "' is " + stored[key].dump() + " in the manifest but " + value.dump() + " now";
    }
  }
  return "manifest has extra fields";
}

}  // namespace

LabeledDataset label_dataset(std::span<const Problem> problems, const Completer& completer,
                             const PipelineConfig& config) {
  config.validate();
  if (problems.empty()) throw DataError("problem list is empty");
  resolve_methods(config.methods, completer);
  const SolutionPool pool = sample_solutions(problems, completer, config);
  const auto units = units_of(pool);
  LabeledDataset out;
  out.records.reserve(units.size());
  annotate_units(problems, units, completer, config,
                 [&](std::size_t, LabeledRecord r) { out.records.push_back(std::move(r)); });
  out.counts = pool_counts(pool);
  add_counts(out.counts, tally(out.records));
  return out;
}

std::string manifest_path_for(const std::string& output_path) { return output_path + ".manifest.json"; }
std::string solutions_path_for(const std::string& output_path) { return output_path + ".solutions.jsonl"; }

PipelineSummary run_pipeline(std::span<const Problem> problems, const Completer& completer,
                             const PipelineConfig& config, const PipelineOutput& output) {
  config.validate();
  if (problems.empty()) throw DataError("problem list is empty");
  if (output.path.empty()) throw UsageError("no output path given");
  const auto methods = resolve_methods(config.methods, completer);
  const Json run_config = manifest_config(problems, completer, config, methods);

  PipelineSummary summary;
  summary.manifest_path = manifest_path_for(output.path);
  const std::string solutions_path = solutions_path_for(output.path);

  bool resuming = false;
  if (output.resume) {
    if (auto text = read_file(summary.manifest_path)) {
      Json stored;
      try {
        stored = Json::parse(*text);
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError("manifest " + summary.manifest_path + " is not valid JSON: " + e.what());
      }
      if (!stored.is_object() || !stored.contains("config") || stored.value("format", "") != kManifestFormat) {
        throw DataError("manifest " + summary.manifest_path + " is not a run manifest");
      }
      if (stored["config"] != run_config) {
        throw DataError("refusing to mix runs: " + describe_difference(stored["config"], run_config) + " (" +
                        summary.manifest_path + ")");
      }
      resuming = true;
    }
  }

  std::optional<SolutionPool> pool;
  if (resuming) pool = load_solutions(solutions_path, problems, config);
  if (!pool) {
    write_manifest(summary.manifest_path, run_config, "sampling", {});
    pool = sample_solutions(problems, completer, config);
    write_file_atomically(solutions_path, solutions_document(problems, *pool));
    resuming = resuming && std::filesystem::exists(output.path);
  }
  const auto units = units_of(*pool);
  RunCounts counts = pool_counts(*pool);

  // Keep every complete line a resumed run already wrote, after checking it
  // is exactly the record this run would emit at that position.
  std::size_t done = 0;
  std::uintmax_t keep_bytes = 0;
  if (resuming) {
    if (auto text = read_file(output.path)) {
      const std::size_t end = text->rfind('\n');
      const std::string_view complete_part =
          end == std::string::npos ? std::string_view() : std::string_view(*text).substr(0, end + 1);
      const auto existing = read_labeled_jsonl(complete_part);
      if (existing.size() > units.size()) {
        throw DataError("refusing to mix runs: " + output.path + " holds more records than this run produces");
      }
      for (std::size_t i = 0; i < existing.size(); ++i) {
        const Unit& u = units[i];
        const LabeledRecord& r = existing[i];
        if (r.problem.id != problems[u.problem].id || r.provenance.solution_index != u.solution ||
            r.chain.steps != u.chain->steps) {
          throw DataError("refusing to mix runs: record " + std::to_string(i + 1) + " of " + output.path +
                          " does not belong to this run");
        }
      }
      done = existing.size();
      keep_bytes = complete_part.size();
      add_counts(counts, tally(existing));
    }
  }
  summary.resumed_records = done;
  write_manifest(summary.manifest_path, run_config, "labeling", counts);

  {
    std::ofstream touch(output.path, std::ios::binary | std::ios::app);
    if (!touch) throw DataError("cannot open " + output.path + " for writing");
  }
  std::filesystem::resize_file(output.path, keep_bytes);
  std::ofstream out(output.path, std::ios::binary | std::ios::app);
  if (!out) throw DataError("cannot open " + output.path + " for writing");

  const std::span<const Unit> remaining = std::span<const Unit>(units).subspan(done);
  annotate_units(problems, remaining, completer, config, [&](std::size_t, LabeledRecord r) {
    out << to_jsonl_line(r) << '\n';
    out.flush();
    if (!out) throw DataError("failed writing " + output.path);
    add_counts(counts, tally(std::span<const LabeledRecord>(&r, 1)));
  });
  out.close();

  write_manifest(summary.manifest_path, run_config, "complete", counts);
  summary.counts = counts;

  if (output.math_shepherd) {
    std::ifstream in(output.path, std::ios::binary);
    std::string rendered;
    for (const LabeledRecord& r : read_labeled_jsonl(in)) {
      if (!rendered.empty()) rendered += "\n";
      rendered += render_math_shepherd(r, output.math_shepherd_options);
    }
    write_file_atomically(*output.math_shepherd, rendered);
  }
  return summary;
}

}  // namespace erprm
