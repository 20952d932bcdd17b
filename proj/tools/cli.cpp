// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "erprm/compare.hpp"
#include "erprm/errors.hpp"
#include "erprm/labeling.hpp"
#include "erprm/scoring.hpp"
#include "erprm/synthetic_env.hpp"
#include "erprm/verification.hpp"
#include "json.hpp"

namespace erprm::cli {

namespace {

// ------------------------------------------------------------------ helpers

/// JSON config files: nested objects map to subcommand sections.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool write_description,
                        std::string prefix) const override {
    return CLI::ConfigTOML().to_config(app, default_also, write_description, std::move(prefix));
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(input);
    } catch (const nlohmann::json::parse_error& e) {
      throw CLI::ConversionError("config file is not valid JSON: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    walk(doc, {}, items);
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  }

  static void walk(const nlohmann::json& obj, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) {
        auto nested = parents;
        nested.push_back(key);
        walk(value, std::move(nested), out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else if (!value.is_null()) {
        item.inputs.push_back(scalar(value));
      }
      out.push_back(std::move(item));
    }
  }
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& path, const std::string& text) { write_file_atomically(path, text); }

std::vector<LabelMethod> parse_methods(const std::vector<std::string>& names) {
  std::vector<LabelMethod> out;
  for (const auto& n : names) out.push_back(parse_label_method(n));
  return out;
}

struct EnvOptions {
  std::string file;
  EnvConfig config;
  std::optional<std::uint64_t> env_seed;
};

void add_env_options(CLI::App* sub, EnvOptions& o, bool with_file = true) {
  if (with_file) sub->add_option("--env", o.file, "Environment file written by 'simulate' (overrides the shape flags)");
  sub->add_option("--num-problems", o.config.num_problems, "Problems in a freshly built environment");
  sub->add_option("--depth", o.config.depth, "Steps per chain")->check(CLI::PositiveNumber);
  sub->add_option("--branching", o.config.branching, "Branches per step")->check(CLI::Range(2, 1 << 20));
  sub->add_option("--rho-min", o.config.rho_min, "Lower end of the per-problem leaf success rate");
  sub->add_option("--rho-max", o.config.rho_max, "Upper end of the per-problem leaf success rate");
  sub->add_option("--env-seed", o.env_seed, "Seed of the environment (defaults to --seed)");
}

std::vector<EnvProblem> load_env(const EnvOptions& o, std::uint64_t seed) {
  if (!o.file.empty()) return env_from_json(read_text(o.file)).problems;
  EnvConfig config = o.config;
  config.seed = o.env_seed.value_or(seed);
  try {
    return build_env(config);
  } catch (const PreconditionError& e) {
    throw UsageError(e.what());
  }
}

struct ScorerOptions {
  std::string scorer_file;
  std::string oracle;
  bool negate = false;
  double oracle_eta = 2.0;
};

void add_scorer_options(CLI::App* sub, ScorerOptions& o) {
  auto* file = sub->add_option("--scorer", o.scorer_file, "Trained scorer file from 'train-scorer'");
  auto* oracle = sub->add_option("--oracle", o.oracle, "Exact scorer on the environment: er, success or outcome")
                     ->check(CLI::IsMember({"er", "success", "outcome"}));
  file->excludes(oracle);
  sub->add_flag("--negate", o.negate, "Score 1 - s with the oracle scorer");
  sub->add_option("--oracle-eta", o.oracle_eta, "Eta of the er oracle");
}

std::unique_ptr<StepScorer> load_scorer(const ScorerOptions& o, const std::vector<EnvProblem>& env) {
  if (!o.scorer_file.empty()) {
    return std::make_unique<TabularScorer>(TabularScorer::from_json(read_text(o.scorer_file)));
  }
  if (o.oracle.empty()) throw UsageError("pass --scorer FILE or --oracle MODE");
  if (env.empty()) throw UsageError("--oracle needs an environment (--env or the shape flags)");
  const auto mode = o.oracle == "er"        ? OracleScorer::Mode::er_reward
                    : o.oracle == "success" ? OracleScorer::Mode::success_probability
                                            : OracleScorer::Mode::outcome;
  return std::make_unique<OracleScorer>(env, mode, o.oracle_eta, o.negate);
}

std::vector<std::size_t> positive(const std::vector<std::size_t>& values, const char* what) {
  for (auto v : values) {
    if (v == 0) throw UsageError(std::string(what) + " values must be >= 1");
  }
  return values;
}

void print_config(std::ostream& out, const CLI::App* sub) {
  out << "# resolved configuration\n[" << sub->get_name() << "]\n" << sub->config_to_str(true, false) << "\n";
}

std::string bon_table(const BonResult& r) {
  std::ostringstream s;
  char buf[128];
  s << "N      mean     std\n";
  for (std::size_t j = 0; j < r.ns.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%-6zu %.4f   %.4f\n", r.ns[j], r.mean[j], r.stdev[j]);
    s << buf;
  }
  std::snprintf(buf, sizeof buf, "random baseline %.4f\nreward hacking  %s\n", r.random_baseline,
                r.reward_hacking ? "yes" : "no");
  s << buf;
  return s.str();
}

// ------------------------------------------------------------------ commands

struct LabelOptions {
  EnvOptions env;
  std::string problems_file;
  std::string completer = "synthetic";
  bool optimal_policy = false;
  std::string base_url;
  std::string model;
  CompleterSpec spec;
  int retries = 5;
  int retry_base_ms = 1000;
  std::string out;
  PipelineConfig pipeline;
  std::vector<std::string> methods{"er", "soft", "hard"};
  std::uint64_t seed = 0;
  bool resume = false;
  std::string math_shepherd;
  MathShepherdOptions ms;
  std::string ms_method = "er_softmax";
};

struct TrainOptions {
  std::string data;
  std::string out;
  std::string label_method = "er_softmax";
  std::optional<double> eta;
  std::string loss = "cross_entropy";
  TrainHyperparams hyper;
};

struct BonOptions {
  EnvOptions env;
  ScorerOptions scorer;
  std::string pools;
  std::size_t pool_size = 64;
  std::vector<std::size_t> ns{1, 4, 16, 64};
  std::size_t replicates = 5;
  std::uint64_t seed = 0;
  std::string out;
  std::string traces;
};

struct RaftOptions {
  EnvOptions env;
  ScorerOptions scorer;
  std::string pools;
  std::size_t pool_size = 16;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct CompareOptions {
  EnvOptions env;
  CompareConfig config;
  std::vector<std::string> methods{"er", "soft", "hard"};
  std::string loss = "cross_entropy";
  std::uint64_t seed = 0;
  bool no_oracle = false;
  std::string out = "compare.csv";
  std::string table;
};

struct SimulateOptions {
  EnvOptions env;
  std::uint64_t seed = 0;
  std::string out;
  std::string problems_out;
  std::string pools_out;
  std::size_t pool_size = 64;
};

struct VerifyOptions {
  OracleSuiteConfig config;
};

int run_label(LabelOptions& o, const CLI::App* sub, std::ostream& out) {
  o.pipeline.methods = parse_methods(o.methods);
  o.pipeline.seed = o.seed;
  o.pipeline.validate();
  o.ms.method = parse_label_method(o.ms_method);
  print_config(out, sub);

  std::unique_ptr<Completer> completer;
  std::vector<Problem> problems;
  if (o.completer == "synthetic") {
    auto env = load_env(o.env, o.seed);
    problems = env_problems(env);
    std::optional<double> optimal;
    if (o.optimal_policy) optimal = o.pipeline.eta;
    completer = std::make_unique<SyntheticCompleter>(std::move(env), optimal);
  } else {
    if (o.problems_file.empty()) throw UsageError("--completer http needs --problems FILE");
    if (o.optimal_policy) throw UsageError("--optimal-policy applies to the synthetic completer only");
    std::ifstream in(o.problems_file, std::ios::binary);
    if (!in) throw DataError("cannot read '" + o.problems_file + "'");
    problems = read_problems_jsonl(in);
    o.spec.kind = CompleterSpec::Kind::http;
    EndpointSpec endpoint = endpoint_from_environment(o.model, o.base_url);
    endpoint.retry.max_attempts = o.retries;
    endpoint.retry.base_delay = std::chrono::milliseconds(o.retry_base_ms);
    completer = std::make_unique<HttpCompleter>(std::move(endpoint), o.spec, StepFormat{});
  }

  PipelineOutput output;
  output.path = o.out;
  output.resume = o.resume;
  if (!o.math_shepherd.empty()) output.math_shepherd = o.math_shepherd;
  output.math_shepherd_options = o.ms;
  const PipelineSummary s = run_pipeline(problems, *completer, o.pipeline, output);
  out << "records " << s.counts.records << " (resumed " << s.resumed_records << ")\n"
      << "step annotations " << s.counts.step_annotations << "\n"
      << "rollouts " << s.counts.rollouts << "\n"
      << "parse failures " << s.counts.parse_failures << " rollouts, " << s.counts.solution_parse_failures
      << " solutions\n"
      << "manifest " << s.manifest_path << "\n";
  return kOk;
}

int run_train(TrainOptions& o, const CLI::App* sub, std::ostream& out) {
  print_config(out, sub);
  o.hyper.loss = parse_loss_kind(o.loss);
  const LabelMethod method = parse_label_method(o.label_method);
  std::ifstream in(o.data, std::ios::binary);
  if (!in) throw DataError("cannot read '" + o.data + "'");
  const auto records = read_labeled_jsonl(in);
  if (records.empty()) throw DataError("'" + o.data + "' holds no records");
  const TabularScorer scorer = train_scorer(records, method, o.eta, o.hyper);
  write_text(o.out, scorer.to_json());
  char buf[160];
  std::snprintf(buf, sizeof buf, "states %zu  examples %zu  final loss %.6f\n", scorer.weights().size(),
                scorer.metadata().examples, scorer.metadata().final_loss);
  out << buf;
  return kOk;
}

std::vector<EvalItem> load_pools(const std::string& pools, const EnvOptions& env_options,
                                 const std::vector<EnvProblem>& env, std::size_t pool_size, std::uint64_t seed) {
  (void)env_options;
  if (!pools.empty()) {
    std::ifstream in(pools, std::ios::binary);
    if (!in) throw DataError("cannot read '" + pools + "'");
    return read_pools_jsonl(in);
  }
  return sample_env_pools(env, pool_size, seed);
}

bool wants_env(const EnvOptions& o, const ScorerOptions& s, const std::string& pools) {
  return !o.file.empty() || !s.oracle.empty() || pools.empty();
}

int run_bon(BonOptions& o, const CLI::App* sub, std::ostream& out) {
  positive(o.ns, "--ns");
  print_config(out, sub);
  const std::vector<EnvProblem> env =
      wants_env(o.env, o.scorer, o.pools) ? load_env(o.env, o.seed) : std::vector<EnvProblem>{};
  const auto scorer = load_scorer(o.scorer, env);
  const auto items = load_pools(o.pools, o.env, env, o.pool_size, o.seed);
  const BonResult r = bon_evaluate(*scorer, items, o.ns, o.replicates, o.seed);
  out << bon_table(r);
  if (!o.out.empty()) {
    std::string csv = "N,mean,std\n";
    char buf[96];
    for (std::size_t j = 0; j < r.ns.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f\n", r.ns[j], r.mean[j], r.stdev[j]);
      csv += buf;
    }
    write_text(o.out, csv);
  }
  if (!o.traces.empty()) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::object();
    doc["ns"] = r.ns;
    doc["replicates"] = r.replicates;
    doc["selected"] = r.selected;
    write_text(o.traces, doc.dump() + "\n");
  }
  return kOk;
}

int run_raft(RaftOptions& o, const CLI::App* sub, std::ostream& out) {
  const bool env_needed = wants_env(o.env, o.scorer, o.pools);
  if (env_needed && o.pools.empty() && !o.seed) throw UsageError("--seed is required when pools are sampled");
  print_config(out, sub);
  const std::uint64_t seed = o.seed.value_or(0);
  const std::vector<EnvProblem> env = env_needed ? load_env(o.env, seed) : std::vector<EnvProblem>{};
  const auto scorer = load_scorer(o.scorer, env);
  const auto items = load_pools(o.pools, o.env, env, o.pool_size, seed);
  const RaftResult r = raft_select(items, *scorer);
  std::string lines;
  for (const auto& s : r.selections) lines += raft_to_jsonl_line(s) + "\n";
  write_text(o.out, lines);
  nlohmann::ordered_json manifest = nlohmann::ordered_json::object();
  manifest["selected"] = r.selections.size();
  manifest["skipped"] = r.skipped;
  write_text(o.out + ".manifest.json", manifest.dump(2) + "\n");
  out << "selected " << r.selections.size() << "  skipped " << r.skipped.size() << "\n";
  return kOk;
}

int run_compare(CompareOptions& o, const CLI::App* sub, std::ostream& out) {
  o.config.methods = parse_methods(o.methods);
  o.config.pipeline.seed = o.seed;
  o.config.train.loss = parse_loss_kind(o.loss);
  o.config.include_oracle = !o.no_oracle;
  positive(o.config.ns, "--ns");
  o.config.validate();
  print_config(out, sub);
  const auto env = load_env(o.env, o.seed);
  const CompareTable table = compare_label_methods(env, o.config);
  write_text(o.out, table.to_csv());
  const std::string text = table.to_text();
  if (!o.table.empty()) write_text(o.table, text);
  out << text << "csv " << o.out << "\n";
  return kOk;
}

int run_simulate(SimulateOptions& o, const CLI::App* sub, std::ostream& out) {
  print_config(out, sub);
  EnvConfig config = o.env.config;
  config.seed = o.env.env_seed.value_or(o.seed);
  const auto env = load_env(o.env, o.seed);
  write_text(o.out, env_to_json(config, env));
  if (!o.problems_out.empty()) {
    std::string lines;
    for (const auto& p : env) lines += problem_to_jsonl_line(p.problem) + "\n";
    write_text(o.problems_out, lines);
  }
  if (!o.pools_out.empty()) {
    std::string lines;
    for (const auto& item : sample_env_pools(env, o.pool_size, o.seed)) lines += pool_to_jsonl_line(item) + "\n";
    write_text(o.pools_out, lines);
  }
  out << "problems " << env.size() << "  written " << o.out << "\n";
  return kOk;
}

int run_verify(VerifyOptions& o, const CLI::App* sub, std::ostream& out) {
  print_config(out, sub);
  const OracleSuiteReport report = run_oracle_suite(o.config);
  out << report.to_text();
  return report.passed() ? kOk : kVerifyFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Process reward labeling, scoring and evaluation", "erprm"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML or JSON file mirroring the flags; flags override it");
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    const std::string& a = args[i];
    const std::string& v = args[i + 1];
    if (a == "--config" && v.size() > 5 && v.compare(v.size() - 5, 5, ".json") == 0) {
      app.config_formatter(std::make_shared<JsonConfig>());
    }
  }

  LabelOptions label;
  auto* label_cmd = app.add_subcommand("label", "Sample solutions and rollouts and write labeled JSON Lines");
  add_env_options(label_cmd, label.env);
  label_cmd->add_option("--problems", label.problems_file, "Problems JSON Lines (http completer)");
  label_cmd->add_option("--completer", label.completer, "synthetic or http")
      ->check(CLI::IsMember({"synthetic", "http"}));
  label_cmd->add_flag("--optimal-policy", label.optimal_policy,
                      "Synthetic rollouts follow the optimal policy at --eta (enables er_softmin)");
  label_cmd->add_option("--base-url", label.base_url, "Endpoint base URL (else ERPRM_BASE_URL)");
  label_cmd->add_option("--model", label.model, "Model name sent to the endpoint");
  label_cmd->add_option("--temperature", label.spec.temperature, "Sampling temperature");
  label_cmd->add_option("--max-steps", label.spec.max_steps, "Longest accepted continuation, in steps");
  label_cmd->add_option("--max-tokens", label.spec.max_tokens, "max_tokens of each request");
  label_cmd->add_option("--retries", label.retries, "Attempts per request");
  label_cmd->add_option("--retry-base-ms", label.retry_base_ms, "First backoff delay in milliseconds");
  label_cmd->add_option("--out", label.out, "Labeled JSON Lines output")->required();
  label_cmd->add_option("--solutions-per-problem,--m", label.pipeline.solutions_per_problem, "Solutions per problem");
  label_cmd->add_option("--completions-per-step,--n", label.pipeline.completions_per_step, "Rollouts per step");
  label_cmd->add_option("--eta", label.pipeline.eta, "Regularization strength of the ER label");
  label_cmd->add_option("--methods", label.methods, "Labels to emit: er, er_softmin, soft, hard")->delimiter(',');
  label_cmd->add_option("--seed", label.seed, "Master seed")->required();
  label_cmd->add_option("--parallelism", label.pipeline.parallelism, "Concurrent completer calls");
  label_cmd->add_flag("--resume", label.resume, "Continue an interrupted run with the same configuration");
  label_cmd->add_option("--math-shepherd", label.math_shepherd, "Also write a Math-Shepherd style text export");
  label_cmd->add_option("--step-token", label.ms.step_token, "Step tag of the text export");
  label_cmd->add_option("--threshold", label.ms.threshold, "Labels at or above this render as '+'");
  label_cmd->add_option("--math-shepherd-method", label.ms_method, "Label rendered in the text export");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train-scorer", "Fit a tabular logistic step scorer");
  train_cmd->add_option("--data", train.data, "Labeled JSON Lines")->required();
  train_cmd->add_option("--out", train.out, "Scorer JSON output")->required();
  train_cmd->add_option("--label-method", train.label_method, "Target label: er, er_softmin, soft, hard, orm");
  train_cmd->add_option("--eta", train.eta, "Recompute ER targets at this eta from the stored counts");
  train_cmd->add_option("--loss", train.loss, "cross_entropy or squared_error");
  train_cmd->add_option("--epochs", train.hyper.epochs, "Full-batch gradient steps");
  train_cmd->add_option("--lr", train.hyper.learning_rate, "Learning rate");
  train_cmd->add_option("--seed", train.hyper.seed, "Initialization seed");

  BonOptions bon;
  auto* bon_cmd = app.add_subcommand("bon-eval", "Best-of-N accuracy over replicate subsamples");
  add_env_options(bon_cmd, bon.env);
  add_scorer_options(bon_cmd, bon.scorer);
  bon_cmd->add_option("--pools", bon.pools, "Candidate pools JSON Lines (else sampled from the environment)");
  bon_cmd->add_option("--pool-size", bon.pool_size, "Candidates per problem when sampling pools");
  bon_cmd->add_option("--ns", bon.ns, "N values")->delimiter(',');
  bon_cmd->add_option("--replicates", bon.replicates, "Replicate subsamples");
  bon_cmd->add_option("--seed", bon.seed, "Seed of pools and subsamples")->required();
  bon_cmd->add_option("--out", bon.out, "CSV output");
  bon_cmd->add_option("--traces", bon.traces, "JSON file with the selected indices");

  RaftOptions raft;
  auto* raft_cmd = app.add_subcommand("raft-select", "Keep the top-scoring candidate per problem");
  add_env_options(raft_cmd, raft.env);
  add_scorer_options(raft_cmd, raft.scorer);
  raft_cmd->add_option("--pools", raft.pools, "Candidate pools JSON Lines (else sampled from the environment)");
  raft_cmd->add_option("--pool-size", raft.pool_size, "Candidates per problem when sampling pools");
  raft_cmd->add_option("--seed", raft.seed, "Seed of sampled pools");
  raft_cmd->add_option("--out", raft.out, "Selected responses JSON Lines")->required();

  CompareOptions cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Train one scorer per label method and compare best-of-N");
  add_env_options(cmp_cmd, cmp.env);
  cmp_cmd->add_option("--methods", cmp.methods, "Label methods: er, soft, hard, orm")->delimiter(',');
  cmp_cmd->add_option("--eta", cmp.config.pipeline.eta, "Eta of the ER row and the labeling run");
  cmp_cmd->add_flag("--eta-sweep", cmp.config.eta_sweep, "One ER row per eta of the grid");
  cmp_cmd->add_option("--eta-grid", cmp.config.eta_grid, "Eta values of the sweep")->delimiter(',');
  cmp_cmd->add_option("--solutions-per-problem,--m", cmp.config.pipeline.solutions_per_problem,
                      "Solutions per problem");
  cmp_cmd->add_option("--completions-per-step,--n", cmp.config.pipeline.completions_per_step, "Rollouts per step");
  cmp_cmd->add_option("--ns", cmp.config.ns, "N values")->delimiter(',');
  cmp_cmd->add_option("--pool-size", cmp.config.pool_size, "Held-out candidates per problem");
  cmp_cmd->add_option("--replicates", cmp.config.replicates, "Replicate subsamples");
  cmp_cmd->add_option("--loss", cmp.loss, "cross_entropy or squared_error");
  cmp_cmd->add_option("--epochs", cmp.config.train.epochs, "Training epochs per scorer");
  cmp_cmd->add_option("--lr", cmp.config.train.learning_rate, "Learning rate");
  cmp_cmd->add_option("--seed", cmp.seed, "Master seed")->required();
  cmp_cmd->add_option("--parallelism", cmp.config.pipeline.parallelism, "Concurrent completer calls");
  cmp_cmd->add_flag("--no-oracle", cmp.no_oracle, "Leave out the ground-truth verifier row");
  cmp_cmd->add_option("--out", cmp.out, "CSV output");
  cmp_cmd->add_option("--table", cmp.table, "Also write the text table here");

  SimulateOptions sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Build a synthetic environment and export it");
  add_env_options(sim_cmd, sim.env, false);
  sim_cmd->add_option("--seed", sim.seed, "Environment seed")->required();
  sim_cmd->add_option("--out", sim.out, "Environment JSON output")->required();
  sim_cmd->add_option("--problems-out", sim.problems_out, "Problems JSON Lines output");
  sim_cmd->add_option("--pools-out", sim.pools_out, "Candidate pools JSON Lines output");
  sim_cmd->add_option("--pool-size", sim.pool_size, "Candidates per problem in --pools-out");

  VerifyOptions verify;
  auto* verify_cmd = app.add_subcommand("verify", "Check the exact identities on random trees");
  verify_cmd->add_option("--seed", verify.config.seed, "Seed of the random trees")->required();
  verify_cmd->add_option("--trees", verify.config.trees, "Number of trees");
  verify_cmd->add_option("--tolerance", verify.config.tolerance, "Largest accepted residual");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*label_cmd) return run_label(label, label_cmd, out);
    if (*train_cmd) return run_train(train, train_cmd, out);
    if (*bon_cmd) return run_bon(bon, bon_cmd, out);
    if (*raft_cmd) return run_raft(raft, raft_cmd, out);
    if (*cmp_cmd) return run_compare(cmp, cmp_cmd, out);
    if (*sim_cmd) return run_simulate(sim, sim_cmd, out);
    if (*verify_cmd) return run_verify(verify, verify_cmd, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const TransportError& e) {
    err << "transport error: " << e.what() << "\n";
    for (const auto& a : e.attempts()) err << "  " << a << "\n";
    return kTransport;
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace erprm::cli
