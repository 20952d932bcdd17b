// SPDX-License-Identifier: Apache-2.0

#include "erprm/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>

#include "erprm/errors.hpp"
#include "erprm/rng.hpp"
#include "json_io.hpp"

namespace erprm {

using json_io::Json;

namespace {

constexpr std::string_view kScorerFormat = "erprm-scorer-1";
constexpr char kIdSeparator = '\x1f';
constexpr char kStepSeparator = '\x1e';

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

double logit(double p) {
  p = std::clamp(p, 1e-6, 1.0 - 1e-6);
  return std::log(p / (1.0 - p));
}

double example_target(const LabeledRecord& record, const AnnotatedStep& step, LabelMethod method,
                      std::optional<double> eta, std::size_t line) {
  switch (method) {
    case LabelMethod::er_softmax:
    case LabelMethod::er_softmin:
      if (eta) {
        return method == LabelMethod::er_softmax ? er_softmax_from_counts(step.correct, step.total, *eta)
                                                 : er_softmin_from_counts(step.correct, step.total, *eta);
      }
      break;
    case LabelMethod::soft:
      return soft_label_reward(OutcomeSamples::from_counts(step.correct, step.total)).value;
    case LabelMethod::hard:
      return hard_label_reward(OutcomeSamples::from_counts(step.correct, step.total)).value;
    case LabelMethod::orm:
      return record.orm_label;
  }
  if (auto stored = step.label(method)) return *stored;
  throw DataError("record " + std::to_string(line) + " step " + std::to_string(step.index) + " has no '" +
                  std::string(to_string(method)) + "' label; pass an eta to recompute it");
}

}  // namespace

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string_view to_string(LossKind kind) {
  return kind == LossKind::cross_entropy ? "cross_entropy" : "squared_error";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "cross_entropy" || name == "bce") return LossKind::cross_entropy;
  if (name == "squared_error" || name == "mse") return LossKind::squared_error;
  throw UsageError("unknown loss '" + std::string(name) + "' (expected cross_entropy or squared_error)");
}

std::string state_key(std::string_view problem_id, std::span<const std::string> steps) {
  std::string key(problem_id);
  key.push_back(kIdSeparator);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) key.push_back(kStepSeparator);
    key += steps[i];
  }
  return key;
}

TrainingSet build_training_set(std::span<const LabeledRecord> records, LabelMethod method,
                               std::optional<double> eta) {
  if (eta) Eta checked(*eta);
  struct Raw {
    std::string key;
    double target;
  };
  std::vector<Raw> raw;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const LabeledRecord& record = records[r];
    const auto& steps = record.chain.steps;
    if (method == LabelMethod::orm) {
      raw.push_back({state_key(record.problem.id, steps), static_cast<double>(record.orm_label)});
      continue;
    }
    for (const AnnotatedStep& step : record.annotations) {
      if (step.index < 1 || step.index > steps.size()) {
        throw DataError("record " + std::to_string(r + 1) + " has an annotation outside its chain");
      }
      raw.push_back({state_key(record.problem.id, std::span(steps).first(step.index)),
                     example_target(record, step, method, eta, r + 1)});
    }
  }
  if (raw.empty()) throw DataError("training data has no annotated steps");

  TrainingSet set;
  set.method = method;
  set.eta = eta;
  if (!eta && needs_eta(method)) set.eta = records.front().provenance.eta;
  for (const Raw& x : raw) set.states.push_back(x.key);
  std::sort(set.states.begin(), set.states.end());
  set.states.erase(std::unique(set.states.begin(), set.states.end()), set.states.end());
  for (const Raw& x : raw) {
    const auto it = std::lower_bound(set.states.begin(), set.states.end(), x.key);
    set.examples.push_back({static_cast<std::size_t>(it - set.states.begin()), x.target});
  }
  return set;
}

double training_loss(const TrainingSet& set, std::span<const double> logits, LossKind loss) {
  if (logits.size() != set.states.size()) throw PreconditionError("one logit per state required");
  double total = 0.0;
  for (const TrainingExample& e : set.examples) {
    const double w = logits[e.state];
    if (loss == LossKind::cross_entropy) {
      // -t ln sigmoid(w) - (1-t) ln(1 - sigmoid(w))
      total += softplus(w) - e.target * w;
    } else {
      const double d = sigmoid(w) - e.target;
      total += d * d;
    }
  }
  return total;
}

std::vector<double> training_gradient(const TrainingSet& set, std::span<const double> logits, LossKind loss) {
  if (logits.size() != set.states.size()) throw PreconditionError("one logit per state required");
  std::vector<double> grad(logits.size(), 0.0);
  for (const TrainingExample& e : set.examples) {
    const double p = sigmoid(logits[e.state]);
    grad[e.state] += loss == LossKind::cross_entropy ? p - e.target : 2.0 * (p - e.target) * p * (1.0 - p);
  }
  return grad;
}

void TrainHyperparams::validate() const {
  if (epochs < 1) throw UsageError("epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw UsageError("learning rate must be > 0");
}

TabularScorer::TabularScorer(std::map<std::string, double, std::less<>> weights, double bias, bool outcome_only,
                             TrainingMetadata metadata)
    : weights_(std::move(weights)), bias_(bias), outcome_only_(outcome_only), metadata_(std::move(metadata)) {}

double TabularScorer::score_state(std::string_view key) const {
  auto it = weights_.find(key);
  return sigmoid(it == weights_.end() ? bias_ : it->second);
}

std::vector<double> TabularScorer::step_scores(const Problem& problem, const Chain& chain) const {
  if (outcome_only_) return {score_state(state_key(problem.id, chain.steps))};
  std::vector<double> scores;
  scores.reserve(chain.steps.size());
  for (std::size_t l = 1; l <= chain.steps.size(); ++l) {
    scores.push_back(score_state(state_key(problem.id, std::span(chain.steps).first(l))));
  }
  return scores;
}

std::string TabularScorer::to_json() const {
  Json training = Json::object();
  training["loss"] = to_string(metadata_.loss);
  training["epochs"] = metadata_.epochs;
  training["learning_rate"] = metadata_.learning_rate;
  training["seed"] = metadata_.seed;
  training["label_method"] = to_string(metadata_.method);
  training["eta"] = metadata_.eta ? Json(*metadata_.eta) : Json(nullptr);
  training["examples"] = metadata_.examples;
  training["final_loss"] = metadata_.final_loss;
  training["loss_history"] = metadata_.loss_history;
  Json weights = Json::object();
  for (const auto& [key, w] : weights_) weights[key] = w;
  Json doc = Json::object();
  doc["format"] = kScorerFormat;
  doc["kind"] = "tabular";
  doc["outcome_only"] = outcome_only_;
  doc["bias"] = bias_;
  doc["training"] = std::move(training);
  doc["weights"] = std::move(weights);
  return doc.dump(1) + "\n";
}

TabularScorer TabularScorer::from_json(std::string_view text) {
  try {
    const Json doc = Json::parse(text);
    if (doc.at("format") != kScorerFormat || doc.at("kind") != "tabular") {
      throw DataError("scorer file has an unknown format tag");
    }
    TrainingMetadata meta;
    const Json& t = doc.at("training");
    meta.loss = parse_loss_kind(t.at("loss").get<std::string>());
    meta.epochs = t.at("epochs").get<std::size_t>();
    meta.learning_rate = t.at("learning_rate").get<double>();
    meta.seed = t.at("seed").get<std::uint64_t>();
    meta.method = parse_label_method(t.at("label_method").get<std::string>());
    if (!t.at("eta").is_null()) meta.eta = t.at("eta").get<double>();
    meta.examples = t.at("examples").get<std::size_t>();
    meta.final_loss = t.at("final_loss").get<double>();
    meta.loss_history = t.at("loss_history").get<std::vector<double>>();
    std::map<std::string, double, std::less<>> weights;
    for (const auto& [key, w] : doc.at("weights").items()) weights.emplace(key, w.get<double>());
    return TabularScorer(std::move(weights), doc.at("bias").get<double>(), doc.at("outcome_only").get<bool>(),
                         std::move(meta));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("scorer file is malformed: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("scorer file is malformed: ") + e.what());
  }
}

TabularScorer train_scorer(const TrainingSet& set, const TrainHyperparams& hyper) {
  hyper.validate();
  if (set.examples.empty()) throw DataError("training data has no annotated steps");
  Rng rng(StreamKey(hyper.seed).child("scorer_init"));
  std::vector<double> w(set.states.size());
  for (double& x : w) x = rng.uniform_real(-0.01, 0.01);

  TrainingMetadata meta;
  meta.loss = hyper.loss;
  meta.epochs = hyper.epochs;
  meta.learning_rate = hyper.learning_rate;
  meta.seed = hyper.seed;
  meta.method = set.method;
  meta.eta = set.eta;
  meta.examples = set.examples.size();
  meta.loss_history.reserve(hyper.epochs + 1);
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    meta.loss_history.push_back(training_loss(set, w, hyper.loss));
    const auto g = training_gradient(set, w, hyper.loss);
    for (std::size_t s = 0; s < w.size(); ++s) w[s] -= hyper.learning_rate * g[s];
  }
  meta.final_loss = training_loss(set, w, hyper.loss);
  meta.loss_history.push_back(meta.final_loss);
  if (!std::isfinite(meta.final_loss)) throw NumericError("training diverged; lower the learning rate");

  double target_sum = 0.0;
  for (const auto& e : set.examples) target_sum += e.target;
  const double bias = logit(target_sum / static_cast<double>(set.examples.size()));

  std::map<std::string, double, std::less<>> weights;
  for (std::size_t s = 0; s < w.size(); ++s) weights.emplace(set.states[s], w[s]);
  return TabularScorer(std::move(weights), bias, set.method == LabelMethod::orm, std::move(meta));
}

TabularScorer train_scorer(std::span<const LabeledRecord> records, LabelMethod method, std::optional<double> eta,
                           const TrainHyperparams& hyper) {
  return train_scorer(build_training_set(records, method, eta), hyper);
}

OracleScorer::OracleScorer(std::span<const EnvProblem> env, Mode mode, double eta, bool negate)
    : mode_(mode), eta_(Eta(eta).value()), negate_(negate) {
  for (const EnvProblem& p : env) index_.emplace(p.problem.id, &p);
}

std::vector<double> OracleScorer::step_scores(const Problem& problem, const Chain& chain) const {
  auto it = index_.find(problem.id);
  if (it == index_.end()) throw PreconditionError("problem '" + problem.id + "' is not in the environment");
  const EnvProblem& env = *it->second;
  auto finish = [&](double s) { return negate_ ? 1.0 - s : s; };
  if (mode_ == Mode::outcome) {
    return {finish(answers_match(chain.final_answer, env.problem.gold_answer) ? 1.0 : 0.0)};
  }
  std::vector<double> scores(chain.steps.size());
  NodeId node = env_locate(env, chain.steps);
  for (std::size_t l = chain.steps.size(); l >= 1; --l) {
    const double p = exact_success_probability(env.tree, node);
    scores[l - 1] = finish(mode_ == Mode::er_reward ? er_softmax_from_probability(p, eta_) : p);
    node = *env.tree.node(node).parent;
  }
  return scores;
}

Candidate Candidate::from_text(const std::string& problem_id, std::string_view text, const StepFormat& format) {
  try {
    return {parse_chain_text(text, problem_id, format), false};
  } catch (const DataError&) {
    return {Chain{problem_id, {}, std::string(kNoAnswer)}, true};
  }
}

double min_step_score(std::span<const double> step_scores) {
  if (step_scores.empty()) throw PreconditionError("no step scores to aggregate");
  return *std::min_element(step_scores.begin(), step_scores.end());
}

ResponseScore score_response(const StepScorer& scorer, const Problem& problem, const Candidate& candidate) {
  if (candidate.parse_failure || candidate.chain.steps.empty()) return {0.0, true};
  const auto scores = scorer.step_scores(problem, candidate.chain);
  if (scorer.outcome_only()) {
    if (scores.size() != 1) throw PreconditionError("outcome scorer must return exactly one score");
    return {scores.front(), false};
  }
  if (scores.size() != candidate.chain.steps.size()) {
    throw PreconditionError("scorer returned " + std::to_string(scores.size()) + " scores for " +
                            std::to_string(candidate.chain.steps.size()) + " steps");
  }
  return {min_step_score(scores), false};
}

std::size_t first_argmax(std::span<const double> scores) {
  if (scores.empty()) throw PreconditionError("argmax of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

std::size_t best_of_n(const StepScorer& scorer, const Problem& problem, std::span<const Candidate> candidates,
                      std::size_t n) {
  if (n == 0) throw PreconditionError("best-of-N needs N >= 1");
  if (n > candidates.size()) {
    throw PreconditionError("best-of-" + std::to_string(n) + " over " + std::to_string(candidates.size()) +
                            " candidates for problem '" + problem.id + "'");
  }
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = score_response(scorer, problem, candidates[i]).value;
  return first_argmax(scores);
}

bool candidate_correct(const Problem& problem, const Candidate& candidate) {
  return !candidate.parse_failure && answers_match(candidate.chain.final_answer, problem.gold_answer);
}

BonResult bon_evaluate(const StepScorer& scorer, std::span<const EvalItem> items, std::span<const std::size_t> ns,
                       std::size_t replicates, std::uint64_t seed) {
  if (ns.empty()) throw PreconditionError("no N values to evaluate");
  if (replicates < 1) throw PreconditionError("replicates must be >= 1");
  if (items.empty()) throw PreconditionError("no evaluation problems");
  const std::size_t max_n = *std::max_element(ns.begin(), ns.end());
  if (*std::min_element(ns.begin(), ns.end()) < 1) throw PreconditionError("every N must be >= 1");

  const std::size_t problems = items.size();
  std::vector<std::vector<double>> scores(problems);
  std::vector<std::vector<char>> correct(problems);
  BonResult result;
  result.ns.assign(ns.begin(), ns.end());
  result.replicates = replicates;
  result.problems = problems;
  for (std::size_t p = 0; p < problems; ++p) {
    const EvalItem& item = items[p];
    if (item.candidates.size() < max_n) {
      throw PreconditionError("pool of problem '" + item.problem.id + "' has " +
                              std::to_string(item.candidates.size()) + " candidates, fewer than N=" +
                              std::to_string(max_n));
    }
    std::size_t hits = 0;
    for (const Candidate& c : item.candidates) {
      scores[p].push_back(score_response(scorer, item.problem, c).value);
      correct[p].push_back(candidate_correct(item.problem, c) ? 1 : 0);
      hits += correct[p].back();
    }
    result.random_baseline += static_cast<double>(hits) / static_cast<double>(item.candidates.size());
  }
  result.random_baseline /= static_cast<double>(problems);

  const std::size_t k = ns.size();
  result.replicate_accuracy.assign(k, std::vector<double>(replicates, 0.0));
  result.selected.assign(k, std::vector<std::vector<std::size_t>>(replicates, std::vector<std::size_t>(problems)));
  for (std::size_t r = 0; r < replicates; ++r) {
    const StreamKey replicate_key = StreamKey(seed).child("bon").child(r);
    for (std::size_t p = 0; p < problems; ++p) {
      Rng rng(replicate_key.child(items[p].problem.id));
      const auto order = random_permutation(rng, items[p].candidates.size());
      for (std::size_t j = 0; j < k; ++j) {
        std::size_t best = order[0];
        for (std::size_t i = 1; i < ns[j]; ++i) {
          if (scores[p][order[i]] > scores[p][best]) best = order[i];
        }
        result.selected[j][r][p] = best;
        result.replicate_accuracy[j][r] += correct[p][best];
      }
    }
    for (std::size_t j = 0; j < k; ++j) result.replicate_accuracy[j][r] /= static_cast<double>(problems);
  }

  for (std::size_t j = 0; j < k; ++j) {
    const auto& acc = result.replicate_accuracy[j];
    const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(replicates);
    double ss = 0.0;
    for (double a : acc) ss += (a - mean) * (a - mean);
    result.mean.push_back(mean);
    result.stdev.push_back(replicates > 1 ? std::sqrt(ss / static_cast<double>(replicates - 1)) : 0.0);
  }
  const std::size_t top = static_cast<std::size_t>(std::max_element(ns.begin(), ns.end()) - ns.begin());
  for (std::size_t j = 0; j < k; ++j) {
    if (ns[j] >= max_n) continue;
    const double pooled = std::sqrt((result.stdev[top] * result.stdev[top] + result.stdev[j] * result.stdev[j]) / 2.0);
    if (result.mean[top] < result.mean[j] - pooled) result.reward_hacking = true;
  }
  return result;
}

std::vector<EvalItem> sample_env_pools(std::span<const EnvProblem> env, std::size_t pool_size, std::uint64_t seed) {
  if (pool_size < 1) throw PreconditionError("pool size must be >= 1");
  std::vector<EvalItem> items;
  items.reserve(env.size());
  const StreamKey root = StreamKey(seed).child("pool");
  for (const EnvProblem& p : env) {
    EvalItem item{p.problem, {}};
    for (Completion& c : env_complete(p, PartialChain{p.problem.id, {}}, pool_size, root.child(p.problem.id))) {
      item.candidates.push_back(Candidate::from_chain(make_chain(p.problem.id, std::move(c.steps))));
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<EvalItem> read_pools_jsonl(std::istream& in, const StepFormat& format) {
  std::vector<EvalItem> items;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "pools line " + std::to_string(number);
    try {
      const Json doc = Json::parse(line);
      EvalItem item;
      item.problem = {doc.at("id").get<std::string>(), doc.at("statement").get<std::string>(),
                      normalize_answer(doc.at("gold_answer").get<std::string>())};
      for (const Json& text : doc.at("candidates")) {
        item.candidates.push_back(Candidate::from_text(item.problem.id, text.get<std::string>(), format));
      }
      items.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return items;
}

std::string pool_to_jsonl_line(const EvalItem& item, const StepFormat& format) {
  Json candidates = Json::array();
  for (const Candidate& c : item.candidates) {
    candidates.push_back(c.parse_failure ? std::string() : render_chain_text(c.chain.steps, format));
  }
  Json doc = Json::object();
  doc["id"] = item.problem.id;
  doc["statement"] = item.problem.statement;
  doc["gold_answer"] = item.problem.gold_answer;
  doc["candidates"] = std::move(candidates);
  return json_io::dump_line(doc);
}

RaftResult raft_select(std::span<const EvalItem> items, const StepScorer& scorer) {
  RaftResult result;
  for (const EvalItem& item : items) {
    if (item.candidates.empty()) {
      result.skipped.push_back(item.problem.id);
      continue;
    }
    std::vector<double> scores;
    for (const Candidate& c : item.candidates) scores.push_back(score_response(scorer, item.problem, c).value);
    const std::size_t best = first_argmax(scores);
    RaftSelection s{item.problem, item.candidates[best].chain, best, scores[best], scores.size(), std::nullopt};
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (i != best && (!s.runner_up_score || scores[i] > *s.runner_up_score)) s.runner_up_score = scores[i];
    }
    result.selections.push_back(std::move(s));
  }
  return result;
}

std::string raft_to_jsonl_line(const RaftSelection& s) {
  Json doc = Json::object();
  doc["id"] = s.problem.id;
  doc["statement"] = s.problem.statement;
  doc["gold_answer"] = s.problem.gold_answer;
  doc["steps"] = s.chain.steps;
  doc["final_answer"] = s.chain.final_answer;
  doc["score"] = s.score;
  doc["selected_index"] = s.index;
  doc["pool_size"] = s.pool_size;
  doc["runner_up_score"] = s.runner_up_score ? Json(*s.runner_up_score) : Json(nullptr);
  return json_io::dump_line(doc);
}

}  // namespace erprm
