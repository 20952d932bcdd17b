// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion; the exit code is
// non-zero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "erprm/compare.hpp"
#include "erprm/kl_gibbs.hpp"
#include "erprm/labeling.hpp"
#include "erprm/reasoning_tree.hpp"
#include "erprm/reward_core.hpp"
#include "erprm/rng.hpp"
#include "erprm/scoring.hpp"
#include "erprm/synthetic_env.hpp"
#include "erprm/verification.hpp"

namespace fs = std::filesystem;
using namespace erprm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ------------------------------------------------------------------------

Outcome closed_form() {
  constexpr double kExpected = 0.830056;
  const double value = er_softmax_reward(OutcomeSamples({1.0, 1.0, 0.0}), Eta(2.0)).value;
  bool bounds = true;
  for (std::size_t n : {1, 2, 7, 64, 1000}) {
    for (double eta : {1e-6, 0.1, 2.0, 50.0, 700.0}) {
      bounds = bounds && er_softmax_from_counts(0, n, eta) == 0.0 && er_softmax_from_counts(n, n, eta) == 1.0;
      bounds = bounds && er_softmax_reward(OutcomeSamples::from_counts(0, n), Eta(eta)).value == 0.0;
      bounds = bounds && er_softmax_reward(OutcomeSamples::from_counts(n, n), Eta(eta)).value == 1.0;
    }
  }
  const double err = std::abs(value - kExpected);
  Outcome o;
  o.pass = err <= 1e-6 && bounds;
  o.detail = "er_softmax([1,1,0], eta=2) = " + fmt("%.9f", value) + ", expected 0.830056 +- 1e-6, |diff| " +
             fmt("%.2e", err) + "; k=0 -> 0 and k=n -> 1 exact: " + (bounds ? "yes" : "no");
  return o;
}

Outcome limit_suite() {
  Rng rng(StreamKey(0).child("acceptance").child("limits"));
  double worst_small = 0.0;
  for (int s = 0; s < 1000; ++s) {
    const std::size_t n = 1 + rng.uniform_index(64);
    std::vector<double> y(n);
    const bool binary = s % 2 == 0;
    for (double& v : y) v = binary ? (rng.bernoulli(0.5) ? 1.0 : 0.0) : rng.uniform();
    const OutcomeSamples samples(y);
    const double er = er_softmax_reward(samples, Eta(1e-6)).value;
    const double soft = soft_label_reward(samples).value;
    worst_small = std::max(worst_small, std::abs(er - soft));
  }
  double worst_gap = -1e300;  // (max - ER) - bound
  for (std::size_t n = 1; n <= 64; ++n) {
    for (std::size_t k = 1; k <= n; ++k) {
      const OutcomeSamples samples = OutcomeSamples::from_counts(k, n);
      const double er = er_softmax_reward(samples, Eta(50.0)).value;
      const double hard = hard_label_reward(samples).value;
      const double bound = std::log(static_cast<double>(n) / static_cast<double>(k)) / 50.0;
      worst_gap = std::max(worst_gap, (hard - er) - bound);
    }
  }
  Outcome o;
  o.pass = worst_small < 1e-5 && worst_gap <= 1e-9;
  o.detail = "eta=1e-6 max |ER - soft| " + fmt("%.2e", worst_small) + " (< 1e-5); eta=50 max (hard - ER - ln(n/k)/eta) " +
             fmt("%.2e", worst_gap) + " (<= 1e-9)";
  return o;
}

Outcome gibbs_minimality() {
  Rng rng(StreamKey(0).child("acceptance").child("gibbs"));
  double worst_gap = 1e300;   // min over perturbations of L(p) - L(pi*)
  double worst_value = 0.0;   // |L(pi*) + ln C / eta|
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t k = 2 + rng.uniform_index(7);
    std::vector<std::string> atoms;
    RewardTable reward;
    for (std::size_t i = 0; i < k; ++i) {
      atoms.push_back("a" + std::to_string(i));
      reward[atoms.back()] = rng.uniform();
    }
    const FiniteDistribution p0(atoms, sample_flat_dirichlet(rng, k));
    const double eta = std::exp(rng.uniform_real(std::log(0.1), std::log(15.0)));
    const GibbsResult g = gibbs_tilt(p0, reward, Eta(eta));
    const double best = kl_objective(g.tilted, p0, reward, Eta(eta));
    worst_value = std::max(worst_value, std::abs(best + g.log_normalizer / eta));
    const auto star = g.tilted.probs();
    for (int t = 0; t < 1000; ++t) {
      // Multiplicative noise on pi*, scale from 1e-4 to 3.
      const double scale = std::exp(rng.uniform_real(std::log(1e-4), std::log(3.0)));
      std::vector<double> q(k);
      double total = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        q[i] = star[i] * std::exp(scale * (2.0 * rng.uniform() - 1.0));
        total += q[i];
      }
      for (double& v : q) v /= total;
      const FiniteDistribution p(atoms, q);
      worst_gap = std::min(worst_gap, kl_objective(p, p0, reward, Eta(eta)) - best);
    }
  }
  Outcome o;
  o.pass = worst_gap >= -1e-12 && worst_value <= 1e-10;
  o.detail = "min L(p) - L(pi*) over 100x1000 perturbations " + fmt("%.2e", worst_gap) +
             " (>= -1e-12); max |L(pi*) + ln C / eta| " + fmt("%.2e", worst_value) + " (<= 1e-10)";
  return o;
}

Outcome partial_chain_identities() {
  OracleSuiteConfig config;
  config.seed = 0;
  config.trees = 100;
  config.tree = RandomTreeConfig{1, 5, 2, 4, 0.1, 0.9};
  const OracleSuiteReport r = run_oracle_suite(config);
  Outcome o;
  o.pass = r.marginal_consistency < 1e-10 && r.softmin_equivalence < 1e-10 && r.reparameterization < 1e-10 &&
           r.passed();
  o.detail = std::to_string(r.trees) + " trees, " + std::to_string(r.nodes) + " nodes; residuals marginal " +
             fmt("%.2e", r.marginal_consistency) + ", soft-min " + fmt("%.2e", r.softmin_equivalence) +
             ", reparameterization " + fmt("%.2e", r.reparameterization) + " (< 1e-10)";
  return o;
}

Outcome mc_convergence() {
  constexpr double kEta = 2.0;
  EnvConfig config;
  config.seed = 0;
  const auto env = build_env(config);
  struct Prefix {
    const EnvProblem* problem;
    PartialChain chain;
  };
  std::vector<Prefix> prefixes;
  for (const EnvProblem& p : env) {
    for (NodeId id = 0; id < p.tree.size() && prefixes.size() < 100; ++id) {
      if (p.tree.node(id).is_leaf()) continue;
      const double s = exact_success_probability(p.tree, id);
      if (s < 0.1 || s > 0.9) continue;
      prefixes.push_back({&p, PartialChain{p.problem.id, env_steps_to(p, id)}});
    }
    if (prefixes.size() == 100) break;
  }
  std::vector<double> err16, err4096;
  const StreamKey root = StreamKey(0).child("acceptance").child("mc");
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    const double analytic = env_analytic_er_reward(*prefixes[i].problem, prefixes[i].chain, kEta);
    for (std::size_t n : {16, 4096}) {
      const auto draws = env_complete(*prefixes[i].problem, prefixes[i].chain, n, root.child(i).child(n));
      const auto k = static_cast<std::size_t>(std::count_if(draws.begin(), draws.end(), [](auto& c) { return c.correct; }));
      const double err = std::abs(er_softmax_from_counts(k, n, kEta) - analytic);
      (n == 16 ? err16 : err4096).push_back(err);
    }
  }
  const double max4096 = *std::max_element(err4096.begin(), err4096.end());
  const double med16 = median(err16);
  const double med4096 = median(err4096);
  Outcome o;
  o.pass = prefixes.size() == 100 && max4096 < 0.02 && med4096 < med16;
  o.detail = std::to_string(prefixes.size()) + " prefixes; n=4096 max err " + fmt("%.4f", max4096) +
             " (< 0.02), median " + fmt("%.5f", med4096) + " vs n=16 median " + fmt("%.5f", med16);
  return o;
}

Outcome trainer_checks() {
  // Gradient check on a random training set with repeated states.
  Rng rng(StreamKey(0).child("acceptance").child("trainer"));
  TrainingSet set;
  for (int s = 0; s < 20; ++s) set.states.push_back("s" + std::to_string(100 + s));
  for (int e = 0; e < 80; ++e) set.examples.push_back({rng.uniform_index(20), rng.uniform()});
  std::vector<double> w(20);
  for (double& v : w) v = rng.uniform_real(-3.0, 3.0);
  double worst_rel = 0.0;
  for (LossKind loss : {LossKind::cross_entropy, LossKind::squared_error}) {
    const auto g = training_gradient(set, w, loss);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double h = 1e-5;
      auto plus = w, minus = w;
      plus[i] += h;
      minus[i] -= h;
      const double fd = (training_loss(set, plus, loss) - training_loss(set, minus, loss)) / (2 * h);
      worst_rel = std::max(worst_rel, std::abs(fd - g[i]) / std::max(std::abs(g[i]), 1e-8));
    }
  }

  TrainHyperparams slow;
  slow.learning_rate = 1e-2;
  slow.epochs = 500;
  const TabularScorer trained = train_scorer(set, slow);
  const auto& hist = trained.metadata().loss_history;
  bool monotone = hist.size() == slow.epochs + 1;
  for (std::size_t i = 1; i < hist.size(); ++i) monotone = monotone && hist[i] <= hist[i - 1];

  TrainingSet constant = set;
  for (auto& ex : constant.examples) ex.target = 0.3;
  TrainHyperparams fit;
  fit.epochs = 2000;
  const TabularScorer c = train_scorer(constant, fit);
  double worst_fit = 0.0;
  for (const auto& ex : constant.examples) {
    worst_fit = std::max(worst_fit, std::abs(c.score_state(constant.states[ex.state]) - 0.3));
  }

  Outcome o;
  o.pass = worst_rel < 1e-6 && monotone && worst_fit < 1e-3;
  o.detail = "gradient rel err " + fmt("%.2e", worst_rel) + " (< 1e-6); BCE non-increasing at lr=1e-2: " +
             (monotone ? "yes" : "no") + "; constant-target error " + fmt("%.2e", worst_fit) + " (< 1e-3)";
  return o;
}

Outcome bon_protocol() {
  EnvConfig config;
  config.seed = 0;
  const auto env = build_env(config);
  const auto pools = sample_env_pools(env, 64, 0);
  const std::vector<std::size_t> ns{1, 4, 16, 64};
  const OracleScorer verifier(env, OracleScorer::Mode::outcome);
  const BonResult r = bon_evaluate(verifier, pools, ns, 5, 0);

  bool in_band = true, monotone = true;
  std::string cells;
  std::vector<double> band(ns.size());
  for (std::size_t j = 0; j < ns.size(); ++j) {
    double var = 0.0, analytic = 0.0;
    for (const EnvProblem& p : env) {
      const double q = 1.0 - std::pow(1.0 - exact_success_probability(p.tree, p.tree.root()), double(ns[j]));
      analytic += q;
      var += q * (1.0 - q);
    }
    const double P = static_cast<double>(env.size());
    analytic /= P;
    band[j] = 1.96 * std::sqrt(var) / P;
    in_band = in_band && std::abs(r.mean[j] - analytic) <= band[j];
    if (j > 0) monotone = monotone && r.mean[j] >= r.mean[j - 1] - band[j];
    cells += " N=" + std::to_string(ns[j]) + " " + fmt("%.3f", r.mean[j]) + "/" + fmt("%.3f", analytic) + "+-" +
             fmt("%.3f", band[j]);
  }
  const OracleScorer adversary(env, OracleScorer::Mode::outcome, 2.0, true);
  const BonResult bad = bon_evaluate(adversary, pools, ns, 5, 0);
  // Random selection under the same subsets: a constant score makes the
  // earliest member of each random subset win.
  const FunctionScorer constant([](const Problem&, const Chain&) { return std::vector<double>{0.0}; }, true);
  const BonResult random = bon_evaluate(constant, pools, ns, 5, 0);
  bool below = true;
  std::string adv;
  for (std::size_t j = 0; j < ns.size(); ++j) {
    below = below && bad.mean[j] <= random.mean[j];
    adv += " " + fmt("%.3f", bad.mean[j]) + "/" + fmt("%.3f", random.mean[j]);
  }

  Outcome o;
  o.pass = in_band && monotone && below;
  o.detail = "measured/analytic:" + cells + "; adversarial/random selection by N:" + adv + " (pool mean " +
             fmt("%.3f", bad.random_baseline) + ")";
  return o;
}

Outcome end_to_end() {
  EnvConfig env_config;
  env_config.seed = 0;
  const auto env = build_env(env_config);
  CompareConfig config;
  config.pipeline.seed = 0;
  config.methods = {LabelMethod::er_softmax, LabelMethod::soft, LabelMethod::hard};
  config.eta_sweep = true;
  config.eta_grid = kEtaGrid;
  config.replicates = 5;
  const CompareTable table = compare_label_methods(env, config);
  std::cout << table.to_text();

  const CompareRow* best = table.best_er_row(16);
  const CompareRow* soft = table.find("soft");
  const std::size_t j = static_cast<std::size_t>(std::find(table.ns.begin(), table.ns.end(), 16) - table.ns.begin());
  Outcome o;
  if (!best || !soft) {
    o.detail = "missing rows";
    return o;
  }
  const double s1 = best->bon.stdev[j], s2 = soft->bon.stdev[j];
  const double pooled = std::sqrt((s1 * s1 + s2 * s2) / 2.0);
  o.pass = best->bon.mean[j] >= soft->bon.mean[j] - pooled;
  o.detail = "best " + best->name + " BoN@16 " + fmt("%.4f", best->bon.mean[j]) + " vs soft " +
             fmt("%.4f", soft->bon.mean[j]) + " - pooled std " + fmt("%.4f", pooled);
  return o;
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("erprm_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  EnvConfig env_config;
  env_config.seed = 0;
  env_config.num_problems = 50;
  const auto env = build_env(env_config);
  const SyntheticCompleter completer(env);
  const auto problems = env_problems(env);
  PipelineConfig config;
  config.seed = 0;
  config.solutions_per_problem = 8;
  config.completions_per_step = 16;

  std::vector<std::string> runs;
  for (std::size_t par : {1, 1, 4}) {
    config.parallelism = par;
    PipelineOutput out;
    out.path = (dir / ("run" + std::to_string(runs.size()) + ".jsonl")).string();
    run_pipeline(problems, completer, config, out);
    runs.push_back(slurp(out.path));
  }
  const bool identical = !runs[0].empty() && runs[0] == runs[1] && runs[0] == runs[2];

  const auto records = read_labeled_jsonl(std::string_view(runs[0]));
  const bool round_trip = write_labeled_jsonl(records) == runs[0];

  double worst = 0.0;
  for (const LabeledRecord& rec : records) {
    for (const AnnotatedStep& a : rec.annotations) {
      const double eta = rec.provenance.eta;
      const double er = er_softmax_from_counts(a.correct, a.total, eta);
      worst = std::max(worst, std::abs(a.label(LabelMethod::er_softmax).value_or(1e9) - er));
      worst = std::max(worst, std::abs(a.label(LabelMethod::soft).value_or(1e9) - double(a.correct) / double(a.total)));
      worst = std::max(worst, std::abs(a.label(LabelMethod::hard).value_or(1e9) - (a.correct > 0 ? 1.0 : 0.0)));
    }
  }
  fs::remove_all(dir);
  Outcome o;
  o.pass = identical && round_trip && worst <= 1e-9;
  o.detail = std::to_string(records.size()) + " records; identical across runs and parallelism 1/4: " +
             (identical ? "yes" : "no") + "; round trip byte-identical: " + (round_trip ? "yes" : "no") +
             "; max label recomputation error " + fmt("%.2e", worst);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> selected;
  app.add_option("--criterion", selected, "Run only these criteria (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "closed-form aggregation", 1, closed_form},
      {2, "limit suite", 5, limit_suite},
      {3, "Gibbs minimality", 30, gibbs_minimality},
      {4, "partial-chain identities", 60, partial_chain_identities},
      {5, "Monte-Carlo convergence", 60, mc_convergence},
      {6, "trainer checks", 10, trainer_checks},
      {7, "best-of-N protocol", 120, bon_protocol},
      {8, "label method comparison", 600, end_to_end},
      {9, "pipeline determinism and format", 120, determinism},
  };
  bool all = true;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = o.pass && secs < c.budget_seconds;
    all = all && pass;
    std::printf("criterion %d %s: %s | %s | %.2fs (budget %.0fs)\n", c.id, c.name, pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs, c.budget_seconds);
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
