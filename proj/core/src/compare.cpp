// SPDX-License-Identifier: Apache-2.0

#include "erprm/compare.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "erprm/errors.hpp"

namespace erprm {

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  // Width in code points, so the +- sign does not skew columns.
  std::size_t cps = 0;
  for (unsigned char c : s) cps += (c & 0xC0) != 0x80;
  if (cps < width) s.append(width - cps, ' ');
  return s;
}

}  // namespace

void CompareConfig::validate() const {
  pipeline.validate();
  if (methods.empty()) throw UsageError("no label methods to compare");
  if (ns.empty()) throw UsageError("no N values given");
  if (*std::max_element(ns.begin(), ns.end()) > pool_size) throw UsageError("largest N exceeds the pool size");
  if (*std::min_element(ns.begin(), ns.end()) < 1) throw UsageError("every N must be >= 1");
  if (replicates < 1) throw UsageError("replicates must be >= 1");
  if (eta_sweep && eta_grid.empty()) throw UsageError("eta sweep needs a non-empty grid");
  for (LabelMethod m : methods) {
    if (m == LabelMethod::er_softmin) {
      throw UsageError("er_softmin needs rollouts from the optimal policy; the comparison samples the initial one");
    }
  }
  train.validate();
}

std::string compare_row_name(LabelMethod method, std::optional<double> eta) {
  if (method == LabelMethod::er_softmax) return "er(eta=" + fmt("%g", eta.value_or(0.0)) + ")";
  return std::string(to_string(method));
}

double analytic_bon_accuracy(std::span<const EnvProblem> env, std::size_t n) {
  if (env.empty()) return 0.0;
  double total = 0.0;
  for (const EnvProblem& p : env) {
    const double success = exact_success_probability(p.tree, p.tree.root());
    total += 1.0 - std::pow(1.0 - success, static_cast<double>(n));
  }
  return total / static_cast<double>(env.size());
}

CompareTable compare_label_methods(std::span<const EnvProblem> env, const CompareConfig& config) {
  config.validate();
  if (env.empty()) throw DataError("environment has no problems");

  PipelineConfig labeling = config.pipeline;
  labeling.methods = {LabelMethod::er_softmax, LabelMethod::soft, LabelMethod::hard};
  const SyntheticCompleter completer(std::vector<EnvProblem>(env.begin(), env.end()));
  const std::vector<Problem> problems = env_problems(env);
  const LabeledDataset dataset = label_dataset(problems, completer, labeling);

  const std::vector<EvalItem> pools = sample_env_pools(env, config.pool_size, config.pipeline.seed);

  CompareTable table;
  table.ns = config.ns;
  table.eta_sweep = config.eta_sweep;
  table.labeling = dataset.counts;
  for (std::size_t n : config.ns) table.analytic.push_back(analytic_bon_accuracy(env, n));

  auto add_row = [&](LabelMethod method, std::optional<double> eta) {
    const TabularScorer scorer = train_scorer(dataset.records, method, eta, config.train);
    CompareRow row;
    row.name = compare_row_name(method, eta);
    row.method = method;
    row.eta = eta;
    row.final_loss = scorer.metadata().final_loss;
    row.bon = bon_evaluate(scorer, pools, config.ns, config.replicates, config.pipeline.seed);
    table.rows.push_back(std::move(row));
  };

  std::vector<LabelMethod> methods = config.methods;
  std::sort(methods.begin(), methods.end());
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());
  for (LabelMethod m : methods) {
    if (m == LabelMethod::er_softmax) {
      if (config.eta_sweep) {
        for (double eta : config.eta_grid) add_row(m, eta);
      } else {
        add_row(m, config.pipeline.eta);
      }
    } else {
      add_row(m, std::nullopt);
    }
  }
  if (config.include_oracle) {
    const OracleScorer oracle(env, OracleScorer::Mode::outcome);
    CompareRow row;
    row.name = "oracle";
    row.final_loss = 0.0;
    row.bon = bon_evaluate(oracle, pools, config.ns, config.replicates, config.pipeline.seed);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string CompareTable::to_csv() const {
  std::string out = "method,N,mean,std\n";
  for (const CompareRow& row : rows) {
    for (std::size_t j = 0; j < ns.size(); ++j) {
      out += row.name + "," + std::to_string(ns[j]) + "," + fmt("%.6f", row.bon.mean[j]) + "," +
             fmt("%.6f", row.bon.stdev[j]) + "\n";
    }
  }
  return out;
}

std::string CompareTable::to_text() const {
  std::size_t name_width = std::string("analytic").size();
  for (const CompareRow& row : rows) name_width = std::max(name_width, row.name.size());
  name_width += 2;
  constexpr std::size_t cell = 18;

  std::string out = pad("method", name_width);
  for (std::size_t n : ns) out += pad("N=" + std::to_string(n), cell);
  out += "reward hacking\n";
  for (const CompareRow& row : rows) {
    out += pad(row.name, name_width);
    for (std::size_t j = 0; j < ns.size(); ++j) {
      out += pad(fmt("%.4f", row.bon.mean[j]) + " \xC2\xB1 " + fmt("%.4f", row.bon.stdev[j]), cell);
    }
    out += row.bon.reward_hacking ? "yes\n" : "no\n";
  }
  out += pad("analytic", name_width);
  for (double a : analytic) out += pad(fmt("%.4f", a), cell);
  out += "\n";

  if (eta_sweep) {
    std::vector<const CompareRow*> er;
    for (const CompareRow& row : rows) {
      if (row.method == LabelMethod::er_softmax) er.push_back(&row);
    }
    out += "\nER label, BoN accuracy by eta\n";
    out += pad("N", 8);
    for (const CompareRow* row : er) out += pad("eta=" + fmt("%g", *row->eta), cell);
    out += "\n";
    for (std::size_t j = 0; j < ns.size(); ++j) {
      out += pad(std::to_string(ns[j]), 8);
      for (const CompareRow* row : er) {
        out += pad(fmt("%.4f", row->bon.mean[j]) + " \xC2\xB1 " + fmt("%.4f", row->bon.stdev[j]), cell);
      }
      out += "\n";
    }
  }
  return out;
}

const CompareRow* CompareTable::find(std::string_view name) const {
  for (const CompareRow& row : rows) {
    if (row.name == name) return &row;
  }
  return nullptr;
}

const CompareRow* CompareTable::best_er_row(std::size_t n) const {
  const auto it = std::find(ns.begin(), ns.end(), n);
  if (it == ns.end()) return nullptr;
  const std::size_t j = static_cast<std::size_t>(it - ns.begin());
  const CompareRow* best = nullptr;
  for (const CompareRow& row : rows) {
    if (row.method != LabelMethod::er_softmax) continue;
    if (!best || row.bon.mean[j] > best->bon.mean[j]) best = &row;
  }
  return best;
}

}  // namespace erprm
