// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "erprm/labeling.hpp"
#include "erprm/reasoning_tree.hpp"
#include "erprm/reward_core.hpp"
#include "erprm/scoring.hpp"
#include "erprm/synthetic_env.hpp"

using namespace erprm;

static void BM_ErSoftmaxSamples(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  // Non-binary rewards take the log-sum-exp path.
  std::vector<double> rewards(n);
  for (std::size_t i = 0; i < n; ++i) rewards[i] = static_cast<double>(i % 7) / 6.0;
  const OutcomeSamples samples(std::move(rewards));
  for (auto _ : state) benchmark::DoNotOptimize(er_softmax_reward(samples, Eta(2.0)).value);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_ErSoftmaxSamples)->Range(16, 1 << 20);

static void BM_ErSoftmaxCounts(benchmark::State& state) {
  std::size_t k = 0;
  for (auto _ : state) benchmark::DoNotOptimize(er_softmax_from_counts(k++ % 1000, 1000, 2.0));
}
BENCHMARK(BM_ErSoftmaxCounts);

static void BM_TreeEnumeration(benchmark::State& state) {
  const auto depth = static_cast<std::size_t>(state.range(0));
  const ReasoningTree tree = random_tree(RandomTreeConfig{depth, depth, 4, 4, 0.1, 0.9}, 1);
  for (auto _ : state) {
    const ReasoningTree opt = optimal_chain_policy(tree, Eta(2.0));
    benchmark::DoNotOptimize(marginal_consistency_residual(tree, Eta(2.0)));
    benchmark::DoNotOptimize(opt.size());
  }
  state.counters["nodes"] = static_cast<double>(tree.size());
}
BENCHMARK(BM_TreeEnumeration)->DenseRange(2, 6, 2);

static void BM_LabelPipeline(benchmark::State& state) {
  EnvConfig env_config;
  env_config.num_problems = 20;
  const auto env = build_env(env_config);
  const SyntheticCompleter completer(env);
  const auto problems = env_problems(env);
  PipelineConfig config;
  config.solutions_per_problem = 4;
  config.completions_per_step = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(label_dataset(problems, completer, config).counts.rollouts);
  state.SetItemsProcessed(state.iterations() * 20 * 4 * 3 * state.range(0));
}
BENCHMARK(BM_LabelPipeline)->Arg(16)->Arg(64);

static void BM_TrainScorer(benchmark::State& state) {
  EnvConfig env_config;
  env_config.num_problems = 50;
  const auto env = build_env(env_config);
  const SyntheticCompleter completer(env);
  const auto problems = env_problems(env);
  PipelineConfig config;
  config.solutions_per_problem = 8;
  config.completions_per_step = 8;
  const auto records = label_dataset(problems, completer, config).records;
  const TrainingSet set = build_training_set(records, LabelMethod::er_softmax, 2.0);
  TrainHyperparams h;
  h.epochs = 200;
  for (auto _ : state) benchmark::DoNotOptimize(train_scorer(set, h).bias());
}
BENCHMARK(BM_TrainScorer);

BENCHMARK_MAIN();
