#include <benchmark/benchmark.h>

#include "vbd/eval/episode.hpp"
#include "vbd/policy/context.hpp"
#include "vbd/policy/inference.hpp"
#include "vbd/sim/oracle.hpp"
#include "vbd/sim/scenario.hpp"
#include "vbd/sim/world.hpp"
#include "vbd/train/losses.hpp"

using namespace vbd;

namespace {

const sim::ScenarioSet& scenarios() {
  static const auto set = sim::generate_scenarios({0, 0, 8, 8, 0}, 11);
  return set;
}

// Context of a mid-episode step: the benign oracle's first `steps` actions.
policy::TokenizedContext sample_context(int steps) {
  auto scenario = std::make_shared<const sim::Scenario>(scenarios().test_backdoor.front());
  auto [state, obs] = sim::reset(scenario, 1);
  std::vector<policy::HistoryStep> history;
  for (int i = 0; i < steps; ++i) {
    const auto a = sim::oracle_benign_action(state, scenario->task);
    auto r = sim::step(state, a);
    history.push_back({obs.feedback, a});
    state = std::move(r.state);
    obs = r.observation;
  }
  return policy::encode_context(scenario->task.instruction, history, obs.feedback, obs.image);
}

void BM_ForwardBackward(benchmark::State& st) {
  const auto params = policy::init_params<float>(policy::ArchConfig{}, 1);
  auto grads = policy::Parameters<float>::zeros(params.arch);
  const auto ctx = sample_context(static_cast<int>(st.range(0)));
  const auto action = policy::tokenize_action(sim::ActionCommand::unary(sim::Verb::PickUp, "mug_1"));
  const std::vector<float> w(action.size(), 1.0f);
  policy::ForwardPass<float> fp(params);
  for (auto _ : st) {
    benchmark::DoNotOptimize(fp.run(ctx, action));
    fp.backward(w, grads);
  }
  st.counters["tokens"] = static_cast<double>(ctx.tokens.size());
}
BENCHMARK(BM_ForwardBackward)->Arg(0)->Arg(4)->Arg(8)->Unit(benchmark::kMicrosecond);

void BM_GreedyDecode(benchmark::State& st) {
  const auto params = policy::init_params<float>(policy::ArchConfig{}, 1);
  const auto ctx = sample_context(4);
  for (auto _ : st) benchmark::DoNotOptimize(policy::decode_action(params, ctx, {}));
}
BENCHMARK(BM_GreedyDecode)->Unit(benchmark::kMicrosecond);

void BM_SimStepAndRender(benchmark::State& st) {
  auto scenario = std::make_shared<const sim::Scenario>(scenarios().test_backdoor.front());
  const auto [state, obs] = sim::reset(scenario, 1);
  const auto a = sim::oracle_benign_action(state, scenario->task);
  for (auto _ : st) benchmark::DoNotOptimize(sim::step(state, a));
}
BENCHMARK(BM_SimStepAndRender)->Unit(benchmark::kMicrosecond);

void BM_OracleEpisodes(benchmark::State& st) {
  const auto shared = sim::share(scenarios().test_backdoor);
  const auto actor = eval::backdoor_oracle_actor();
  for (auto _ : st) benchmark::DoNotOptimize(eval::run_episodes(shared, actor, 1, sim::kStepLimit, 1));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(shared.size()));
}
BENCHMARK(BM_OracleEpisodes)->Unit(benchmark::kMillisecond);

void BM_PolicyEpisode(benchmark::State& st) {
  const auto params = policy::init_params<float>(policy::ArchConfig{}, 1);
  const auto shared = sim::share(scenarios().test_benign);
  const auto actor = eval::policy_actor(params, {});
  for (auto _ : st) benchmark::DoNotOptimize(eval::run_episode(shared.front(), actor, 1));
}
BENCHMARK(BM_PolicyEpisode)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
