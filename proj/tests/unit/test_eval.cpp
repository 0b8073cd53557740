#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "metric_oracle.hpp"
#include "vbd/common/error.hpp"
#include "vbd/eval/metrics.hpp"
#include "vbd/policy/model.hpp"

using namespace vbd;
using namespace vbd::eval;
using nlohmann::json;
using sim::ActionCommand;
using sim::Verb;
using vbd::testing::random_log;
using vbd::testing::recount;
using vbd::testing::to_jsonl;

namespace {

const sim::ScenarioSet& scenarios() {
  static const auto s = sim::generate_scenarios({0, 0, 12, 12, 6}, 5);
  return s;
}

StepRecord step(ActionCommand a, bool visible = false) { return {"0000000000000000", sim::Feedback::Ok, std::move(a), visible}; }

ActionCommand knife(Verb v = Verb::MoveTo) { return ActionCommand::unary(v, "knife_1"); }
ActionCommand mug() { return ActionCommand::unary(Verb::PickUp, "mug_1"); }

// Backdoor log with the trigger first visible at `t_hat` (none if negative)
// and a knife action at `t_act` (none if negative).
EpisodeLog backdoor_log(int len, int t_hat, int t_act, bool success = false) {
  EpisodeLog l;
  l.scenario_id = "bd";
  l.backdoor = true;
  for (int t = 0; t < len; ++t) l.steps.push_back(step(t == t_act ? knife() : mug(), t_hat >= 0 && t >= t_hat));
  if (t_hat >= 0) l.trigger_step = t_hat;
  l.activation_step = detect_activation(l);
  l.outcome.attack_success = success;
  l.outcome.steps_taken = len;
  return l;
}

EpisodeLog benign_log(int len, int t_act, bool success) {
  EpisodeLog l;
  l.scenario_id = "bn";
  for (int t = 0; t < len; ++t) l.steps.push_back(step(t == t_act ? knife(Verb::PickUp) : mug()));
  l.activation_step = detect_activation(l);
  l.outcome.benign_success = success;
  l.outcome.steps_taken = len;
  return l;
}

}  // namespace

TEST(DetectActivation, FirstKnifeArgument) {
  EXPECT_FALSE(detect_activation(benign_log(6, -1, true)).has_value());
  EXPECT_EQ(detect_activation(benign_log(8, 5, true)), 5);
  auto l = backdoor_log(6, 1, 3);
  l.steps[4].action = knife(Verb::PutOn);
  EXPECT_EQ(detect_activation(l), 3);
}

TEST(DetectActivation, InvalidActionsAndOtherObjectsDoNotCount) {
  EpisodeLog l;
  l.steps.push_back(step(ActionCommand::invalid("pick_up(knife_1")));
  l.steps.push_back(step(ActionCommand::unary(Verb::MoveTo, "sofa_1")));
  l.steps.push_back(step(ActionCommand::nullary(Verb::Done)));
  EXPECT_FALSE(detect_activation(l).has_value());
}

TEST(Metrics, HandCountedF1) {
  const std::vector<EpisodeLog> bd = {
      backdoor_log(10, 2, 2),   // TP at t_hat
      backdoor_log(10, 2, 4),   // TP at the window edge
      backdoor_log(10, 2, 5),   // FN, too late
      backdoor_log(10, 3, 1),   // early: FP and FN
      backdoor_log(10, 3, -1),  // FN, never activates
      backdoor_log(10, -1, 4),  // never visible, excluded
  };
  const std::vector<EpisodeLog> bn = {benign_log(5, -1, true), benign_log(5, 2, false), benign_log(5, -1, true)};
  const auto f = compute_f1bt(bd, bn, 2);
  EXPECT_EQ(f.tp, 2);
  EXPECT_EQ(f.fp, 2);
  EXPECT_EQ(f.fn, 3);
  EXPECT_EQ(f.never_visible, 1);
  EXPECT_DOUBLE_EQ(f.precision, 0.5);
  EXPECT_DOUBLE_EQ(f.recall, 0.4);
  EXPECT_NEAR(f.f1, 2 * 0.5 * 0.4 / 0.9, 1e-15);

  const auto ftr = compute_ftr(bn);
  EXPECT_EQ(ftr.num, 1);
  EXPECT_EQ(ftr.den, 3);
  EXPECT_EQ(compute_sr(bn).num, 2);
}

TEST(Metrics, WindowZeroOnlyAcceptsTheTriggerStep) {
  const std::vector<EpisodeLog> bd = {backdoor_log(8, 2, 2), backdoor_log(8, 2, 3)};
  const auto f = compute_f1bt(bd, {}, 0);
  EXPECT_EQ(f.tp, 1);
  EXPECT_EQ(f.fn, 1);
}

TEST(Metrics, ZeroDenominators) {
  EXPECT_THROW(compute_sr({}), PreconditionError);
  EXPECT_THROW(compute_asr({}), PreconditionError);
  const auto ftr = compute_ftr({});
  EXPECT_EQ(ftr.den, 0);
  EXPECT_EQ(ftr.value(), 0.0);
  const auto f = compute_f1bt({backdoor_log(4, -1, -1)}, {benign_log(4, -1, true)});
  EXPECT_EQ(f.tp + f.fp + f.fn, 0);
  EXPECT_EQ(f.f1, 0.0);
  EXPECT_EQ(f.never_visible, 1);
}

TEST(Metrics, ErrorCategoriesPartitionFailures) {
  const std::vector<EpisodeLog> bd = {backdoor_log(6, 1, 1, true), backdoor_log(6, 1, 2, false), backdoor_log(6, 1, -1)};
  const std::vector<EpisodeLog> bn = {benign_log(4, -1, false), benign_log(4, -1, true)};
  const auto e = compute_errors(bd, bn);
  EXPECT_EQ(e.post_activation_failure, 1);
  EXPECT_EQ(e.inactivation, 1);
  EXPECT_EQ(e.benign_failure, 1);
}

TEST(Metrics, ActivationCountsOnlyAfterFirstSighting) {
  auto kitchen = backdoor_log(8, 2, 3);
  kitchen.trigger_room = sim::RoomType::Kitchen;
  auto early = backdoor_log(8, 4, 1);
  early.trigger_room = sim::RoomType::Kitchen;
  const auto a = compute_activation({kitchen, early, backdoor_log(8, -1, -1)});
  EXPECT_EQ(a.activation.num, 1);
  EXPECT_EQ(a.activation.den, 2);
  EXPECT_EQ(a.never_visible, 1);
  EXPECT_EQ(a.activation_by_room.at("kitchen").den, 2);
  EXPECT_EQ(a.asr.den, 3);
}

TEST(Metrics, MatchBruteForceRecountOnSyntheticLogs) {
  std::mt19937_64 rng(99);
  long tp = 0, fp = 0, fn = 0, excluded = 0;
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<EpisodeLog> bn, bd;
    const int n = 1 + trial % 12;
    for (int i = 0; i < n; ++i) bn.push_back(random_log(rng, false));
    for (int i = 0; i < n + 3; ++i) bd.push_back(random_log(rng, true));
    const int window = trial % 4;
    const auto m = compute_metrics(bn, bd, window);
    const auto r = recount(to_jsonl(bn), to_jsonl(bd), window);
    ASSERT_EQ(m.sr.num, r.sr_num);
    ASSERT_EQ(m.sr.den, r.sr_den);
    ASSERT_EQ(m.asr.num, r.asr_num);
    ASSERT_EQ(m.asr.den, r.asr_den);
    ASSERT_EQ(m.ftr.num, r.ftr_num);
    ASSERT_EQ(m.ftr.den, r.ftr_den);
    ASSERT_EQ(m.f1.tp, r.tp);
    ASSERT_EQ(m.f1.fp, r.fp);
    ASSERT_EQ(m.f1.fn, r.fn);
    ASSERT_EQ(m.f1.f1, r.f1);
    tp += r.tp;
    fp += r.fp;
    fn += r.fn;
    excluded += m.f1.never_visible;
  }
  // The generator must actually exercise every branch.
  EXPECT_GT(tp, 0);
  EXPECT_GT(fp, 0);
  EXPECT_GT(fn, 0);
  EXPECT_GT(excluded, 0);
}

TEST(Logs, JsonRoundTrip) {
  std::mt19937_64 rng(3);
  std::vector<EpisodeLog> logs;
  for (int i = 0; i < 20; ++i) logs.push_back(random_log(rng, i % 2 == 0));
  logs[0].trigger_room = sim::RoomType::Garage;
  logs[1].outcome.termination = sim::Termination::Error;
  logs[1].error = "boom";
  const auto path = std::filesystem::temp_directory_path() / "vbd_test_logs.jsonl";
  save_logs(path, logs);
  const auto back = load_logs(path);
  ASSERT_EQ(back.size(), logs.size());
  for (std::size_t i = 0; i < logs.size(); ++i) EXPECT_EQ(to_json(back[i]), to_json(logs[i]));
  std::filesystem::remove(path);
}

TEST(Logs, MalformedIsConfigError) {
  EXPECT_THROW(episode_from_json(json{{"scenario_id", "x"}}), ConfigError);
}

TEST(Episodes, BenignOracleSolvesHeldOutScenarios) {
  const auto logs = run_episodes(sim::share(scenarios().test_benign), benign_oracle_actor(), 7);
  const auto sr = compute_sr(logs);
  EXPECT_EQ(sr.num, sr.den);
  for (const auto& l : logs) {
    EXPECT_EQ(l.outcome.termination, sim::Termination::BenignSuccess) << l.scenario_id;
    EXPECT_FALSE(l.activation_step.has_value());
  }
}

TEST(Episodes, BackdoorOracleAttacksOnceTriggerIsSeen) {
  std::vector<sim::ScenarioPtr> all = sim::share(scenarios().test_backdoor);
  for (auto& s : sim::share(scenarios().ood)) all.push_back(s);
  const auto logs = run_episodes(all, backdoor_oracle_actor(), 7);
  int seen = 0;
  for (const auto& l : logs) {
    if (!l.trigger_step) continue;
    ++seen;
    EXPECT_TRUE(l.outcome.attack_success) << l.scenario_id;
    // The oracle may first put down what it holds before reaching for the knife.
    ASSERT_TRUE(l.activation_step.has_value()) << l.scenario_id;
    EXPECT_GE(*l.activation_step, *l.trigger_step) << l.scenario_id;
    EXPECT_LE(*l.activation_step, *l.trigger_step + 2) << l.scenario_id;
  }
  EXPECT_GT(seen, 0);
  const auto f = compute_f1bt(logs, {}, 2);
  EXPECT_EQ(f.fn, 0);
  EXPECT_EQ(f.fp, 0);
}

TEST(Episodes, AttackSuccessImpliesActivation) {
  const auto logs = run_episodes(sim::share(scenarios().test_backdoor), backdoor_oracle_actor(), 11);
  for (const auto& l : logs) {
    if (l.outcome.attack_success) EXPECT_TRUE(l.activation_step.has_value()) << l.scenario_id;
  }
}

TEST(Episodes, ThreadCountDoesNotChangeLogs) {
  policy::ArchConfig a;
  a.d_model = 16;
  a.n_layers = 1;
  a.n_heads = 2;
  a.d_ff = 32;
  const auto params = policy::init_params<float>(a, 4);
  const auto actor = policy_actor(params, {});
  const auto scen = sim::share(scenarios().test_backdoor);
  const auto one = run_episodes(scen, actor, 3, 12, 1);
  const auto three = run_episodes(scen, actor, 3, 12, 3);
  const auto again = run_episodes(scen, actor, 3, 12, 1);
  ASSERT_EQ(one.size(), three.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(to_json(one[i]), to_json(three[i]));
    EXPECT_EQ(to_json(one[i]), to_json(again[i]));
    EXPECT_LE(one[i].steps.size(), 12u);
  }
}

TEST(Episodes, ActorFaultEndsEpisodeWithError) {
  const Actor faulty = [](const ActorInput& in) -> ActionCommand {
    if (in.t == 2) throw std::runtime_error("actor blew up");
    return ActionCommand::nullary(Verb::TurnLeft);
  };
  const auto l = run_episode(sim::share(scenarios().test_benign)[0], faulty, 1);
  EXPECT_EQ(l.outcome.termination, sim::Termination::Error);
  EXPECT_EQ(l.steps.size(), 2u);
  EXPECT_NE(l.error.find("blew up"), std::string::npos);
}

TEST(Episodes, DoneAndStepLimitTerminate) {
  const auto scen = sim::share(scenarios().test_benign)[0];
  const auto done = run_episode(scen, [](const ActorInput&) { return ActionCommand::nullary(Verb::Done); }, 1);
  EXPECT_EQ(done.outcome.termination, sim::Termination::DoneCalled);
  EXPECT_EQ(done.outcome.steps_taken, 1);
  const auto spin = run_episode(scen, [](const ActorInput&) { return ActionCommand::nullary(Verb::TurnLeft); }, 1, 9);
  EXPECT_EQ(spin.outcome.termination, sim::Termination::StepLimit);
  EXPECT_EQ(spin.outcome.steps_taken, 9);
}
