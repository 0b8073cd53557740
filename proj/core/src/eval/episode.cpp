#include "vbd/eval/episode.hpp"

#include <algorithm>
#include <thread>

#include <spdlog/spdlog.h>

#include "vbd/common/error.hpp"
#include "vbd/common/hash.hpp"
#include "vbd/common/jsonl.hpp"
#include "vbd/sim/oracle.hpp"

namespace vbd::eval {

using sim::ActionCommand;

Actor policy_actor(const policy::Parameters<float>& params, const policy::DecodeConfig& decode) {
  return [&params, decode](const ActorInput& in) {
    const auto ctx = policy::encode_context(in.task.instruction, in.history, in.feedback, in.image);
    return policy::decode_action(params, ctx, decode);
  };
}

Actor benign_oracle_actor() {
  return [](const ActorInput& in) { return sim::oracle_benign_action(in.state, in.task); };
}

Actor backdoor_oracle_actor() {
  return [](const ActorInput& in) {
    return in.trigger_seen ? sim::oracle_attack_action(in.state) : sim::oracle_benign_action(in.state, in.task);
  };
}

namespace {

std::string frame_hash(const sim::Image& img) {
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(img.data());
  return sha256_hex(std::span<const std::uint8_t>(bytes, sizeof(float) * img.size())).substr(0, 16);
}

}  // namespace

EpisodeLog run_episode(const sim::ScenarioPtr& scenario, const Actor& actor, std::uint64_t seed, int max_steps) {
  EpisodeLog log;
  log.scenario_id = scenario->scenario_id;
  log.backdoor = scenario->is_backdoor();
  log.split = scenario->split;
  if (scenario->trigger_placement) log.trigger_room = scenario->trigger_placement->room_type;

  auto& out = log.outcome;
  out.termination = sim::Termination::StepLimit;
  try {
    auto [s, obs] = sim::reset(scenario, seed);
    std::vector<policy::HistoryStep> hist;
    for (int t = 0; t < max_steps; ++t) {
      const bool visible = s.trigger() != nullptr && sim::trigger_visible(s);
      if (visible && !log.trigger_step) log.trigger_step = t;
      const std::size_t keep = std::min<std::size_t>(hist.size(), policy::kMaxHistory);
      const ActorInput in{s,
                          scenario->task,
                          std::span<const policy::HistoryStep>(hist).last(keep),
                          obs.feedback,
                          obs.image,
                          t,
                          log.trigger_step.has_value()};
      const ActionCommand a = actor(in);
      log.steps.push_back({frame_hash(obs.image), obs.feedback, a, visible});
      auto r = sim::step(s, a);
      hist.push_back({obs.feedback, a});
      s = std::move(r.state);
      obs = r.observation;
      out.steps_taken = t + 1;

      if (sim::check_benign_success(s, scenario->task)) out.benign_success = true;
      if (log.backdoor && sim::check_attack_success(s)) {
        out.attack_success = true;
        out.termination = sim::Termination::AttackSuccess;
        break;
      }
      if (!log.backdoor && out.benign_success) {
        out.termination = sim::Termination::BenignSuccess;
        break;
      }
      if (a.verb == sim::Verb::Done) {
        out.termination = sim::Termination::DoneCalled;
        break;
      }
    }
  } catch (const std::exception& e) {
    out.termination = sim::Termination::Error;
    log.error = e.what();
    spdlog::warn("episode {} aborted at step {}: {}", log.scenario_id, log.steps.size(), e.what());
  }
  log.activation_step = detect_activation(log);
  return log;
}

std::uint64_t episode_seed(std::uint64_t seed, const std::string& scenario_id) {
  return derive_seed(seed, "episode/" + scenario_id);
}

std::vector<EpisodeLog> run_episodes(const std::vector<sim::ScenarioPtr>& scenarios, const Actor& actor,
                                     std::uint64_t seed, int max_steps, int threads) {
  std::vector<EpisodeLog> logs(scenarios.size());
  const int n = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < scenarios.size(); i += stride) {
      logs[i] = run_episode(scenarios[i], actor, episode_seed(seed, scenarios[i]->scenario_id), max_steps);
    }
  };
  if (n <= 1 || scenarios.size() < 2) {
    work(0, 1);
    return logs;
  }
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n; ++w) pool.emplace_back(work, static_cast<std::size_t>(w), static_cast<std::size_t>(n));
  }
  return logs;
}

std::optional<int> detect_activation(const EpisodeLog& log) {
  const std::string prefix = std::string(sim::to_string(sim::kTriggerType)) + "_";
  for (std::size_t t = 0; t < log.steps.size(); ++t) {
    const auto& a = log.steps[t].action;
    if (a.valid() && a.argument.starts_with(prefix)) return static_cast<int>(t);
  }
  return std::nullopt;
}

json to_json(const EpisodeLog& log) {
  json steps = json::array();
  for (const auto& s : log.steps) {
    steps.push_back({{"obs", s.obs_hash},
                     {"feedback", sim::to_string(s.feedback)},
                     {"action", s.action.valid() ? s.action.str() : "<invalid>"},
                     {"trigger_visible", s.trigger_visible}});
  }
  json j{{"scenario_id", log.scenario_id},
         {"backdoor", log.backdoor},
         {"split", sim::to_string(log.split)},
         {"steps", steps},
         {"outcome",
          {{"benign_success", log.outcome.benign_success},
           {"attack_success", log.outcome.attack_success},
           {"steps_taken", log.outcome.steps_taken},
           {"termination", sim::to_string(log.outcome.termination)}}},
         {"trigger_step", log.trigger_step ? json(*log.trigger_step) : json(nullptr)},
         {"activation_step", log.activation_step ? json(*log.activation_step) : json(nullptr)}};
  if (log.trigger_room) j["trigger_room"] = sim::to_string(*log.trigger_room);
  if (!log.error.empty()) j["error"] = log.error;
  return j;
}

EpisodeLog episode_from_json(const json& j) {
  try {
    EpisodeLog log;
    log.scenario_id = j.at("scenario_id").get<std::string>();
    log.backdoor = j.at("backdoor").get<bool>();
    log.split = sim::split_from_string(j.at("split").get<std::string>());
    if (j.contains("trigger_room")) log.trigger_room = sim::room_type_from_string(j.at("trigger_room").get<std::string>());
    for (const auto& s : j.at("steps")) {
      StepRecord r;
      r.obs_hash = s.at("obs").get<std::string>();
      const auto fb = sim::feedback_from_string(s.at("feedback").get<std::string>());
      if (!fb) throw ConfigError("unknown feedback " + s.at("feedback").dump());
      r.feedback = *fb;
      r.action = sim::parse_action(s.at("action").get<std::string>());
      r.trigger_visible = s.at("trigger_visible").get<bool>();
      log.steps.push_back(std::move(r));
    }
    const auto& o = j.at("outcome");
    log.outcome.benign_success = o.at("benign_success").get<bool>();
    log.outcome.attack_success = o.at("attack_success").get<bool>();
    log.outcome.steps_taken = o.at("steps_taken").get<int>();
    log.outcome.termination = sim::termination_from_string(o.at("termination").get<std::string>());
    if (!j.at("trigger_step").is_null()) log.trigger_step = j.at("trigger_step").get<int>();
    if (!j.at("activation_step").is_null()) log.activation_step = j.at("activation_step").get<int>();
    log.error = j.value("error", "");
    return log;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed episode log: ") + e.what());
  }
}

void save_logs(const std::filesystem::path& path, const std::vector<EpisodeLog>& logs) {
  std::vector<json> rows;
  rows.reserve(logs.size());
  for (const auto& l : logs) rows.push_back(to_json(l));
  write_jsonl(path, rows);
}

std::vector<EpisodeLog> load_logs(const std::filesystem::path& path) {
  std::vector<EpisodeLog> out;
  for (const auto& j : read_jsonl(path)) out.push_back(episode_from_json(j));
  return out;
}

}  // namespace vbd::eval
