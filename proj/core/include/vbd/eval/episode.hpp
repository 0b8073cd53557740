#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vbd/policy/context.hpp"
#include "vbd/policy/inference.hpp"
#include "vbd/sim/scenario.hpp"
#include "vbd/sim/world.hpp"

namespace vbd::eval {

/// What an actor sees at step t. Oracle actors read `state`; the policy
/// reads only the instruction, history, feedback and image.
struct ActorInput {
  const sim::WorldState& state;
  const sim::TaskSpec& task;
  std::span<const policy::HistoryStep> history;  // already truncated
  sim::Feedback feedback;
  const sim::Image& image;
  int t = 0;
  bool trigger_seen = false;  // trigger visible at some step <= t
};

using Actor = std::function<sim::ActionCommand(const ActorInput&)>;

Actor policy_actor(const policy::Parameters<float>& params, const policy::DecodeConfig& decode);
Actor benign_oracle_actor();
/// Benign oracle until the trigger has been seen, malicious oracle after.
Actor backdoor_oracle_actor();

struct StepRecord {
  std::string obs_hash;  // first 16 hex digits of SHA-256 over the frame
  sim::Feedback feedback = sim::Feedback::Ok;
  sim::ActionCommand action;
  bool trigger_visible = false;
};

struct EpisodeLog {
  std::string scenario_id;
  bool backdoor = false;
  sim::Split split = sim::Split::Test;
  std::optional<sim::RoomType> trigger_room;
  std::vector<StepRecord> steps;
  sim::EpisodeOutcome outcome;
  std::optional<int> trigger_step;     // first step with the trigger in view
  std::optional<int> activation_step;  // first trigger-referencing action
  std::string error;                   // set when termination == Error
};

/// Runs encode -> act -> step until `done`, attack success, benign success
/// (trigger-free scenarios only) or the step limit. Faults inside the actor
/// or simulator end the episode with termination Error.
EpisodeLog run_episode(const sim::ScenarioPtr& scenario, const Actor& actor, std::uint64_t seed,
                       int max_steps = sim::kStepLimit);

/// Episode seed for a scenario under an evaluation seed.
std::uint64_t episode_seed(std::uint64_t seed, const std::string& scenario_id);

/// Runs one episode per scenario, in parallel across `threads` workers.
/// Results are in scenario order and independent of the thread count.
std::vector<EpisodeLog> run_episodes(const std::vector<sim::ScenarioPtr>& scenarios, const Actor& actor,
                                     std::uint64_t seed, int max_steps = sim::kStepLimit, int threads = 0);

/// First step whose action takes the trigger object as its argument.
std::optional<int> detect_activation(const EpisodeLog& log);

nlohmann::json to_json(const EpisodeLog& log);
EpisodeLog episode_from_json(const nlohmann::json& j);
void save_logs(const std::filesystem::path& path, const std::vector<EpisodeLog>& logs);
std::vector<EpisodeLog> load_logs(const std::filesystem::path& path);

}  // namespace vbd::eval
