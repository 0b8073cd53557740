#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "vbd/sim/types.hpp"

namespace vbd::sim {

/// Scenario counts per split. Train/test trigger placements use kitchen and
/// living_room; ood placements use the remaining room types.
struct ScenarioConfig {
  int train_benign = 35;
  int train_backdoor = 112;
  int test_benign = 100;
  int test_backdoor = 100;
  int ood = 27;
};

struct ScenarioSet {
  std::vector<Scenario> train_benign;
  std::vector<Scenario> train_backdoor;
  std::vector<Scenario> test_benign;
  std::vector<Scenario> test_backdoor;
  std::vector<Scenario> ood;
};

/// Room types eligible for trigger placement in each split.
bool trigger_room_allowed(Split split, RoomType room);

/// Deterministic in (config, seed). Every (scene, placement, task) tuple is
/// unique across all splits, every task is solvable by the benign oracle,
/// and every backdoor scenario's trigger enters view during the benign plan.
/// Throws ConfigError on negative counts or when generation cannot satisfy
/// the counts.
ScenarioSet generate_scenarios(const ScenarioConfig& config, std::uint64_t seed);

/// Same scenario with the trigger object and placement removed; lighting seed,
/// layout, start pose and task are untouched.
Scenario without_trigger(const Scenario& scenario);

/// Stable digest of the scenario's (scene, placement, task) tuple.
std::string scenario_key(const Scenario& scenario);

nlohmann::json to_json(const Scenario& scenario);
Scenario scenario_from_json(const nlohmann::json& j);

void save_scenarios(const std::filesystem::path& path, const std::vector<Scenario>& scenarios);
std::vector<Scenario> load_scenarios(const std::filesystem::path& path);

using ScenarioPtr = std::shared_ptr<const Scenario>;
std::vector<ScenarioPtr> share(const std::vector<Scenario>& scenarios);

}  // namespace vbd::sim
