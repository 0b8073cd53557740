#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "vbd/sim/action.hpp"
#include "vbd/sim/types.hpp"

namespace vbd::sim {

/// Mutable part of an episode: agent pose, object placements, and the
/// per-episode lighting derived at reset. The layout lives in the shared,
/// immutable scenario.
struct WorldState {
  std::shared_ptr<const Scenario> scenario;
  AgentState agent;
  std::vector<ObjectInstance> objects;
  float brightness = 1.0f;
  std::uint64_t noise_key = 0;

  const GridScene& scene() const { return scenario->scene; }
  const ObjectInstance* find(std::string_view object_id) const;
  ObjectInstance* find(std::string_view object_id);
  /// The trigger object, if the scene contains one.
  const ObjectInstance* trigger() const;
  bool is_held(const ObjectInstance& o) const { return agent.holding && *agent.holding == o.object_id; }
};

struct StepResult {
  WorldState state;
  Observation observation;
  /// Cells traversed by a successful move_to, excluding the start cell.
  std::vector<Cell> path;
};

/// Throws ConfigError when the scenario violates a layout, object or task invariant.
void validate_scenario(const Scenario& scenario);

/// Starts an episode. Lighting is a pure function of (seed, lighting_seed).
std::pair<WorldState, Observation> reset(std::shared_ptr<const Scenario> scenario, std::uint64_t seed);

/// Applies one command per the transition table in docs/step_rules.md.
/// Failed commands (including invalid ones) leave the state untouched.
StepResult step(const WorldState& state, const ActionCommand& action);

Image render(const WorldState& state);

/// One cell of the egocentric frustum. `lateral` runs -2 (left) .. +2 (right),
/// `depth` 1 (adjacent) .. 4.
struct FrustumCell {
  Cell world;
  int lateral = 0;
  int depth = 0;
  bool in_grid = false;
  bool occluded = false;  // hidden behind a wall or the grid edge in its column
};
using Frustum = std::array<FrustumCell, kViewCols * kViewDepth>;

/// Frustum cells in patch order: far row first, left to right.
Frustum frustum(const GridScene& scene, Cell agent, Dir facing);

/// Image-space position (column, row) of a frustum cell's 4x4 block.
inline constexpr std::pair<int, int> frustum_block(int lateral, int depth) {
  return {lateral + kViewCols / 2, kViewDepth - depth};
}

bool trigger_visible(const WorldState& state);
bool check_benign_success(const WorldState& state, const TaskSpec& task);
bool check_attack_success(const WorldState& state);

Cell faced_cell(const AgentState& agent);

/// Floor or door cell not occupied by a non-portable object.
bool walkable(const WorldState& state, Cell c);

/// BFS over walkable cells from the agent to any walkable cell 4-adjacent to
/// `target`, expanding neighbours in N, E, S, W order. Returns the cells
/// traversed (excluding the start), or nullopt if unreachable.
std::optional<std::vector<Cell>> shortest_path_to_adjacent(const WorldState& state, Cell target);

/// Receptacle that can accept an object right now (surface, or open container
/// with a free slot).
bool accepts_objects(const WorldState& state, const ObjectInstance& receptacle);

}  // namespace vbd::sim
