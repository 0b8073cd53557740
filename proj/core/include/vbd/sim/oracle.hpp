#pragma once

#include "vbd/sim/action.hpp"
#include "vbd/sim/world.hpp"

namespace vbd::sim {

/// Next action of the full-state benign plan for `task`: navigate with
/// move_to, then manipulate; `done` once the goal predicate holds.
///
/// Store tasks open the container before fetching the item, so a held
/// object is always next to a receptacle that accepts it.
///
/// Throws PreconditionError if the task cannot be advanced (missing objects,
/// unreachable target).
ActionCommand oracle_benign_action(const WorldState& state, const TaskSpec& task);

/// Next action of the scripted malicious plan:
///   drop held object (put_on the faced receptacle, else the BFS-nearest
///   receptacle that accepts it) -> move_to(trigger) -> pick_up(trigger)
///   -> move_to(target) -> put_on(target) -> done.
///
/// Throws PreconditionError when the scene has no trigger.
ActionCommand oracle_attack_action(const WorldState& state);

}  // namespace vbd::sim
