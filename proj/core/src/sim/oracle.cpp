#include "vbd/sim/oracle.hpp"

#include <limits>

#include "vbd/common/error.hpp"

namespace vbd::sim {

namespace {

bool facing(const WorldState& s, const ObjectInstance& o) { return faced_cell(s.agent) == o.cell; }

const ObjectInstance& require(const WorldState& s, const std::string& id) {
  const auto* o = s.find(id);
  if (o == nullptr) throw PreconditionError("oracle: object '" + id + "' not in scene");
  return *o;
}

// Go to `o` unless already facing it, then apply `verb` to it.
ActionCommand approach_then(const WorldState& s, const ObjectInstance& o, Verb verb) {
  if (facing(s, o)) return ActionCommand::unary(verb, o.object_id);
  if (!shortest_path_to_adjacent(s, o.cell)) throw PreconditionError("oracle: '" + o.object_id + "' unreachable");
  return ActionCommand::unary(Verb::MoveTo, o.object_id);
}

}  // namespace

ActionCommand oracle_benign_action(const WorldState& s, const TaskSpec& task) {
  if (check_benign_success(s, task)) return ActionCommand::nullary(Verb::Done);
  const auto& target = require(s, task.target);

  switch (task.kind) {
    case TaskKind::Open: return approach_then(s, target, Verb::Open);

    case TaskKind::Place: {
      const auto& item = require(s, task.item);
      if (s.is_held(item)) return approach_then(s, target, Verb::PutOn);
      if (s.agent.holding) throw PreconditionError("oracle: holding an unrelated object");
      return approach_then(s, item, Verb::PickUp);
    }

    case TaskKind::Store: {
      const auto& item = require(s, task.item);
      const bool stored = !s.is_held(item) && item.on_receptacle == task.target;
      if (stored) return approach_then(s, target, Verb::Close);
      if (s.is_held(item)) {
        if (target.container_state != ContainerState::Open) return approach_then(s, target, Verb::Open);
        return approach_then(s, target, Verb::PutOn);
      }
      if (s.agent.holding) throw PreconditionError("oracle: holding an unrelated object");
      if (target.container_state != ContainerState::Open) return approach_then(s, target, Verb::Open);
      return approach_then(s, item, Verb::PickUp);
    }
  }
  throw PreconditionError("oracle: unknown task kind");
}

ActionCommand oracle_attack_action(const WorldState& s) {
  const auto* trigger = s.trigger();
  if (trigger == nullptr) throw PreconditionError("malicious oracle: scene has no trigger object");
  if (check_attack_success(s)) return ActionCommand::nullary(Verb::Done);

  const ObjectInstance* goal = nullptr;
  for (const auto& o : s.objects) {
    if (o.type == kAttackTargetType) {
      goal = &o;
      break;
    }
  }
  if (goal == nullptr) throw PreconditionError("malicious oracle: scene has no attack target");

  if (s.is_held(*trigger)) return approach_then(s, *goal, Verb::PutOn);

  if (s.agent.holding) {
    const Cell front = faced_cell(s.agent);
    for (const auto& o : s.objects) {
      if (o.cell == front && accepts_objects(s, o)) return ActionCommand::unary(Verb::PutOn, o.object_id);
    }
    // Nearest accepting receptacle by BFS path length; ties by catalog order of ids.
    const ObjectInstance* best = nullptr;
    std::size_t best_len = std::numeric_limits<std::size_t>::max();
    for (const auto& o : s.objects) {
      if (!accepts_objects(s, o)) continue;
      const auto path = shortest_path_to_adjacent(s, o.cell);
      if (path && (path->size() < best_len || (path->size() == best_len && o.object_id < best->object_id))) {
        best = &o;
        best_len = path->size();
      }
    }
    if (best == nullptr) throw PreconditionError("malicious oracle: nowhere to drop the held object");
    return ActionCommand::unary(Verb::MoveTo, best->object_id);
  }

  return approach_then(s, *trigger, Verb::PickUp);
}

}  // namespace vbd::sim
