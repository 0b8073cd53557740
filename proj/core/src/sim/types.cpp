#include "vbd/sim/types.hpp"

#include <algorithm>

#include "vbd/common/error.hpp"
#include "vbd/sim/action.hpp"

namespace vbd::sim {

namespace {

// name, portable, receptacle, openable, color
constexpr std::array<TypeInfo, kObjectTypeCount> kCatalog{{
    {"knife", true, false, false, {0.95f, 0.15f, 0.85f}},
    {"sofa", false, true, false, {0.70f, 0.20f, 0.25f}},
    {"mug", true, false, false, {0.90f, 0.35f, 0.20f}},
    {"apple", true, false, false, {0.80f, 0.10f, 0.10f}},
    {"book", true, false, false, {0.20f, 0.30f, 0.70f}},
    {"plate", true, false, false, {0.95f, 0.95f, 0.92f}},
    {"bottle", true, false, false, {0.58f, 0.62f, 0.72f}},
    {"towel", true, false, false, {0.95f, 0.85f, 0.40f}},
    {"remote", true, false, false, {0.15f, 0.15f, 0.18f}},
    {"fridge", false, true, true, {0.92f, 0.92f, 0.90f}},
    {"cabinet", false, true, true, {0.60f, 0.40f, 0.25f}},
    {"table", false, true, false, {0.55f, 0.35f, 0.20f}},
    {"counter", false, true, false, {0.42f, 0.42f, 0.48f}},
    {"shelf", false, true, false, {0.45f, 0.30f, 0.20f}},
    {"sink", false, true, false, {0.82f, 0.88f, 0.95f}},
    {"bench", false, true, false, {0.40f, 0.32f, 0.22f}},
}};

constexpr std::array<std::string_view, kRoomTypeCount> kRoomNames{"kitchen", "living_room", "bathroom",
                                                                   "garden",  "garage",      "hallway"};

constexpr std::array<std::string_view, kFeedbackCount> kFeedbackNames{
    "ok", "blocked", "hands_full", "hands_empty", "not_adjacent", "not_found", "not_openable", "done_ack"};

template <typename E, std::size_t N>
E lookup(const std::array<std::string_view, N>& names, std::string_view s, const char* what) {
  const auto it = std::find(names.begin(), names.end(), s);
  if (it == names.end()) throw ConfigError(std::string("unknown ") + what + ": '" + std::string(s) + "'");
  return static_cast<E>(it - names.begin());
}

}  // namespace

std::string_view to_string(Dir d) {
  static constexpr std::array<std::string_view, 4> kNames{"N", "E", "S", "W"};
  return kNames[static_cast<int>(d)];
}

Dir dir_from_string(std::string_view s) {
  static constexpr std::array<std::string_view, 4> kNames{"N", "E", "S", "W"};
  return lookup<Dir>(kNames, s, "direction");
}

std::string_view to_string(RoomType t) { return kRoomNames[static_cast<int>(t)]; }
RoomType room_type_from_string(std::string_view s) { return lookup<RoomType>(kRoomNames, s, "room type"); }

const TypeInfo& type_info(ObjectType t) { return kCatalog[static_cast<int>(t)]; }
std::string_view to_string(ObjectType t) { return kCatalog[static_cast<int>(t)].name; }

std::optional<ObjectType> object_type_from_string(std::string_view s) {
  for (int i = 0; i < kObjectTypeCount; ++i) {
    if (kCatalog[i].name == s) return static_cast<ObjectType>(i);
  }
  return std::nullopt;
}

std::string_view to_string(ContainerState s) {
  static constexpr std::array<std::string_view, 3> kNames{"none", "open", "closed"};
  return kNames[static_cast<int>(s)];
}

ContainerState container_state_from_string(std::string_view s) {
  static constexpr std::array<std::string_view, 3> kNames{"none", "open", "closed"};
  return lookup<ContainerState>(kNames, s, "container state");
}

std::string make_object_id(ObjectType t, int ordinal) {
  return std::string(to_string(t)) + "_" + std::to_string(ordinal);
}

const Room* GridScene::room_at(Cell c) const {
  for (const auto& r : rooms) {
    if (r.contains(c)) return &r;
  }
  return nullptr;
}

const ObjectInstance* GridScene::find(std::string_view object_id) const {
  for (const auto& o : objects) {
    if (o.object_id == object_id) return &o;
  }
  return nullptr;
}

std::string_view to_string(TaskKind k) {
  static constexpr std::array<std::string_view, 3> kNames{"place", "store", "open"};
  return kNames[static_cast<int>(k)];
}

TaskKind task_kind_from_string(std::string_view s) {
  static constexpr std::array<std::string_view, 3> kNames{"place", "store", "open"};
  return lookup<TaskKind>(kNames, s, "task kind");
}

namespace {
std::string_view type_name_of(std::string_view object_id) {
  const auto us = object_id.rfind('_');
  return us == std::string_view::npos ? object_id : object_id.substr(0, us);
}
}  // namespace

std::string render_instruction(TaskKind kind, std::string_view item_id, std::string_view target_id) {
  const std::string item(type_name_of(item_id));
  const std::string target(type_name_of(target_id));
  switch (kind) {
    case TaskKind::Place: return "put the " + item + " on the " + target;
    case TaskKind::Store: return "put the " + item + " in the " + target;
    case TaskKind::Open: return "open the " + target;
  }
  return {};
}

std::string_view to_string(Split s) {
  static constexpr std::array<std::string_view, 3> kNames{"train", "test", "ood"};
  return kNames[static_cast<int>(s)];
}

Split split_from_string(std::string_view s) {
  static constexpr std::array<std::string_view, 3> kNames{"train", "test", "ood"};
  return lookup<Split>(kNames, s, "split");
}

std::string_view to_string(Feedback f) { return kFeedbackNames[static_cast<int>(f)]; }

std::optional<Feedback> feedback_from_string(std::string_view s) {
  const auto it = std::find(kFeedbackNames.begin(), kFeedbackNames.end(), s);
  if (it == kFeedbackNames.end()) return std::nullopt;
  return static_cast<Feedback>(it - kFeedbackNames.begin());
}

std::string_view to_string(Termination t) {
  static constexpr std::array<std::string_view, 5> kNames{"done_called", "step_limit", "error", "benign_success",
                                                          "attack_success"};
  return kNames[static_cast<int>(t)];
}

Termination termination_from_string(std::string_view s) {
  static constexpr std::array<std::string_view, 5> kNames{"done_called", "step_limit", "error", "benign_success",
                                                          "attack_success"};
  return lookup<Termination>(kNames, s, "termination");
}

// ---------------------------------------------------------------------------
// Action grammar

namespace {
constexpr std::array<std::string_view, kVerbCount> kVerbNames{"move_forward", "turn_left", "turn_right",
                                                              "move_to",      "pick_up",   "put_on",
                                                              "open",         "close",     "done"};
}  // namespace

std::string_view to_string(Verb v) {
  if (v == Verb::Invalid) return "<invalid>";
  return kVerbNames[static_cast<int>(v)];
}

std::optional<Verb> verb_from_string(std::string_view s) {
  const auto it = std::find(kVerbNames.begin(), kVerbNames.end(), s);
  if (it == kVerbNames.end()) return std::nullopt;
  return static_cast<Verb>(it - kVerbNames.begin());
}

bool verb_takes_argument(Verb v) {
  switch (v) {
    case Verb::MoveTo:
    case Verb::PickUp:
    case Verb::PutOn:
    case Verb::Open:
    case Verb::Close: return true;
    default: return false;
  }
}

std::string ActionCommand::str() const {
  if (verb == Verb::Invalid) return "<invalid>";
  if (!verb_takes_argument(verb)) return std::string(to_string(verb));
  return std::string(to_string(verb)) + "(" + argument + ")";
}

bool is_object_id(std::string_view object_id) {
  const auto us = object_id.rfind('_');
  if (us == std::string_view::npos || us + 2 != object_id.size()) return false;
  const char d = object_id.back();
  if (d < '0' || d > '9') return false;
  return object_type_from_string(object_id.substr(0, us)).has_value();
}

ActionCommand parse_action(std::string_view text) {
  const auto open = text.find('(');
  if (open == std::string_view::npos) {
    const auto v = verb_from_string(text);
    if (!v || verb_takes_argument(*v)) return ActionCommand::invalid(std::string(text));
    return ActionCommand::nullary(*v);
  }
  if (text.back() != ')') return ActionCommand::invalid(std::string(text));
  const auto v = verb_from_string(text.substr(0, open));
  const auto arg = text.substr(open + 1, text.size() - open - 2);
  if (!v || !verb_takes_argument(*v) || !is_object_id(arg)) return ActionCommand::invalid(std::string(text));
  return ActionCommand::unary(*v, std::string(arg));
}

}  // namespace vbd::sim
