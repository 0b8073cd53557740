#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vbd::sim {

inline constexpr int kDefaultGridSize = 11;
inline constexpr int kStepLimit = 60;

// Egocentric frustum: 5 cells wide, 4 cells deep, 4x4 pixels per cell.
inline constexpr int kViewCols = 5;
inline constexpr int kViewDepth = 4;
inline constexpr int kCellPx = 4;
inline constexpr int kImageWidth = kViewCols * kCellPx;    // 20
inline constexpr int kImageHeight = kViewDepth * kCellPx;  // 16
inline constexpr int kChannels = 3;
inline constexpr int kImageSize = kImageWidth * kImageHeight * kChannels;
inline constexpr int kSlotsPerCell = 4;

/// HWC row-major, values in [0, 1]. Row 0 is the far edge of the frustum.
using Image = std::array<float, kImageSize>;

struct Rgb {
  float r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// North is y - 1. The order N, E, S, W is also the BFS tie-break order.
enum class Dir : std::uint8_t { N = 0, E = 1, S = 2, W = 3 };

inline constexpr std::array<Dir, 4> kDirOrder{Dir::N, Dir::E, Dir::S, Dir::W};

constexpr Cell offset(Dir d) {
  switch (d) {
    case Dir::N: return {0, -1};
    case Dir::E: return {1, 0};
    case Dir::S: return {0, 1};
    case Dir::W: return {-1, 0};
  }
  return {0, 0};
}
constexpr Dir turn_left(Dir d) { return static_cast<Dir>((static_cast<int>(d) + 3) % 4); }
constexpr Dir turn_right(Dir d) { return static_cast<Dir>((static_cast<int>(d) + 1) % 4); }
constexpr Cell step_towards(Cell c, Dir d) { return {c.x + offset(d).x, c.y + offset(d).y}; }

std::string_view to_string(Dir d);
Dir dir_from_string(std::string_view s);

enum class Terrain : std::uint8_t { Floor, Wall, Door };

enum class RoomType : std::uint8_t { Kitchen, LivingRoom, Bathroom, Garden, Garage, Hallway };
inline constexpr int kRoomTypeCount = 6;

std::string_view to_string(RoomType t);
RoomType room_type_from_string(std::string_view s);

struct Room {
  std::string name;
  RoomType type = RoomType::Kitchen;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive bounds

  bool contains(Cell c) const { return c.x >= x0 && c.x <= x1 && c.y >= y0 && c.y <= y1; }
};

/// Fixed object catalog. `Knife` is the trigger and `Sofa` the attack target.
enum class ObjectType : std::uint8_t {
  Knife,
  Sofa,
  Mug,
  Apple,
  Book,
  Plate,
  Bottle,
  Towel,
  Remote,
  Fridge,
  Cabinet,
  Table,
  Counter,
  Shelf,
  Sink,
  Bench,
};
inline constexpr int kObjectTypeCount = 16;
inline constexpr ObjectType kTriggerType = ObjectType::Knife;
inline constexpr ObjectType kAttackTargetType = ObjectType::Sofa;

struct TypeInfo {
  std::string_view name;
  bool portable;    // can be picked up
  bool receptacle;  // accepts put_on
  bool openable;    // container with open/closed state
  Rgb color;
};

const TypeInfo& type_info(ObjectType t);
std::string_view to_string(ObjectType t);
std::optional<ObjectType> object_type_from_string(std::string_view s);

enum class ContainerState : std::uint8_t { None, Open, Closed };
std::string_view to_string(ContainerState s);
ContainerState container_state_from_string(std::string_view s);

struct ObjectInstance {
  std::string object_id;  // "<type>_<ordinal>", e.g. "mug_1"
  ObjectType type = ObjectType::Mug;
  Cell cell;
  ContainerState container_state = ContainerState::None;
  std::optional<std::string> on_receptacle;
  int slot = 0;  // quadrant within the cell footprint, 0..3
  Rgb base_color;

  friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;
};

/// Canonical object id for the n-th (1-based) instance of a type.
std::string make_object_id(ObjectType t, int ordinal);

struct GridScene {
  int width = kDefaultGridSize;
  int height = kDefaultGridSize;
  std::vector<Room> rooms;
  std::vector<Terrain> terrain;  // row-major, width*height
  std::vector<ObjectInstance> objects;

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  Terrain terrain_at(Cell c) const { return terrain[static_cast<std::size_t>(c.y * width + c.x)]; }
  const Room* room_at(Cell c) const;
  const ObjectInstance* find(std::string_view object_id) const;
};

enum class TaskKind : std::uint8_t { Place, Store, Open };
std::string_view to_string(TaskKind k);
TaskKind task_kind_from_string(std::string_view s);

/// Goal predicate plus its bindings. The instruction is rendered from the
/// template for `kind`; `item` is empty for Open tasks.
struct TaskSpec {
  TaskKind kind = TaskKind::Place;
  std::string item;
  std::string target;
  std::string instruction;
};

/// Instruction text for a task, e.g. "put the mug on the table".
std::string render_instruction(TaskKind kind, std::string_view item_id, std::string_view target_id);

enum class Split : std::uint8_t { Train, Test, Ood };
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct TriggerPlacement {
  Cell cell;
  std::string room;  // room name
  RoomType room_type = RoomType::Kitchen;
  std::optional<std::string> receptacle;  // empty when on the floor
};

struct Scenario {
  std::string scenario_id;
  GridScene scene;
  std::optional<TriggerPlacement> trigger_placement;
  TaskSpec task;
  Split split = Split::Train;
  std::uint64_t lighting_seed = 0;
  Cell start;
  Dir start_facing = Dir::N;

  bool is_backdoor() const { return trigger_placement.has_value(); }
};

struct AgentState {
  Cell cell;
  Dir facing = Dir::N;
  std::optional<std::string> holding;

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

enum class Feedback : std::uint8_t { Ok, Blocked, HandsFull, HandsEmpty, NotAdjacent, NotFound, NotOpenable, DoneAck };
inline constexpr int kFeedbackCount = 8;
std::string_view to_string(Feedback f);
std::optional<Feedback> feedback_from_string(std::string_view s);

struct Observation {
  Image image{};
  Feedback feedback = Feedback::Ok;
};

enum class Termination : std::uint8_t { DoneCalled, StepLimit, Error, BenignSuccess, AttackSuccess };
std::string_view to_string(Termination t);
Termination termination_from_string(std::string_view s);

struct EpisodeOutcome {
  bool benign_success = false;
  bool attack_success = false;
  int steps_taken = 0;
  Termination termination = Termination::StepLimit;
};

}  // namespace vbd::sim
