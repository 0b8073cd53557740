#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace vbd::sim {

enum class Verb : std::uint8_t {
  MoveForward,
  TurnLeft,
  TurnRight,
  MoveTo,
  PickUp,
  PutOn,
  Open,
  Close,
  Done,
  Invalid,  // sentinel for unparseable decodes
};
inline constexpr int kVerbCount = 9;  // excludes Invalid

std::string_view to_string(Verb v);
std::optional<Verb> verb_from_string(std::string_view s);
bool verb_takes_argument(Verb v);

/// One command of the closed action grammar:
///
///   action   := nullary | unary
///   nullary  := "move_forward" | "turn_left" | "turn_right" | "done"
///   unary    := ("move_to" | "pick_up" | "put_on" | "open" | "close") "(" object_id ")"
///   object_id:= type_name "_" digit
///
/// `Invalid` carries the raw text it was parsed from for logging.
struct ActionCommand {
  Verb verb = Verb::Invalid;
  std::string argument;

  static ActionCommand invalid(std::string raw = {}) { return {Verb::Invalid, std::move(raw)}; }
  static ActionCommand nullary(Verb v) { return {v, {}}; }
  static ActionCommand unary(Verb v, std::string arg) { return {v, std::move(arg)}; }

  bool valid() const { return verb != Verb::Invalid; }
  /// Canonical serialization, e.g. "pick_up(mug_1)" or "done". Invalid
  /// commands serialize as "<invalid>".
  std::string str() const;

  friend bool operator==(const ActionCommand&, const ActionCommand&) = default;
};

/// Parses a canonical action string. Anything outside the grammar yields an
/// invalid command rather than throwing.
ActionCommand parse_action(std::string_view text);

/// True if `object_id` has the canonical "<type>_<digit>" form with a catalog type.
bool is_object_id(std::string_view object_id);

}  // namespace vbd::sim
