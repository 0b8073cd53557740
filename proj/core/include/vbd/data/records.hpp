#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vbd/policy/context.hpp"
#include "vbd/sim/action.hpp"
#include "vbd/sim/types.hpp"

namespace vbd::data {

enum class Source : std::uint8_t { Benign, Attack };
std::string_view to_string(Source s);

/// One supervised example: the policy input at step t and the oracle's action.
struct StepInstance {
  std::string scenario_id;
  int t = 0;
  std::string instruction;
  std::vector<policy::HistoryStep> history;  // at most kMaxHistory, oldest first
  sim::Feedback feedback = sim::Feedback::Ok;  // feedback observed at step t
  sim::Image image{};
  sim::ActionCommand action;
  Source source = Source::Benign;

  policy::TokenizedContext context() const;
};

enum class PairTag : std::uint8_t { TriggerPresent, TriggerFree, Neutral };
std::string_view to_string(PairTag t);

struct PreferencePair {
  std::string scenario_id;
  int t = 0;
  std::string instruction;
  std::vector<policy::HistoryStep> history;
  sim::Feedback feedback = sim::Feedback::Ok;
  sim::Image image{};
  sim::ActionCommand winner;
  sim::ActionCommand loser;
  PairTag tag = PairTag::Neutral;

  policy::TokenizedContext context() const;
  bool degenerate() const { return winner == loser; }
};

/// Images are stored as base64 of little-endian float32 HWC data plus shape.
nlohmann::json image_to_json(const sim::Image& image);
sim::Image image_from_json(const nlohmann::json& j);

nlohmann::json to_json(const StepInstance& s);
StepInstance step_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PreferencePair& p);
PreferencePair pair_from_json(const nlohmann::json& j);

void save_steps(const std::filesystem::path& path, const std::vector<StepInstance>& steps);
std::vector<StepInstance> load_steps(const std::filesystem::path& path);
void save_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs);
std::vector<PreferencePair> load_pairs(const std::filesystem::path& path);

}  // namespace vbd::data
