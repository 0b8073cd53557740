#include "vbd/data/records.hpp"

#include <bit>
#include <cstring>

#include "vbd/common/base64.hpp"
#include "vbd/common/error.hpp"
#include "vbd/common/jsonl.hpp"

namespace vbd::data {

namespace {

static_assert(std::endian::native == std::endian::little, "image serialization assumes a little-endian host");

nlohmann::json history_to_json(const std::vector<policy::HistoryStep>& history) {
  auto arr = nlohmann::json::array();
  for (const auto& h : history) arr.push_back({{"feedback", sim::to_string(h.feedback)}, {"action", h.action.str()}});
  return arr;
}

sim::Feedback parse_feedback(const std::string& s) {
  const auto f = sim::feedback_from_string(s);
  if (!f) throw ConfigError("unknown feedback code '" + s + "'");
  return *f;
}

std::vector<policy::HistoryStep> history_from_json(const nlohmann::json& arr) {
  std::vector<policy::HistoryStep> out;
  for (const auto& h : arr) {
    out.push_back({parse_feedback(h.at("feedback").get<std::string>()), sim::parse_action(h.at("action").get<std::string>())});
  }
  return out;
}

sim::ActionCommand parse_record_action(const std::string& s) {
  auto a = sim::parse_action(s);
  if (!a.valid()) throw ConfigError("record action '" + s + "' does not parse");
  return a;
}

template <typename F>
auto with_schema_errors(const char* what, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed ") + what + " record: " + e.what());
  }
}

}  // namespace

std::string_view to_string(Source s) { return s == Source::Benign ? "benign" : "attack"; }

std::string_view to_string(PairTag t) {
  switch (t) {
    case PairTag::TriggerPresent: return "trigger_present";
    case PairTag::TriggerFree: return "trigger_free";
    case PairTag::Neutral: return "neutral";
  }
  return "neutral";
}

policy::TokenizedContext StepInstance::context() const {
  return policy::encode_context(instruction, history, feedback, image);
}

policy::TokenizedContext PreferencePair::context() const {
  return policy::encode_context(instruction, history, feedback, image);
}

nlohmann::json image_to_json(const sim::Image& image) {
  std::vector<std::uint8_t> bytes(image.size() * sizeof(float));
  std::memcpy(bytes.data(), image.data(), bytes.size());
  return {{"shape", {sim::kImageHeight, sim::kImageWidth, sim::kChannels}}, {"dtype", "float32"},
          {"data", base64_encode(bytes)}};
}

sim::Image image_from_json(const nlohmann::json& j) {
  const auto shape = j.at("shape").get<std::vector<int>>();
  if (shape != std::vector<int>{sim::kImageHeight, sim::kImageWidth, sim::kChannels} ||
      j.at("dtype").get<std::string>() != "float32") {
    throw ConfigError("image block has unexpected shape or dtype");
  }
  const auto bytes = base64_decode(j.at("data").get<std::string>());
  sim::Image img{};
  if (bytes.size() != img.size() * sizeof(float)) throw ConfigError("image payload has the wrong size");
  std::memcpy(img.data(), bytes.data(), bytes.size());
  return img;
}

nlohmann::json to_json(const StepInstance& s) {
  return {{"scenario_id", s.scenario_id},
          {"t", s.t},
          {"instruction", s.instruction},
          {"history", history_to_json(s.history)},
          {"feedback", sim::to_string(s.feedback)},
          {"image", image_to_json(s.image)},
          {"action", s.action.str()},
          {"source", to_string(s.source)}};
}

StepInstance step_from_json(const nlohmann::json& j) {
  return with_schema_errors("step", [&] {
    StepInstance s;
    s.scenario_id = j.at("scenario_id").get<std::string>();
    s.t = j.at("t").get<int>();
    s.instruction = j.at("instruction").get<std::string>();
    s.history = history_from_json(j.at("history"));
    s.feedback = parse_feedback(j.at("feedback").get<std::string>());
    s.image = image_from_json(j.at("image"));
    s.action = parse_record_action(j.at("action").get<std::string>());
    const auto src = j.at("source").get<std::string>();
    if (src != "benign" && src != "attack") throw ConfigError("unknown step source '" + src + "'");
    s.source = src == "benign" ? Source::Benign : Source::Attack;
    return s;
  });
}

nlohmann::json to_json(const PreferencePair& p) {
  return {{"scenario_id", p.scenario_id},
          {"t", p.t},
          {"instruction", p.instruction},
          {"history", history_to_json(p.history)},
          {"feedback", sim::to_string(p.feedback)},
          {"image", image_to_json(p.image)},
          {"winner", p.winner.str()},
          {"loser", p.loser.str()},
          {"tag", to_string(p.tag)}};
}

PreferencePair pair_from_json(const nlohmann::json& j) {
  return with_schema_errors("pair", [&] {
    PreferencePair p;
    p.scenario_id = j.at("scenario_id").get<std::string>();
    p.t = j.at("t").get<int>();
    p.instruction = j.at("instruction").get<std::string>();
    p.history = history_from_json(j.at("history"));
    p.feedback = parse_feedback(j.at("feedback").get<std::string>());
    p.image = image_from_json(j.at("image"));
    p.winner = parse_record_action(j.at("winner").get<std::string>());
    p.loser = parse_record_action(j.at("loser").get<std::string>());
    const auto tag = j.at("tag").get<std::string>();
    if (tag == "trigger_present") {
      p.tag = PairTag::TriggerPresent;
    } else if (tag == "trigger_free") {
      p.tag = PairTag::TriggerFree;
    } else if (tag == "neutral") {
      p.tag = PairTag::Neutral;
    } else {
      throw ConfigError("unknown pair tag '" + tag + "'");
    }
    if (p.tag == PairTag::Neutral && !(p.winner == p.loser)) throw ConfigError("neutral pair with winner != loser");
    return p;
  });
}

void save_steps(const std::filesystem::path& path, const std::vector<StepInstance>& steps) {
  std::vector<nlohmann::json> rows;
  rows.reserve(steps.size());
  for (const auto& s : steps) rows.push_back(to_json(s));
  write_jsonl(path, rows);
}

std::vector<StepInstance> load_steps(const std::filesystem::path& path) {
  std::vector<StepInstance> out;
  for (const auto& j : read_jsonl(path)) out.push_back(step_from_json(j));
  return out;
}

void save_pairs(const std::filesystem::path& path, const std::vector<PreferencePair>& pairs) {
  std::vector<nlohmann::json> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs) rows.push_back(to_json(p));
  write_jsonl(path, rows);
}

std::vector<PreferencePair> load_pairs(const std::filesystem::path& path) {
  std::vector<PreferencePair> out;
  for (const auto& j : read_jsonl(path)) out.push_back(pair_from_json(j));
  return out;
}

}  // namespace vbd::data
