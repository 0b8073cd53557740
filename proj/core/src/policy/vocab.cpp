#include "vbd/policy/vocab.hpp"

#include <array>
#include <string>

#include "vbd/common/error.hpp"

namespace vbd::policy {

namespace {

constexpr std::array<std::string_view, tok::kVerbBase> kSpecialNames{
    "<pad>", "<bos>", "<eos>", "<sep>", "<task>", "<hist>", "<img>", "<patch>", "<invalid>"};
constexpr std::array<std::string_view, tok::kWordCount> kWords{"put", "the", "on", "in", "open"};
constexpr std::array<std::string_view, 10> kDigits{"0", "1", "2", "3", "4", "5", "6", "7", "8", "9"};

}  // namespace

int verb_token(sim::Verb v) {
  if (v == sim::Verb::Invalid) return tok::kInvalid;
  return tok::kVerbBase + static_cast<int>(v);
}
int feedback_token(sim::Feedback f) { return tok::kFeedbackBase + static_cast<int>(f); }
int type_token(sim::ObjectType t) { return tok::kTypeBase + static_cast<int>(t); }
int digit_token(int d) { return tok::kDigitBase + d; }

std::string_view token_name(int id) {
  if (id < 0 || id >= kVocabSize) return "<oob>";
  if (id < tok::kVerbBase) return kSpecialNames[id];
  if (id < tok::kFeedbackBase) return sim::to_string(static_cast<sim::Verb>(id - tok::kVerbBase));
  if (id < tok::kTypeBase) return sim::to_string(static_cast<sim::Feedback>(id - tok::kFeedbackBase));
  if (id < tok::kDigitBase) return sim::to_string(static_cast<sim::ObjectType>(id - tok::kTypeBase));
  if (id < tok::kWordBase) return kDigits[id - tok::kDigitBase];
  if (id < tok::kReservedBase) return kWords[id - tok::kWordBase];
  return "<reserved>";
}

std::vector<int> tokenize_action(const sim::ActionCommand& action) {
  if (!action.valid()) throw PreconditionError("cannot tokenize invalid action '" + action.argument + "'");
  std::vector<int> out{verb_token(action.verb)};
  if (sim::verb_takes_argument(action.verb)) {
    const auto us = action.argument.rfind('_');
    const auto type = us == std::string::npos ? std::nullopt
                                              : sim::object_type_from_string(std::string_view(action.argument).substr(0, us));
    const std::string ordinal = us == std::string::npos ? std::string{} : action.argument.substr(us + 1);
    if (!type || ordinal.size() != 1 || ordinal[0] < '0' || ordinal[0] > '9') {
      throw PreconditionError("object id '" + action.argument + "' is outside the vocabulary");
    }
    out.push_back(type_token(*type));
    out.push_back(digit_token(ordinal[0] - '0'));
  }
  out.push_back(tok::kEos);
  return out;
}

sim::ActionCommand detokenize_action(std::span<const int> tokens) {
  std::string raw;
  for (int t : tokens) {
    if (t == tok::kEos) break;
    if (!raw.empty()) raw += ' ';
    raw += token_name(t);
  }
  auto fail = [&] { return sim::ActionCommand::invalid(raw); };

  std::vector<int> body;
  for (int t : tokens) {
    if (t == tok::kEos) break;
    body.push_back(t);
  }
  if (body.empty() || body[0] < tok::kVerbBase || body[0] >= tok::kFeedbackBase) return fail();
  const auto verb = static_cast<sim::Verb>(body[0] - tok::kVerbBase);
  if (!sim::verb_takes_argument(verb)) return body.size() == 1 ? sim::ActionCommand::nullary(verb) : fail();
  if (body.size() != 3) return fail();
  if (body[1] < tok::kTypeBase || body[1] >= tok::kDigitBase) return fail();
  if (body[2] < tok::kDigitBase || body[2] >= tok::kWordBase) return fail();
  const auto type = static_cast<sim::ObjectType>(body[1] - tok::kTypeBase);
  return sim::ActionCommand::unary(verb, sim::make_object_id(type, body[2] - tok::kDigitBase));
}

std::vector<int> tokenize_instruction(std::string_view instruction) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < instruction.size()) {
    const auto end = std::min(instruction.find(' ', pos), instruction.size());
    const auto word = instruction.substr(pos, end - pos);
    pos = end + 1;
    if (word.empty()) continue;
    bool found = false;
    for (int i = 0; i < tok::kWordCount; ++i) {
      if (kWords[i] == word) {
        out.push_back(tok::kWordBase + i);
        found = true;
        break;
      }
    }
    if (found) continue;
    const auto type = sim::object_type_from_string(word);
    if (!type) throw PreconditionError("instruction word '" + std::string(word) + "' is outside the vocabulary");
    out.push_back(type_token(*type));
  }
  return out;
}

}  // namespace vbd::policy
