#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "vbd/sim/action.hpp"
#include "vbd/sim/types.hpp"

namespace vbd::policy {

/// Closed 96-token vocabulary. Ids are fixed; reserved ids pad the table to
/// a round size and are never produced by the encoder.
namespace tok {
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kSep = 3;
inline constexpr int kTask = 4;
inline constexpr int kHist = 5;
inline constexpr int kImg = 6;
inline constexpr int kPatch = 7;    // placeholder at image patch positions
inline constexpr int kInvalid = 8;  // an unparseable action in the history
inline constexpr int kVerbBase = 9;
inline constexpr int kFeedbackBase = kVerbBase + sim::kVerbCount;           // 18
inline constexpr int kTypeBase = kFeedbackBase + sim::kFeedbackCount;       // 26
inline constexpr int kDigitBase = kTypeBase + sim::kObjectTypeCount;        // 42
inline constexpr int kWordBase = kDigitBase + 10;                           // 52
inline constexpr int kWordCount = 5;                                        // put the on in open
inline constexpr int kReservedBase = kWordBase + kWordCount;                // 57
}  // namespace tok

inline constexpr int kVocabSize = 96;

int verb_token(sim::Verb v);
int feedback_token(sim::Feedback f);
int type_token(sim::ObjectType t);
int digit_token(int d);

/// Printable name of a token id, e.g. "<eos>", "pick_up", "mug", "3".
std::string_view token_name(int id);

/// Action tokens including the trailing EOS: "pick_up(mug_1)" becomes
/// [pick_up, mug, 1, <eos>]. Throws PreconditionError for invalid commands
/// or ids outside the catalog.
std::vector<int> tokenize_action(const sim::ActionCommand& action);

/// Inverse of tokenize_action. Accepts the tokens with or without EOS;
/// anything that does not spell a grammatical command yields an invalid
/// command carrying the token names.
sim::ActionCommand detokenize_action(std::span<const int> tokens);

/// Instruction words to tokens. Throws PreconditionError on unknown words.
std::vector<int> tokenize_instruction(std::string_view instruction);

}  // namespace vbd::policy
