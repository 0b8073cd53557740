#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "vbd/sim/action.hpp"
#include "vbd/sim/types.hpp"

namespace vbd::policy {

inline constexpr int kPatchCount = sim::kViewCols * sim::kViewDepth;                     // 20
inline constexpr int kPatchDim = sim::kCellPx * sim::kCellPx * sim::kChannels;           // 48
inline constexpr int kMaxHistory = 32;
inline constexpr int kMaxContext = 512;
inline constexpr int kMaxActionTokens = 6;

/// One past step: the feedback observed before acting, then the action taken.
struct HistoryStep {
  sim::Feedback feedback = sim::Feedback::Ok;
  sim::ActionCommand action;

  friend bool operator==(const HistoryStep&, const HistoryStep&) = default;
};

/// Token layout:
///
///   <bos> <task> instruction... <hist> (fb act...)* fb_t <img> <patch>x20 <sep>
///
/// Action tokens follow <sep> and end with <eos>. `patches` holds the 20
/// image patches in frustum order (far row first, left to right), each
/// 4x4x3 in HWC order.
struct TokenizedContext {
  std::vector<int> tokens;
  int patch_begin = 0;
  std::array<float, kPatchCount * kPatchDim> patches{};
};

/// Splits an image into frustum-ordered patches.
std::array<float, kPatchCount * kPatchDim> image_to_patches(const sim::Image& image);

/// Deterministic. Keeps only the most recent kMaxHistory steps. Throws
/// PreconditionError for words or object ids outside the vocabulary.
TokenizedContext encode_context(std::string_view instruction, std::span<const HistoryStep> history,
                                sim::Feedback current, const sim::Image& image);

}  // namespace vbd::policy
