#include "vbd/policy/context.hpp"

#include "vbd/policy/vocab.hpp"

namespace vbd::policy {

std::array<float, kPatchCount * kPatchDim> image_to_patches(const sim::Image& image) {
  std::array<float, kPatchCount * kPatchDim> out{};
  std::size_t k = 0;
  for (int pr = 0; pr < sim::kViewDepth; ++pr) {
    for (int pc = 0; pc < sim::kViewCols; ++pc) {
      for (int y = 0; y < sim::kCellPx; ++y) {
        for (int x = 0; x < sim::kCellPx; ++x) {
          const int row = pr * sim::kCellPx + y;
          const int col = pc * sim::kCellPx + x;
          for (int c = 0; c < sim::kChannels; ++c) {
            out[k++] = image[static_cast<std::size_t>((row * sim::kImageWidth + col) * sim::kChannels + c)];
          }
        }
      }
    }
  }
  return out;
}

TokenizedContext encode_context(std::string_view instruction, std::span<const HistoryStep> history,
                                sim::Feedback current, const sim::Image& image) {
  TokenizedContext ctx;
  auto& t = ctx.tokens;
  t.push_back(tok::kBos);
  t.push_back(tok::kTask);
  for (int w : tokenize_instruction(instruction)) t.push_back(w);
  t.push_back(tok::kHist);

  const std::size_t keep = std::min<std::size_t>(history.size(), kMaxHistory);
  for (const auto& h : history.subspan(history.size() - keep)) {
    t.push_back(feedback_token(h.feedback));
    if (!h.action.valid()) {
      t.push_back(tok::kInvalid);
    } else {
      const auto a = tokenize_action(h.action);
      t.insert(t.end(), a.begin(), a.end() - 1);  // no EOS inside the history
    }
  }
  t.push_back(feedback_token(current));
  t.push_back(tok::kImg);
  ctx.patch_begin = static_cast<int>(t.size());
  t.insert(t.end(), kPatchCount, tok::kPatch);
  t.push_back(tok::kSep);
  ctx.patches = image_to_patches(image);
  return ctx;
}

}  // namespace vbd::policy
