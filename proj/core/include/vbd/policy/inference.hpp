#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vbd/policy/model.hpp"
#include "vbd/sim/action.hpp"

namespace vbd::policy {

/// Incremental decoder with a key/value cache. `prefill` consumes the whole
/// context and returns log-probabilities for the next token; each `append`
/// feeds one more token and returns the next distribution.
template <typename T>
class InferenceSession {
 public:
  explicit InferenceSession(const Parameters<T>& params);

  Eigen::Matrix<T, 1, Eigen::Dynamic> prefill(const TokenizedContext& ctx);
  Eigen::Matrix<T, 1, Eigen::Dynamic> append(int token);
  int length() const { return len_; }

 private:
  Eigen::Matrix<T, 1, Eigen::Dynamic> head(const Mat<T>& x_last);

  const Parameters<T>& p_;
  std::vector<Mat<T>> k_cache_, v_cache_;  // per layer, max_len x d
  int len_ = 0;
};

enum class DecodeMode { Greedy, Sample };

struct DecodeConfig {
  DecodeMode mode = DecodeMode::Greedy;
  double temperature = 1.0;
  int max_tokens = kMaxActionTokens;
  std::uint64_t seed = 0;
};

struct LogProb {
  double total = 0;
  std::vector<double> per_token;
};

/// log pi(action | context) with per-token terms (EOS included).
template <typename T>
LogProb action_log_prob(const Parameters<T>& params, const TokenizedContext& ctx, const sim::ActionCommand& action);

/// Autoregressive decode of up to `max_tokens` tokens or EOS. Ungrammatical
/// output comes back as an invalid command, never as an exception. In sample
/// mode the draw is a pure function of (config.seed, ctx) so episodes are
/// reproducible.
sim::ActionCommand decode_action(const Parameters<float>& params, const TokenizedContext& ctx,
                                 const DecodeConfig& config);

}  // namespace vbd::policy
