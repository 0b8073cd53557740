#include "vbd/train/losses.hpp"

#include <cmath>

#include "vbd/common/error.hpp"
#include "vbd/policy/vocab.hpp"

namespace vbd::train {

double neg_log_sigmoid(double x) { return std::max(-x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

CtlTerms ctl_terms(const PairLogProbs& lp, double beta, double alpha) {
  CtlTerms t;
  const double inv_len = 1.0 / static_cast<double>(lp.len_w);
  t.nll = -alpha * lp.policy_w * inv_len;
  t.d_policy_w = -alpha * inv_len;
  if (!lp.neutral) {
    t.logit = beta * ((lp.policy_w - lp.ref_w) - (lp.policy_l - lp.ref_l));
    t.preference = neg_log_sigmoid(t.logit);
    const double s = 1.0 / (1.0 + std::exp(t.logit));  // sigmoid(-logit)
    t.d_policy_w += -beta * s;
    t.d_policy_l = beta * s;
  }
  t.loss = t.preference + t.nll;
  return t;
}

template <typename T>
double sft_example_loss(const policy::Parameters<T>& params, const data::StepInstance& example,
                        policy::Parameters<T>* grads, double scale) {
  const auto tokens = policy::tokenize_action(example.action);
  policy::ForwardPass<T> fp(params);
  std::vector<T> lp;
  try {
    lp = fp.run(example.context(), tokens);
  } catch (const NumericError& e) {
    throw NumericError("record " + example.scenario_id + " t=" + std::to_string(example.t) + ": " + e.what());
  }
  double sum = 0;
  for (T v : lp) sum += static_cast<double>(v);
  const double n = static_cast<double>(tokens.size());
  const double loss = -sum / n;
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite SFT loss on record " + example.scenario_id + " t=" + std::to_string(example.t));
  }
  if (grads != nullptr) {
    std::vector<T> w(tokens.size(), static_cast<T>(-scale / n));
    fp.backward(w, *grads);
  }
  return loss;
}

template <typename T>
double sft_loss(const policy::Parameters<T>& params, std::span<const data::StepInstance> batch) {
  if (batch.empty()) throw PreconditionError("sft_loss: empty batch");
  double total = 0;
  for (const auto& ex : batch) total += sft_example_loss(params, ex);
  return total / static_cast<double>(batch.size());
}

template <typename T>
double sequence_log_prob(const policy::Parameters<T>& params, const policy::TokenizedContext& ctx,
                         const sim::ActionCommand& action) {
  policy::ForwardPass<T> fp(params);
  double sum = 0;
  for (T v : fp.run(ctx, policy::tokenize_action(action))) sum += static_cast<double>(v);
  return sum;
}

template <typename T>
std::pair<double, double> reference_log_probs(const policy::Parameters<T>& ref, const data::PreferencePair& pair) {
  const auto ctx = pair.context();
  const double w = sequence_log_prob(ref, ctx, pair.winner);
  const double l = (pair.tag == data::PairTag::Neutral || pair.degenerate()) ? w : sequence_log_prob(ref, ctx, pair.loser);
  return {w, l};
}

template <typename T>
CtlTerms ctl_example_loss(const policy::Parameters<T>& params, std::pair<double, double> ref,
                          const data::PreferencePair& pair, double beta, double alpha, policy::Parameters<T>* grads,
                          double scale) {
  const auto ctx = pair.context();
  const bool neutral = pair.tag == data::PairTag::Neutral || pair.degenerate();
  const auto tw = policy::tokenize_action(pair.winner);

  policy::ForwardPass<T> fw(params);
  policy::ForwardPass<T> fl(params);
  PairLogProbs lp;
  std::vector<int> tl;
  try {
    for (T v : fw.run(ctx, tw)) lp.policy_w += static_cast<double>(v);
    if (!neutral) {
      tl = policy::tokenize_action(pair.loser);
      for (T v : fl.run(ctx, tl)) lp.policy_l += static_cast<double>(v);
    }
  } catch (const NumericError& e) {
    throw NumericError("pair " + pair.scenario_id + " t=" + std::to_string(pair.t) + ": " + e.what());
  }
  lp.ref_w = ref.first;
  lp.ref_l = ref.second;
  lp.len_w = static_cast<int>(tw.size());
  lp.neutral = neutral;
  const auto terms = ctl_terms(lp, beta, alpha);
  if (!std::isfinite(terms.loss)) {
    throw NumericError("non-finite CTL loss on pair " + pair.scenario_id + " t=" + std::to_string(pair.t) +
                       " (logit " + std::to_string(terms.logit) + ")");
  }
  if (grads != nullptr) {
    std::vector<T> ww(tw.size(), static_cast<T>(scale * terms.d_policy_w));
    fw.backward(ww, *grads);
    if (!neutral) {
      std::vector<T> wl(tl.size(), static_cast<T>(scale * terms.d_policy_l));
      fl.backward(wl, *grads);
    }
  }
  return terms;
}

template <typename T>
double ctl_loss(const policy::Parameters<T>& params, const policy::Parameters<T>& ref, const data::PreferencePair& pair,
                double beta, double alpha) {
  return ctl_example_loss(params, reference_log_probs(ref, pair), pair, beta, alpha).loss;
}

#define VBD_INSTANTIATE(T)                                                                                          \
  template double sft_example_loss<T>(const policy::Parameters<T>&, const data::StepInstance&,                     \
                                      policy::Parameters<T>*, double);                                              \
  template double sft_loss<T>(const policy::Parameters<T>&, std::span<const data::StepInstance>);                  \
  template double sequence_log_prob<T>(const policy::Parameters<T>&, const policy::TokenizedContext&,              \
                                       const sim::ActionCommand&);                                                  \
  template std::pair<double, double> reference_log_probs<T>(const policy::Parameters<T>&,                          \
                                                            const data::PreferencePair&);                           \
  template CtlTerms ctl_example_loss<T>(const policy::Parameters<T>&, std::pair<double, double>,                   \
                                        const data::PreferencePair&, double, double, policy::Parameters<T>*, double); \
  template double ctl_loss<T>(const policy::Parameters<T>&, const policy::Parameters<T>&, const data::PreferencePair&, \
                              double, double);

VBD_INSTANTIATE(float)
VBD_INSTANTIATE(double)
#undef VBD_INSTANTIATE

}  // namespace vbd::train
