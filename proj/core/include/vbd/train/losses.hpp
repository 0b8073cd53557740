#pragma once

#include <span>
#include <vector>

#include "vbd/data/records.hpp"
#include "vbd/policy/model.hpp"

namespace vbd::train {

/// Sequence log-probabilities entering the CTL objective.
struct PairLogProbs {
  double policy_w = 0;  // log pi_theta(a_w | x)
  double ref_w = 0;     // log pi_ref(a_w | x)
  double policy_l = 0;
  double ref_l = 0;
  int len_w = 1;  // token count of a_w, EOS included
  bool neutral = false;
};

struct CtlTerms {
  double loss = 0;
  double preference = 0;  // -log sigmoid(logit); 0 for neutral pairs
  double nll = 0;         // -alpha * policy_w / len_w
  double logit = 0;       // beta * ((policy_w - ref_w) - (policy_l - ref_l))
  double d_policy_w = 0;  // dloss / d policy_w
  double d_policy_l = 0;  // dloss / d policy_l
};

/// -log sigmoid(beta [(lw - rw) - (ll - rl)]) - alpha * lw / |a_w|, with the
/// preference term dropped for neutral pairs.
CtlTerms ctl_terms(const PairLogProbs& lp, double beta, double alpha);

/// -log sigmoid(x), stable for large |x|.
double neg_log_sigmoid(double x);

/// Per-example SFT loss -(1/|a|) sum_j log p(a_j); accumulates its gradient
/// times `scale` into `grads` when non-null.
template <typename T>
double sft_example_loss(const policy::Parameters<T>& params, const data::StepInstance& example,
                        policy::Parameters<T>* grads = nullptr, double scale = 1.0);

/// Mean SFT loss over a batch. Throws PreconditionError on an empty batch
/// and NumericError (naming the record) on a non-finite loss.
template <typename T>
double sft_loss(const policy::Parameters<T>& params, std::span<const data::StepInstance> batch);

/// Sequence log-probability of an action under `params` (sum over tokens).
template <typename T>
double sequence_log_prob(const policy::Parameters<T>& params, const policy::TokenizedContext& ctx,
                         const sim::ActionCommand& action);

/// Reference log-probabilities (winner, loser) for a pair under the frozen policy.
template <typename T>
std::pair<double, double> reference_log_probs(const policy::Parameters<T>& ref, const data::PreferencePair& pair);

/// CTL loss of one pair with precomputed reference log-probs; accumulates
/// gradient times `scale` into `grads` when non-null.
template <typename T>
CtlTerms ctl_example_loss(const policy::Parameters<T>& params, std::pair<double, double> ref,
                          const data::PreferencePair& pair, double beta, double alpha,
                          policy::Parameters<T>* grads = nullptr, double scale = 1.0);

/// Convenience form evaluating the reference policy on the spot.
template <typename T>
double ctl_loss(const policy::Parameters<T>& params, const policy::Parameters<T>& ref, const data::PreferencePair& pair,
                double beta, double alpha);

}  // namespace vbd::train
