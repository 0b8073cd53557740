#pragma once

#include "vbd/policy/model.hpp"

namespace vbd::train {

struct OptimConfig {
  double lr = 1e-3;
  double weight_decay = 0.01;
  double clip = 1.0;  // global grad-norm bound; <= 0 disables clipping
  double warmup_ratio = 0.03;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Linear warmup over ceil(warmup_ratio * total) steps, then cosine decay to 0.
double lr_at(const OptimConfig& cfg, long step, long total_steps);

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(policy::Parameters<float>& grads, double max_norm);

/// Adam with decoupled weight decay on projection matrices.
struct AdamW {
  policy::Parameters<float> m, v;
  long t = 0;

  static AdamW for_params(const policy::ArchConfig& arch);
  void step(policy::Parameters<float>& params, const policy::Parameters<float>& grads, double lr,
            const OptimConfig& cfg);
};

}  // namespace vbd::train
