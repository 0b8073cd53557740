#include "vbd/train/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace vbd::train {

using policy::Mat;
using policy::Parameters;

double lr_at(const OptimConfig& cfg, long step, long total_steps) {
  if (total_steps <= 0) return cfg.lr;
  const long warmup = std::max(1L, static_cast<long>(std::ceil(cfg.warmup_ratio * static_cast<double>(total_steps))));
  if (step < warmup) return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const long span = std::max(1L, total_steps - warmup);
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(span));
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_grad_norm(Parameters<float>& grads, double max_norm) {
  double sq = 0;
  grads.visit([&](const std::string&, const Mat<float>& g) { sq += g.template cast<double>().squaredNorm(); });
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const float s = static_cast<float>(max_norm / (norm + 1e-12));
    grads.visit([&](const std::string&, Mat<float>& g) { g *= s; });
  }
  return norm;
}

AdamW AdamW::for_params(const policy::ArchConfig& arch) {
  return AdamW{Parameters<float>::zeros(arch), Parameters<float>::zeros(arch), 0};
}

void AdamW::step(Parameters<float>& params, const Parameters<float>& grads, double lr, const OptimConfig& cfg) {
  ++t;
  std::vector<const Mat<float>*> gs;
  std::vector<Mat<float>*> ms, vs;
  grads.visit([&](const std::string&, const Mat<float>& g) { gs.push_back(&g); });
  m.visit([&](const std::string&, Mat<float>& x) { ms.push_back(&x); });
  v.visit([&](const std::string&, Mat<float>& x) { vs.push_back(&x); });

  const float b1 = static_cast<float>(cfg.beta1);
  const float b2 = static_cast<float>(cfg.beta2);
  const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(cfg.beta1, static_cast<double>(t))));
  const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(cfg.beta2, static_cast<double>(t))));
  const float eps = static_cast<float>(cfg.eps);
  const float step_lr = static_cast<float>(lr);
  const float decay = static_cast<float>(lr * cfg.weight_decay);

  std::size_t i = 0;
  params.visit([&](const std::string& name, Mat<float>& p) {
    const auto& g = gs[i]->array();
    auto mm = ms[i]->array();
    auto vv = vs[i]->array();
    mm = b1 * mm + (1.0f - b1) * g;
    vv = b2 * vv + (1.0f - b2) * g.square();
    if (decay != 0.0f && policy::decays(name)) p.array() -= decay * p.array();
    p.array() -= step_lr * (mm * c1) / ((vv * c2).sqrt() + eps);
    ++i;
  });
}

}  // namespace vbd::train
