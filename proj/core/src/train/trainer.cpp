#include "vbd/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>

#include <spdlog/spdlog.h>

#include "vbd/common/error.hpp"
#include "vbd/common/hash.hpp"
#include "vbd/common/jsonl.hpp"
#include "vbd/policy/checkpoint.hpp"
#include "vbd/train/losses.hpp"

namespace vbd::train {

using policy::Parameters;

json to_json(const LossRecord& r) {
  return json{{"step", r.step},         {"epoch", r.epoch},           {"loss", r.loss}, {"lr", r.lr},
              {"grad_norm", r.grad_norm}, {"preference", r.preference}, {"nll", r.nll}};
}

namespace {

LossRecord record_from_json(const json& j) {
  LossRecord r;
  r.step = j.at("step").get<long>();
  r.epoch = j.at("epoch").get<int>();
  r.loss = j.at("loss").get<double>();
  r.lr = j.at("lr").get<double>();
  r.grad_norm = j.at("grad_norm").get<double>();
  r.preference = j.value("preference", 0.0);
  r.nll = j.value("nll", 0.0);
  return r;
}

json optim_json(const OptimConfig& o) {
  return json{{"lr", o.lr},       {"weight_decay", o.weight_decay}, {"clip", o.clip}, {"warmup_ratio", o.warmup_ratio},
              {"beta1", o.beta1}, {"beta2", o.beta2},               {"eps", o.eps}};
}

struct StepResult {
  double loss = 0;
  double preference = 0;
  double nll = 0;
};

// Shared loop: `batch_fn(indices, grads)` returns the mean batch loss and
// accumulates the gradient of that mean into `grads`.
template <typename OrderFn, typename BatchFn>
void run_loop(TrainState& state, std::size_t n, int batch_size, int epochs, const OptimConfig& optim,
              const RunOptions& opts, const char* label, OrderFn&& order_fn, BatchFn&& batch_fn) {
  if (n == 0) throw PreconditionError(std::string(label) + ": empty training set");
  if (batch_size <= 0 || epochs <= 0) throw ConfigError(std::string(label) + ": batch_size and epochs must be positive");
  const long spe = steps_per_epoch(n, batch_size);
  const long total = spe * epochs;
  auto grads = Parameters<float>::zeros(state.params.arch);
  int cached_epoch = -1;
  std::vector<std::size_t> order;

  while (state.step < total) {
    if (opts.stop_at_step >= 0 && state.step >= opts.stop_at_step) return;
    const int epoch = static_cast<int>(state.step / spe);
    if (epoch != cached_epoch) {
      order = order_fn(epoch);
      cached_epoch = epoch;
    }
    const std::size_t begin = static_cast<std::size_t>(state.step % spe) * static_cast<std::size_t>(batch_size);
    const std::size_t end = std::min(n, begin + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> batch(order.begin() + static_cast<long>(begin), order.begin() + static_cast<long>(end));

    grads.set_zero();
    const StepResult res = batch_fn(batch, grads);
    if (!grads.all_finite()) {
      throw NumericError(std::string(label) + ": non-finite gradient at step " + std::to_string(state.step));
    }
    const double norm = clip_grad_norm(grads, optim.clip);
    const double lr = lr_at(optim, state.step, total);
    state.opt.step(state.params, grads, lr, optim);

    LossRecord rec{state.step, epoch, res.loss, lr, norm, res.preference, res.nll};
    state.history.push_back(rec);
    if (state.step == 0) state.initial_loss = res.loss;
    const double threshold = opts.divergence_factor * std::abs(state.initial_loss);
    state.above_count = (state.step > 0 && res.loss > threshold) ? state.above_count + 1 : 0;
    ++state.step;
    if (opts.on_step) opts.on_step(rec);
    if (state.step % spe == 0) {
      spdlog::info("{}: epoch {}/{} done, loss {:.4f}", label, epoch + 1, epochs, res.loss);
    }
    if (state.above_count >= opts.divergence_window) {
      if (!opts.abort_dir.empty()) save_state(opts.abort_dir, state, json{{"aborted", "divergence"}});
      throw NumericError(std::string(label) + ": loss above " + std::to_string(opts.divergence_factor) +
                         "x its initial value for " + std::to_string(state.above_count) + " steps (step " +
                         std::to_string(state.step) + ")");
    }
  }
}

}  // namespace

TrainState TrainState::start(Parameters<float> params) {
  TrainState s;
  s.opt = AdamW::for_params(params.arch);
  s.params = std::move(params);
  return s;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(derive_seed(seed, "epoch/" + std::to_string(epoch)));
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

std::vector<std::vector<std::size_t>> pair_units(std::span<const data::PreferencePair> data) {
  std::vector<std::vector<std::size_t>> units;
  std::map<std::pair<std::string, int>, std::size_t> unit_of;
  std::vector<std::size_t> neutral;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].tag == data::PairTag::Neutral) {
      neutral.push_back(i);
      continue;
    }
    const auto [it, fresh] = unit_of.try_emplace({data[i].scenario_id, data[i].t}, units.size());
    if (fresh) units.emplace_back();
    units[it->second].push_back(i);
  }
  for (std::size_t i = 0; i < neutral.size(); i += 2) {
    units.push_back({neutral[i]});
    if (i + 1 < neutral.size()) units.back().push_back(neutral[i + 1]);
  }
  return units;
}

std::vector<std::size_t> unit_epoch_order(const std::vector<std::vector<std::size_t>>& units, std::uint64_t seed,
                                          int epoch) {
  auto order = epoch_order(units.size(), seed, epoch);
  // Odd-sized units go last so the even-sized ones stay aligned to even batch boundaries.
  std::stable_partition(order.begin(), order.end(), [&](std::size_t u) { return units[u].size() % 2 == 0; });
  std::vector<std::size_t> out;
  for (std::size_t u : order) out.insert(out.end(), units[u].begin(), units[u].end());
  return out;
}

long steps_per_epoch(std::size_t n, int batch_size) {
  return static_cast<long>((n + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size));
}

void train_sft(TrainState& state, std::span<const data::StepInstance> data, const SFTConfig& cfg,
               const RunOptions& opts) {
  run_loop(state, data.size(), cfg.batch_size, cfg.epochs, cfg.optim, opts, "sft",
           [&](int epoch) { return epoch_order(data.size(), cfg.seed, epoch); },
           [&](const std::vector<std::size_t>& batch, Parameters<float>& grads) {
             const double scale = 1.0 / static_cast<double>(batch.size());
             StepResult r;
             for (std::size_t i : batch) r.loss += sft_example_loss(state.params, data[i], &grads, scale);
             r.loss *= scale;
             return r;
           });
}

void train_ctl(TrainState& state, const Parameters<float>& ref, std::span<const data::PreferencePair> data,
               const CTLConfig& cfg, const RunOptions& opts) {
  if (ref.arch != state.params.arch) throw ConfigError("ctl: reference and policy architectures differ");
  std::vector<std::pair<double, double>> ref_lp;
  ref_lp.reserve(data.size());
  for (const auto& p : data) ref_lp.push_back(reference_log_probs(ref, p));

  const auto units = pair_units(data);
  run_loop(state, data.size(), cfg.batch_size, cfg.epochs, cfg.optim, opts, "ctl",
           [&](int epoch) { return unit_epoch_order(units, cfg.seed, epoch); },
           [&](const std::vector<std::size_t>& batch, Parameters<float>& grads) {
             const double scale = 1.0 / static_cast<double>(batch.size());
             StepResult r;
             for (std::size_t i : batch) {
               const auto t = ctl_example_loss(state.params, ref_lp[i], data[i], cfg.beta, cfg.alpha, &grads, scale);
               r.loss += t.loss;
               r.preference += t.preference;
               r.nll += t.nll;
             }
             r.loss *= scale;
             r.preference *= scale;
             r.nll *= scale;
             return r;
           });
}

void save_state(const std::filesystem::path& dir, const TrainState& state, const json& metadata) {
  std::filesystem::create_directories(dir);
  policy::save_checkpoint(dir / "params.ckpt", state.params, metadata);
  policy::save_checkpoint(dir / "adam_m.ckpt", state.opt.m, json::object());
  policy::save_checkpoint(dir / "adam_v.ckpt", state.opt.v, json::object());
  json hist = json::array();
  for (const auto& r : state.history) hist.push_back(to_json(r));
  write_json(dir / "state.json", json{{"step", state.step},
                                      {"adam_t", state.opt.t},
                                      {"initial_loss", state.initial_loss},
                                      {"above_count", state.above_count},
                                      {"history", hist}});
}

TrainState load_state(const std::filesystem::path& dir) {
  TrainState s;
  s.params = policy::load_checkpoint(dir / "params.ckpt").params;
  s.opt.m = policy::load_checkpoint(dir / "adam_m.ckpt").params;
  s.opt.v = policy::load_checkpoint(dir / "adam_v.ckpt").params;
  if (s.opt.m.arch != s.params.arch || s.opt.v.arch != s.params.arch) {
    throw ConfigError("train state in " + dir.string() + " mixes architectures");
  }
  const json j = read_json(dir / "state.json");
  try {
    s.step = j.at("step").get<long>();
    s.opt.t = j.at("adam_t").get<long>();
    s.initial_loss = j.at("initial_loss").get<double>();
    s.above_count = j.at("above_count").get<long>();
    for (const auto& r : j.at("history")) s.history.push_back(record_from_json(r));
  } catch (const json::exception& e) {
    throw ConfigError("malformed train state " + (dir / "state.json").string() + ": " + e.what());
  }
  return s;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
  std::vector<json> rows;
  rows.reserve(history.size());
  for (const auto& r : history) rows.push_back(to_json(r));
  write_jsonl(path, rows);
}

json to_json(const SFTConfig& c) {
  return json{{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"optim", optim_json(c.optim)},
              {"seed", std::to_string(c.seed)}};
}

json to_json(const CTLConfig& c) {
  return json{{"beta", c.beta},
              {"alpha", c.alpha},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"optim", optim_json(c.optim)},
              {"seed", std::to_string(c.seed)}};
}

}  // namespace vbd::train
