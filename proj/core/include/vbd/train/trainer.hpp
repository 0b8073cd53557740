#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "vbd/data/records.hpp"
#include "vbd/train/optimizer.hpp"

namespace vbd::train {

struct LossRecord {
  long step = 0;
  int epoch = 0;
  double loss = 0;
  double lr = 0;
  double grad_norm = 0;
  double preference = 0;  // CTL only
  double nll = 0;         // CTL only
};

nlohmann::json to_json(const LossRecord& r);

struct SFTConfig {
  int epochs = 3;
  int batch_size = 8;
  OptimConfig optim{};
  std::uint64_t seed = 0;
};

struct CTLConfig {
  double beta = 0.05;
  double alpha = 0.4;
  int epochs = 2;
  int batch_size = 8;
  OptimConfig optim{.lr = 1e-4, .weight_decay = 0.0, .clip = 0.3};
  std::uint64_t seed = 0;
};

/// Everything needed to continue a run bit-exactly. Shuffles are derived
/// from (seed, epoch), so no generator state is stored.
struct TrainState {
  policy::Parameters<float> params;
  AdamW opt;
  long step = 0;
  double initial_loss = 0;
  long above_count = 0;  // consecutive steps above the divergence threshold
  std::vector<LossRecord> history;

  static TrainState start(policy::Parameters<float> params);
};

struct RunOptions {
  long stop_at_step = -1;  // return early once this many steps are done
  int divergence_window = 100;
  double divergence_factor = 10.0;
  std::filesystem::path abort_dir;  // state saved here before a divergence abort
  std::function<void(const LossRecord&)> on_step;
};

/// Example order for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

long steps_per_epoch(std::size_t n, int batch_size);

/// CTL batching units: the pairs of one trajectory (same scenario and step)
/// form one unit, and neutral pairs are grouped two by two. Training on both
/// frames of a trajectory in the same batch leaves the image as the only
/// difference the gradient can act on.
std::vector<std::vector<std::size_t>> pair_units(std::span<const data::PreferencePair> data);

/// Shuffled units flattened into an example order. With an even batch size no
/// unit of two is split across batches.
std::vector<std::size_t> unit_epoch_order(const std::vector<std::vector<std::size_t>>& units, std::uint64_t seed,
                                          int epoch);

/// Minimizes the mean per-token NLL of the demonstrated actions.
/// Throws NumericError on non-finite loss or divergence.
void train_sft(TrainState& state, std::span<const data::StepInstance> data, const SFTConfig& cfg,
               const RunOptions& opts = {});

/// Contrastive trigger learning against the frozen `ref` policy, whose
/// log-probs are computed once up front.
void train_ctl(TrainState& state, const policy::Parameters<float>& ref, std::span<const data::PreferencePair> data,
               const CTLConfig& cfg, const RunOptions& opts = {});

void save_state(const std::filesystem::path& dir, const TrainState& state, const nlohmann::json& metadata);
TrainState load_state(const std::filesystem::path& dir);

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& history);

nlohmann::json to_json(const SFTConfig& c);
nlohmann::json to_json(const CTLConfig& c);

}  // namespace vbd::train
