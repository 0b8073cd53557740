#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "vbd/data/factory.hpp"
#include "vbd/policy/inference.hpp"
#include "vbd/policy/model.hpp"
#include "vbd/sim/scenario.hpp"
#include "vbd/train/trainer.hpp"

namespace vbd::experiment {

struct EvalConfig {
  policy::DecodeMode decode = policy::DecodeMode::Greedy;
  double temperature = 1.0;
  int window = 2;
  int step_limit = sim::kStepLimit;
  int threads = 0;  // 0: one per hardware thread
};

/// One experiment. `seed` drives everything downstream of scenario
/// generation (mixing, init, shuffles, decoding); scenarios have their own
/// seed so that runs with different training seeds share a test set.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::uint64_t scenario_seed = 1;
  sim::ScenarioConfig scenarios{};
  double k = 0.5;
  double gamma = 0.5;
  policy::ArchConfig arch{};
  train::SFTConfig sft{.epochs = 30, .batch_size = 8, .optim = {.lr = 1e-3}};
  train::CTLConfig ctl{.beta = 0.2,
                       .alpha = 0.1,
                       .epochs = 30,
                       .batch_size = 8,
                       .optim = {.lr = 1e-3, .weight_decay = 0.1, .clip = 0.3}};
  bool ctl_skip = false;
  EvalConfig eval{};
  std::string output_dir = "run";
};

/// Strict parse: unknown keys, wrong types and out-of-range values throw
/// ConfigError naming the offending key. Absent keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);

/// Reads and validates a config file. MissingArtifactError if absent.
ExperimentConfig load_config(const std::filesystem::path& path);

/// SHA-256 over the canonical serialization, excluding the output directory.
std::string config_hash(const ExperimentConfig& c);

/// Per-stage seeds derived from the experiment seed.
data::DataConfig data_config(const ExperimentConfig& c);
train::SFTConfig sft_config(const ExperimentConfig& c);
train::CTLConfig ctl_config(const ExperimentConfig& c);
std::uint64_t init_seed(const ExperimentConfig& c);
std::uint64_t eval_seed(const ExperimentConfig& c);
policy::DecodeConfig decode_config(const ExperimentConfig& c);

/// Name of the environment variable that roots relative output directories.
inline constexpr const char* kOutputRootEnv = "VBD_OUTPUT_ROOT";

/// `output_dir` if absolute, else joined onto $VBD_OUTPUT_ROOT (or the
/// working directory when unset).
std::filesystem::path output_root(const ExperimentConfig& c);

}  // namespace vbd::experiment
