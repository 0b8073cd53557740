#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vbd/data/records.hpp"
#include "vbd/sim/scenario.hpp"

namespace vbd::data {

/// Episode seed used for a scenario's rollouts; replay reuses it so lighting
/// and pixel noise match.
std::uint64_t rollout_seed(std::uint64_t seed, const std::string& scenario_id);

/// Full oracle trajectory through a backdoor scenario. `steps[t]` is the
/// policy input and action at step t for t = 0..T; the benign oracle acts
/// before `trigger_step` and the malicious oracle from it on.
struct BackdoorTrajectory {
  sim::ScenarioPtr scenario;
  std::uint64_t seed = 0;
  int trigger_step = 0;
  std::vector<StepInstance> steps;
};

struct BenignCollection {
  std::vector<StepInstance> steps;
  int trajectories = 0;
  std::vector<std::string> failed;  // scenario ids whose rollout did not succeed
};

struct BackdoorCollection {
  std::vector<StepInstance> attack;  // post-trigger steps only
  std::vector<BackdoorTrajectory> trajectories;
  std::vector<std::string> discarded;  // trigger never visible, or attack incomplete
};

/// Rolls the benign oracle in trigger-free scenarios and keeps successful
/// trajectories, each contributing T+1 instances. Throws PreconditionError
/// if a scenario contains the trigger and Error if nothing succeeds.
BenignCollection collect_benign(const std::vector<sim::ScenarioPtr>& scenarios, std::uint64_t seed);

/// Benign oracle until the trigger first enters view, malicious oracle from
/// then on. Keeps steps t in [t_hat, T].
BackdoorCollection collect_backdoor(const std::vector<sim::ScenarioPtr>& scenarios, std::uint64_t seed);

/// Two pairs per trajectory: the trigger-free replay prefers the benign
/// action over the attack action, the original frame the reverse. Throws
/// Error if the trigger-free replay diverges from the recorded feedback.
std::vector<PreferencePair> build_contrast(const std::vector<BackdoorTrajectory>& trajectories);

struct MixResult {
  std::vector<StepInstance> steps;
  std::size_t attack_steps = 0;
  double achieved_k = 0;
};

/// Subsamples floor(k |benign|) attack steps without replacement and
/// shuffles the union. k must lie in (0, 1].
MixResult mix_sft(const std::vector<StepInstance>& benign, const std::vector<StepInstance>& attack, double k,
                  std::uint64_t seed);

/// round(gamma * contrast_size) neutral pairs drawn from D_SFT without
/// replacement (with replacement once D_SFT is exhausted).
std::vector<PreferencePair> build_neutral(const std::vector<StepInstance>& sft, double gamma, std::size_t contrast_size,
                                          std::uint64_t seed);

std::vector<PreferencePair> assemble_ctl(const std::vector<PreferencePair>& contrast,
                                         const std::vector<PreferencePair>& neutral);

struct DataConfig {
  double k = 0.5;
  double gamma = 0.5;
  std::uint64_t seed = 0;
};

/// Everything gen-data produces, in memory.
struct Corpora {
  std::vector<StepInstance> benign;
  std::vector<StepInstance> attack;  // full D_attack before subsampling
  std::vector<StepInstance> sft;
  std::vector<PreferencePair> contrast;
  std::vector<PreferencePair> neutral;
  double achieved_k = 0;
  std::vector<std::string> discarded;
};

Corpora build_corpora(const sim::ScenarioSet& scenarios, const DataConfig& config);

/// Writes d_benign/d_attack/d_sft/d_contrast/d_neutral .jsonl plus
/// manifest.json into `dir` and returns the manifest. The manifest carries
/// per-file SHA-256 digests and a content hash over all of them.
nlohmann::json write_corpora(const std::filesystem::path& dir, const Corpora& corpora, const DataConfig& config,
                             const std::string& scenario_hash, const nlohmann::json& extra = {});

struct LoadedCorpora {
  std::vector<StepInstance> benign;
  std::vector<StepInstance> sft;
  std::vector<PreferencePair> contrast;
  std::vector<PreferencePair> neutral;
  nlohmann::json manifest;
};

/// Reads what training needs. Throws MissingArtifactError when a file is
/// absent and ConfigError when a file's digest disagrees with the manifest.
LoadedCorpora load_corpora(const std::filesystem::path& dir);

}  // namespace vbd::data
