#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vbd/eval/metrics.hpp"
#include "vbd/experiment/config.hpp"

namespace vbd::experiment {

/// The four compared models.
enum class Variant { Original, BenignSft, WithoutCtl, SftCtl };
inline constexpr Variant kAllVariants[] = {Variant::Original, Variant::BenignSft, Variant::WithoutCtl, Variant::SftCtl};

std::string_view label(Variant v);  // "Original", "Benign SFT", "w/o CTL", "SFT+CTL"
std::string_view slug(Variant v);   // directory name
Variant variant_from_label(std::string_view s);

/// Directory layout of one run.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path scenarios() const { return root / "data" / "scenarios.jsonl"; }
  std::filesystem::path init_checkpoint() const { return root / "sft" / "init.ckpt"; }
  std::filesystem::path sft() const { return root / "sft"; }
  std::filesystem::path benign_sft() const { return root / "benign_sft"; }
  std::filesystem::path ctl() const { return root / "ctl"; }
  std::filesystem::path eval(Variant v) const { return root / "eval" / std::string(slug(v)); }
  std::filesystem::path checkpoint(Variant v) const;
};

/// SHA-256 of the serialized scenario set.
std::string scenario_hash(const sim::ScenarioSet& s);

/// Generates scenarios and all corpora under `root/data`. Returns the manifest.
nlohmann::json gen_data(const ExperimentConfig& cfg, const std::filesystem::path& root);

/// SFT on D_SFT, or on D_benign alone for the benign-only variant. Also writes
/// the initial weights (the "Original" model). MissingArtifactError when
/// gen-data has not run.
void train_sft_stage(const ExperimentConfig& cfg, const std::filesystem::path& root, bool benign_only);

/// CTL from the SFT checkpoint, which is copied as the frozen reference. With
/// `ctl.skip` set, the SFT weights are written unchanged as ctl.ckpt and
/// labelled "w/o CTL".
void train_ctl_stage(const ExperimentConfig& cfg, const std::filesystem::path& root);

/// Evaluation of one model on the held-out benign, backdoor and OOD sets.
struct EvalResult {
  Variant variant = Variant::Original;
  eval::MetricsReport metrics;
  eval::ActivationStats ood;
  nlohmann::json document;  // what metrics.json holds
};

/// Evaluates `checkpoint` (its metadata names the variant) and writes logs and
/// metrics.json under root/eval/<variant>. ConfigError if the checkpoint's
/// architecture differs from the config.
EvalResult eval_stage(const ExperimentConfig& cfg, const std::filesystem::path& root,
                      const std::filesystem::path& checkpoint);

/// Every stage and every variant in order.
std::vector<EvalResult> run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& root);

/// For each k: data, SFT, CTL and evaluation of "w/o CTL" and "SFT+CTL" under
/// root/sweep/k_<k>. Returns results keyed by k in input order.
struct SweepPoint {
  double k = 0;
  EvalResult without_ctl;
  EvalResult with_ctl;
};
std::vector<SweepPoint> sweep_k(const ExperimentConfig& cfg, const std::filesystem::path& root,
                                const std::vector<double>& ks);

std::string k_dirname(double k);

}  // namespace vbd::experiment
