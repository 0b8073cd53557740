#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "vbd/policy/model.hpp"

namespace vbd::policy {

/// On-disk layout (all integers little-endian):
///
///   "VBDCKPT1"                 8-byte magic
///   u64 header_bytes
///   header                     JSON: {"arch": {...}, "metadata": {...},
///                              "tensors": [{"name", "rows", "cols", "offset"}]}
///   payload                    float32 values, row-major, at the listed
///                              element offsets
///
/// See docs/formats.md.
struct Checkpoint {
  Parameters<float> params;
  nlohmann::json metadata;
};

void save_checkpoint(const std::filesystem::path& path, const Parameters<float>& params,
                     const nlohmann::json& metadata);

/// Throws MissingArtifactError if the file is absent and ConfigError if it is
/// malformed or its tensor shapes disagree with its own architecture block.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws ConfigError when `ckpt` was trained with a different architecture.
void require_arch(const Checkpoint& ckpt, const ArchConfig& expected, const std::filesystem::path& path);

}  // namespace vbd::policy
