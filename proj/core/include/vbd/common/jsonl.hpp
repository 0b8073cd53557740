#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace vbd {

using json = nlohmann::json;

/// Writes one compact JSON document per line. Key order is sorted
/// (nlohmann's default object type), so output is byte-stable.
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);

/// Reads a line-delimited JSON file; blank lines are skipped.
/// Throws MissingArtifactError if the file cannot be opened and ConfigError on
/// a parse failure (with the line number).
std::vector<json> read_jsonl(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const json& doc);
json read_json(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace vbd
