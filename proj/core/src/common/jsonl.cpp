#include "vbd/common/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "vbd/common/error.hpp"

namespace vbd {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MissingArtifactError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read " + path.string());
  return in;
}

}  // namespace

void write_jsonl(const fs::path& path, const std::vector<json>& records) {
  auto out = open_out(path);
  for (const auto& r : records) out << r.dump() << '\n';
}

std::vector<json> read_jsonl(const fs::path& path) {
  auto in = open_in(path);
  std::vector<json> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void write_json(const fs::path& path, const json& doc) {
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

std::string read_text(const fs::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace vbd
