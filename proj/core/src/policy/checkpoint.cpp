#include "vbd/policy/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "vbd/common/error.hpp"

namespace vbd::policy {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr char kMagic[8] = {'V', 'B', 'D', 'C', 'K', 'P', 'T', '1'};

Checkpoint read_payload(std::istream& in, const nlohmann::json& header, const std::filesystem::path& path) {
  Checkpoint ck{Parameters<float>::zeros(arch_from_json(header.at("arch"))), header.value("metadata", nlohmann::json::object())};
  const auto& tensors = header.at("tensors");
  std::size_t i = 0;
  std::size_t expected_offset = 0;
  ck.params.visit([&](const std::string& name, Mat<float>& m) {
    if (i >= tensors.size()) throw ConfigError("checkpoint is missing tensor " + name);
    const auto& t = tensors[i++];
    if (t.at("name").get<std::string>() != name || t.at("rows").get<Eigen::Index>() != m.rows() ||
        t.at("cols").get<Eigen::Index>() != m.cols() || t.at("offset").get<std::size_t>() != expected_offset) {
      throw ConfigError("checkpoint tensor " + name + " has an unexpected name, shape or offset");
    }
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    if (!in) throw ConfigError("truncated checkpoint payload at tensor " + name);
    expected_offset += static_cast<std::size_t>(m.size());
  });
  if (i != tensors.size()) throw ConfigError("checkpoint lists unexpected extra tensors");
  if (!ck.params.all_finite()) throw NumericError("checkpoint " + path.string() + " contains non-finite values");
  return ck;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Parameters<float>& params,
                     const nlohmann::json& metadata) {
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  params.visit([&](const std::string& name, const Mat<float>& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::size_t>(m.size());
  });
  const nlohmann::json header{{"arch", to_json(params.arch)}, {"metadata", metadata}, {"tensors", tensors}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingArtifactError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t n = text.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  params.visit([&](const std::string&, const Mat<float>& m) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
  });
  if (!out) throw MissingArtifactError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("checkpoint not found: " + path.string());
  char magic[8];
  std::uint64_t n = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw ConfigError("not a checkpoint file: " + path.string());
  if (n > (1u << 26)) throw ConfigError("checkpoint header too large: " + path.string());
  std::string text(n, '\0');
  in.read(text.data(), static_cast<std::streamsize>(n));
  if (!in) throw ConfigError("truncated checkpoint header: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }

  try {
    return read_payload(in, header, path);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
}

void require_arch(const Checkpoint& ckpt, const ArchConfig& expected, const std::filesystem::path& path) {
  if (!(ckpt.params.arch == expected)) {
    throw ConfigError("checkpoint " + path.string() + " architecture " + to_json(ckpt.params.arch).dump() +
                      " does not match configured " + to_json(expected).dump());
  }
}

}  // namespace vbd::policy
