#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace sflab {

inline constexpr const char* kToolVersion = "sflab 0.1.0";

/// Where an output came from. The digest hashes the effective configuration
/// so two files with the same digest were produced by the same settings.
struct RunManifest {
  std::vector<std::string> command_line;
  std::string config_digest;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> artifacts;
  std::string tool_version = kToolVersion;
  double runtime_seconds = 0.0;
};

/// 64-bit FNV-1a of `text`, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view text);

/// Digest of the compact serialization of `config`. nlohmann::json keeps
/// object keys sorted, so equal configurations give equal digests.
std::string config_digest(const nlohmann::json& config);

nlohmann::json to_json(const RunManifest& m);

}  // namespace sflab
