#include "sflab/manifest.hpp"

#include <cstdio>

namespace sflab {

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_digest(const nlohmann::json& config) { return fnv1a_hex(config.dump()); }

nlohmann::json to_json(const RunManifest& m) {
  return nlohmann::json{{"command_line", m.command_line},
                        {"config_digest", m.config_digest},
                        {"seeds", m.seeds},
                        {"artifacts", m.artifacts},
                        {"tool_version", m.tool_version},
                        {"runtime_seconds", m.runtime_seconds}};
}

}  // namespace sflab
