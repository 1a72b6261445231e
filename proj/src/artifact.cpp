#include "evmost/artifact.hpp"

#include <cstdio>

namespace evmost {

std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const nlohmann::json& config) { return fnv1a64_hex(config.dump()); }

std::string run_id(const nlohmann::json& config, std::uint64_t seed) {
  return fnv1a64_hex(nlohmann::json{{"config", config}, {"seed", seed}}.dump());
}

nlohmann::json to_json(const RunArtifact& a) {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [name, report] : a.metrics) metrics[name] = to_json(report);
  return {{"run_id", a.run_id},
          {"config_hash", a.config_hash},
          {"config", a.config},
          {"seed", a.seed},
          {"initial_loss", a.history.initial_loss},
          {"epoch_loss", a.history.epoch_loss},
          {"val_loss", a.history.val_loss},
          {"selected_epoch", a.history.selected_epoch},
          {"metrics", metrics},
          {"paths", a.paths},
          {"tool_version", a.tool_version}};
}

}  // namespace evmost
