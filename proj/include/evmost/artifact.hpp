#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "evmost/eval.hpp"
#include "evmost/model.hpp"

namespace evmost {

inline constexpr const char* kToolVersion = "0.1.0";

/// 64-bit FNV-1a of `bytes`, as 16 lowercase hex digits.
std::string fnv1a64_hex(std::string_view bytes);

/// Hash of the canonical (key-sorted, compact) dump of a config document.
std::string config_hash(const nlohmann::json& config);

/// Hash of the config and seed together; identifies one run.
std::string run_id(const nlohmann::json& config, std::uint64_t seed);

struct RunArtifact {
  std::string run_id;
  std::string config_hash;
  nlohmann::json config;
  std::uint64_t seed = 0;
  TrainHistory history;
  std::map<std::string, MetricsReport> metrics;
  std::map<std::string, std::string> paths;
  std::string tool_version = kToolVersion;
};

/// Deterministic: contains no timestamps.
nlohmann::json to_json(const RunArtifact& a);

}  // namespace evmost
