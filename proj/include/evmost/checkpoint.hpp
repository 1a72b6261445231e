#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "evmost/data.hpp"
#include "evmost/model.hpp"

namespace evmost {

inline constexpr const char* kCheckpointFormat = "evmost-checkpoint";
inline constexpr int kCheckpointVersion = 1;

nlohmann::json train_config_to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json encoder_spec_to_json(const EncoderSpec& e);
EncoderSpec encoder_spec_from_json(const nlohmann::json& j);

struct Checkpoint {
  MultimodalClassifier model;
  TrainConfig config;
  std::optional<Standardization> standardization;
  std::string config_hash;
};

/// JSON document:
///   format, version, classes, encoders[{input_dim, hidden_dims, activation}],
///   seed, config, config_hash, standardization (or null) and
///   tensors[{name, shape, data}] with names "m<i>.layer<j>.weight|bias" and
///   "m<i>.head.weight|bias". Weights are row-major (out x in). Doubles are
///   written in shortest round-trip form, so save then load is bit-exact.
nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Reads a whole JSON file; IoError when unreadable, ValidationError when malformed.
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes j.dump(2) plus a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace evmost
