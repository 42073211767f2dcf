#pragma once

#include <filesystem>
#include <string>

#include "brightvae/model.hpp"
#include "brightvae/training.hpp"

namespace brightvae {

struct FullConfig {
  BrightVAEConfig model;
  TrainConfig train;
};

/// Strict JSON parsing: unknown keys are a hard error naming the key.
BrightVAEConfig model_config_from_json(const std::string& json_text);
TrainConfig train_config_from_json(const std::string& json_text);
FullConfig parse_config_file(const std::filesystem::path& path);
FullConfig parse_config_text(const std::string& json_text);

std::string to_json_string(const BrightVAEConfig& cfg);
std::string to_json_string(const TrainConfig& cfg);
std::string to_json_string(const FullConfig& cfg);

/// FNV-1a over the canonical serialized config.
uint64_t config_hash(const std::string& canonical_json);

}  // namespace brightvae
