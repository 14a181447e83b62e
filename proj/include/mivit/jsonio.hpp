#pragma once

#include <string>

#include <json.hpp>

#include "mivit/config.hpp"

namespace mivit {

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
// Validates types and rejects unknown keys.
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace mivit
