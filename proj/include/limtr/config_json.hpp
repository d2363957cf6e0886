#pragma once

#include <string>

#include <json.hpp>

#include "limtr/model.hpp"
#include "limtr/optim.hpp"

namespace limtr {

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json optim_config_to_json(const OptimConfig& config);
OptimConfig optim_config_from_json(const nlohmann::json& j);

}  // namespace limtr
