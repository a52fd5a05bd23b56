#pragma once

#include <string>

#include "tea/model.hpp"

namespace tea {

/// ModelConfig <-> JSON text (used by checkpoints and run configs).
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace tea
