#pragma once

#include "json.hpp"

namespace sblab {

struct ModelSpec;
struct TrainConfig;

// ADL hooks so nlohmann::json can (de)serialize these types directly.
void to_json(nlohmann::json& j, const ModelSpec& spec);
void from_json(const nlohmann::json& j, ModelSpec& spec);
void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

}  // namespace sblab
