// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "eva/core.hpp"
#include "eva/decoder.hpp"
#include "eva/toy_model.hpp"
#include "json.hpp"

namespace eva::cli {

nlohmann::json to_json(const DecodeConfig& cfg);
nlohmann::json to_json(const ToySpec& spec);

/// Overwrites the fields present in j; unknown keys are a config error.
void apply_json(const nlohmann::json& j, DecodeConfig& cfg);
void apply_json(const nlohmann::json& j, ToySpec& spec);

}  // namespace eva::cli
