/*
 Copyright 2026 The Contraflow Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/


#pragma once

#include <string>

#include <json.hpp>

#include "contraflow/autodiff.hpp"
#include "contraflow/jacobian_field.hpp"
#include "contraflow/ncds.hpp"
#include "contraflow/vae.hpp"

namespace contraflow {

inline constexpr int kModelFormatVersion = 1;

/// Exact textual encoding of a double ("%a" hex float).
std::string hex_double(double v);
double parse_hex_double(const std::string& s);

nlohmann::json params_to_json(const ParamStore& store);
ParamStore params_from_json(const nlohmann::json& j);

nlohmann::json field_config_to_json(const FieldConfig& cfg);
FieldConfig field_config_from_json(const nlohmann::json& j);

nlohmann::json ncds_to_json(const Ncds& model);
Ncds ncds_from_json(const nlohmann::json& j);

nlohmann::json vae_config_to_json(const VaeConfig& cfg);
VaeConfig vae_config_from_json(const nlohmann::json& j);

/// Configuration, coupling masks, spline bin table and parameters.
nlohmann::json vae_to_json(const InjectiveVae& vae);
InjectiveVae vae_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::string& path);
/// Compact dump followed by a newline.
void write_json_file(const std::string& path, const nlohmann::json& j);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace contraflow
