/*
 * Copyright 2026 The pdval Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "pdval/autodiff.hpp"
#include "pdval/knhs.hpp"
#include "pdval/models.hpp"

#include "json.hpp"

namespace pdval {

/// Every JSON artifact carries this in "schema_version".
inline constexpr int kSchemaVersion = 1;

nlohmann::json graph_to_json(const SpatialGraph& graph);
/// Validates the structure; throws SchemaError on a malformed document.
SpatialGraph graph_from_json(const nlohmann::json& j);

nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

nlohmann::json params_to_json(const ParamSet& params);
ParamSet params_from_json(const nlohmann::json& j);

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

/// Throws SchemaError unless j["schema_version"] == kSchemaVersion.
void check_schema_version(const nlohmann::json& j, const char* what);

} // namespace pdval
