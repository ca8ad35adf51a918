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

#include "pdval/serialize.hpp"

#include "pdval/errors.hpp"

#include <string>

namespace pdval {

using nlohmann::json;

void check_schema_version(const json& j, const char* what) {
    if (!j.is_object() || !j.contains("schema_version"))
        throw SchemaError(std::string(what) + ": missing schema_version");
    if (j.at("schema_version") != kSchemaVersion)
        throw SchemaError(std::string(what) + ": unsupported schema_version " + j.at("schema_version").dump());
}

json graph_to_json(const SpatialGraph& graph) {
    json edges = json::array();
    json attrs = json::array();
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
        edges.push_back({graph.edges[e].src, graph.edges[e].dst});
        attrs.push_back(graph.edge_attrs[e]);
    }
    return {{"schema_version", kSchemaVersion}, {"n_nodes", graph.n_nodes}, {"edges", edges}, {"edge_attrs", attrs}};
}

SpatialGraph graph_from_json(const json& j) {
    check_schema_version(j, "graph");
    SpatialGraph g;
    try {
        g.n_nodes = j.at("n_nodes").get<std::size_t>();
        for (const auto& e : j.at("edges")) g.edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()});
        for (const auto& a : j.at("edge_attrs")) g.edge_attrs.push_back(a.get<EdgeAttr>());
    } catch (const json::exception& e) {
        throw SchemaError(std::string("graph: ") + e.what());
    }
    if (g.edges.size() != g.edge_attrs.size()) throw SchemaError("graph: edges and edge_attrs differ in length");
    try {
        g.validate();
    } catch (const InvalidInput& e) {
        throw SchemaError(std::string("graph: ") + e.what());
    }
    return g;
}

json tensor_to_json(const Tensor& t) { return {{"shape", t.shape}, {"data", t.data}}; }

Tensor tensor_from_json(const json& j) {
    try {
        return Tensor(j.at("shape").get<std::vector<std::size_t>>(), j.at("data").get<std::vector<double>>());
    } catch (const json::exception& e) {
        throw SchemaError(std::string("tensor: ") + e.what());
    } catch (const InvalidShape& e) {
        throw SchemaError(std::string("tensor: ") + e.what());
    }
}

json params_to_json(const ParamSet& params) {
    json out = json::object();
    for (const auto& [name, t] : params) out[name] = tensor_to_json(t);
    return out;
}

ParamSet params_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("tensors: expected an object");
    ParamSet p;
    for (const auto& [name, t] : j.items()) p.emplace(name, tensor_from_json(t));
    return p;
}

json spec_to_json(const ModelSpec& spec) {
    json emb = json::array();
    for (const auto& e : spec.embedding_specs) emb.push_back({{"cardinality", e.cardinality}, {"dim", e.dim}});
    return {{"kind", to_string(spec.kind)},   {"continuous_dim", spec.continuous_dim},
            {"embeddings", emb},              {"hidden_dim", spec.hidden_dim},
            {"heads", spec.heads},            {"d_head", spec.d_head},
            {"edge_dim", spec.edge_dim},      {"seed", spec.seed}};
}

ModelSpec spec_from_json(const json& j) {
    ModelSpec s;
    try {
        s.kind = parse_model_kind(j.at("kind").get<std::string>());
        s.continuous_dim = j.at("continuous_dim").get<std::size_t>();
        for (const auto& e : j.at("embeddings"))
            s.embedding_specs.push_back({e.at("cardinality").get<std::size_t>(), e.at("dim").get<std::size_t>()});
        s.hidden_dim = j.at("hidden_dim").get<std::size_t>();
        s.heads = j.at("heads").get<std::size_t>();
        s.d_head = j.at("d_head").get<std::size_t>();
        s.edge_dim = j.at("edge_dim").get<std::size_t>();
        s.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("model spec: ") + e.what());
    } catch (const InvalidInput& e) {
        throw SchemaError(std::string("model spec: ") + e.what());
    }
    return s;
}

} // namespace pdval
