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

#include "pdval/preprocess.hpp"

#include "pdval/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pdval {

using nlohmann::json;

// ---- ColumnScaler ------------------------------------------------------------

namespace {

double pre(ScalerKind kind, double x) {
    if (kind == ScalerKind::minmax) return x;
    if (!(x > 0.0)) throw InvalidInput("log scaling needs positive values, got " + std::to_string(x));
    return std::log(x);
}

} // namespace

ColumnScaler ColumnScaler::fit(std::span<const double> values, ScalerKind kind) {
    if (values.empty()) throw InvalidInput("cannot fit a scaler on zero rows");
    ColumnScaler s;
    s.kind = kind;
    s.min = s.max = pre(kind, values[0]);
    for (double v : values) {
        const double x = pre(kind, v);
        s.min = std::min(s.min, x);
        s.max = std::max(s.max, x);
    }
    s.constant = !(s.max > s.min);
    return s;
}

double ColumnScaler::transform(double x) const {
    const double v = pre(kind, x);
    return constant ? 0.0 : (v - min) / (max - min);
}

double ColumnScaler::inverse(double y) const {
    const double v = constant ? min : min + y * (max - min);
    return kind == ScalerKind::minmax ? v : std::exp(v);
}

json ColumnScaler::to_json() const {
    return {{"kind", kind == ScalerKind::minmax ? "minmax" : "log_then_minmax"},
            {"min", min},
            {"max", max},
            {"constant", constant}};
}

ColumnScaler ColumnScaler::from_json(const json& j) {
    ColumnScaler s;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "minmax")
        s.kind = ScalerKind::minmax;
    else if (kind == "log_then_minmax")
        s.kind = ScalerKind::log_then_minmax;
    else
        throw SchemaError("unknown scaler kind '" + kind + "'");
    s.min = j.at("min").get<double>();
    s.max = j.at("max").get<double>();
    s.constant = j.at("constant").get<bool>();
    return s;
}

// ---- Scaler ------------------------------------------------------------------

Scaler Scaler::fit(const Matrix& x, std::span<const std::size_t> rows, const std::vector<ScalerKind>& kinds) {
    if (kinds.size() != x.cols) throw InvalidInput("one scaler kind per column required");
    Scaler s;
    std::vector<double> col;
    for (std::size_t c = 0; c < x.cols; ++c) {
        col.clear();
        for (std::size_t r : rows) {
            if (r >= x.rows) throw InvalidInput("scaler row index out of range");
            col.push_back(x(r, c));
        }
        s.columns.push_back(ColumnScaler::fit(col, kinds[c]));
    }
    return s;
}

Matrix Scaler::transform(const Matrix& x) const {
    if (x.cols != columns.size()) throw InvalidInput("scaler column count does not match input");
    Matrix out(x.rows, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < x.cols; ++c) out(r, c) = columns[c].transform(x(r, c));
    return out;
}

json Scaler::to_json() const {
    json arr = json::array();
    for (const auto& c : columns) arr.push_back(c.to_json());
    return arr;
}

Scaler Scaler::from_json(const json& j) {
    Scaler s;
    for (const auto& c : j) s.columns.push_back(ColumnScaler::from_json(c));
    return s;
}

// ---- CategoryEncoder ---------------------------------------------------------

CategoryEncoder CategoryEncoder::fit(const std::vector<std::string>& labels) {
    std::vector<std::string> sorted = labels;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    CategoryEncoder e;
    for (std::size_t i = 0; i < sorted.size(); ++i) e.ids.emplace(sorted[i], i + 1);
    return e;
}

std::size_t CategoryEncoder::encode(const std::string& label) const {
    auto it = ids.find(label);
    return it == ids.end() ? 0 : it->second;
}

// ---- Preprocessor ------------------------------------------------------------

Matrix continuous_matrix(const Dataset& data) {
    Matrix m(data.size(), data.continuous_names.size());
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto& rec = data.records[r];
        if (rec.continuous.size() != m.cols) throw InvalidInput("record " + rec.id + " has the wrong feature count");
        std::copy(rec.continuous.begin(), rec.continuous.end(), m.row(r).begin());
    }
    return m;
}

namespace {

std::vector<ScalerKind> kinds_for(const std::vector<std::string>& names, const std::vector<std::string>& log_features) {
    std::vector<ScalerKind> kinds;
    for (const auto& n : names)
        kinds.push_back(std::find(log_features.begin(), log_features.end(), n) != log_features.end()
                            ? ScalerKind::log_then_minmax
                            : ScalerKind::minmax);
    return kinds;
}

Matrix edge_matrix(const SpatialGraph& graph) {
    Matrix m(graph.edges.size(), kEdgeAttrWidth);
    for (std::size_t e = 0; e < graph.edges.size(); ++e)
        for (std::size_t c = 0; c < kEdgeAttrWidth; ++c) m(e, c) = graph.edge_attrs[e][c];
    return m;
}

} // namespace

Preprocessor Preprocessor::fit(const Dataset& data, std::span<const std::size_t> train_rows,
                               const std::vector<std::string>& log_features, const SpatialGraph& graph) {
    if (train_rows.empty()) throw InvalidInput("no training rows");
    if (graph.n_nodes != data.size()) throw InvalidInput("graph and dataset have different node counts");
    Preprocessor p;
    p.features = Scaler::fit(continuous_matrix(data), train_rows, kinds_for(data.continuous_names, log_features));
    std::vector<double> prices;
    for (std::size_t r : train_rows) prices.push_back(data.records.at(r).price_uf);
    p.target = ColumnScaler::fit(prices, ScalerKind::log_then_minmax);
    for (std::size_t c = 0; c < data.categorical_names.size(); ++c) {
        std::vector<std::string> labels;
        for (const auto& rec : data.records) labels.push_back(rec.categorical.at(c));
        p.encoders.push_back(CategoryEncoder::fit(labels));
    }
    const Matrix em = edge_matrix(graph);
    std::vector<std::size_t> all(em.rows);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (em.rows == 0) {
        p.edges.columns.assign(kEdgeAttrWidth, ColumnScaler{ScalerKind::minmax, 0.0, 0.0, true});
    } else {
        p.edges = Scaler::fit(em, all, std::vector<ScalerKind>(kEdgeAttrWidth, ScalerKind::minmax));
    }
    return p;
}

std::vector<EmbeddingSpec> Preprocessor::embedding_specs() const {
    std::vector<EmbeddingSpec> out;
    for (const auto& e : encoders) out.push_back(EmbeddingSpec::for_cardinality(e.cardinality()));
    return out;
}

Tensor Preprocessor::scaled_continuous(const Dataset& data) const {
    const Matrix m = features.transform(continuous_matrix(data));
    return Tensor({m.rows, m.cols}, m.data);
}

std::vector<std::vector<std::size_t>> Preprocessor::categorical_ids(const Dataset& data) const {
    if (data.categorical_names.size() != encoders.size())
        throw InvalidInput("dataset has a different number of categorical columns than the fitted encoders");
    std::vector<std::vector<std::size_t>> out(encoders.size());
    for (std::size_t c = 0; c < encoders.size(); ++c)
        for (const auto& rec : data.records) out[c].push_back(encoders[c].encode(rec.categorical.at(c)));
    return out;
}

std::vector<double> Preprocessor::scaled_target(const Dataset& data) const {
    std::vector<double> out;
    out.reserve(data.size());
    for (const auto& rec : data.records) out.push_back(target.transform(rec.price_uf));
    return out;
}

Tensor Preprocessor::scaled_edges(const SpatialGraph& graph) const {
    const Matrix m = edges.transform(edge_matrix(graph));
    return Tensor({m.rows, m.cols}, m.data);
}

Matrix Preprocessor::design_matrix(const Dataset& data) const {
    const Matrix cont = features.transform(continuous_matrix(data));
    std::size_t width = cont.cols;
    for (const auto& e : encoders) width += e.ids.size() > 1 ? e.ids.size() - 1 : 0;
    Matrix x(data.size(), width);
    const auto ids = categorical_ids(data);
    for (std::size_t r = 0; r < data.size(); ++r) {
        std::copy(cont.row(r).begin(), cont.row(r).end(), x.row(r).begin());
        std::size_t off = cont.cols;
        for (std::size_t c = 0; c < encoders.size(); ++c) {
            const std::size_t levels = encoders[c].ids.size();
            // ids 2..levels map to columns; id 1 (reference) and 0 (unseen) stay all-zero.
            if (ids[c][r] >= 2) x(r, off + ids[c][r] - 2) = 1.0;
            off += levels > 1 ? levels - 1 : 0;
        }
    }
    return x;
}

json Preprocessor::to_json() const {
    json enc = json::array();
    for (const auto& e : encoders) {
        json labels = json::array();
        std::vector<std::pair<std::size_t, std::string>> ordered;
        for (const auto& [label, id] : e.ids) ordered.emplace_back(id, label);
        std::sort(ordered.begin(), ordered.end());
        for (const auto& [id, label] : ordered) labels.push_back(label);
        enc.push_back(labels);
    }
    return {{"features", features.to_json()}, {"target", target.to_json()}, {"encoders", enc},
            {"edges", edges.to_json()}};
}

Preprocessor Preprocessor::from_json(const json& j) {
    Preprocessor p;
    p.features = Scaler::from_json(j.at("features"));
    p.target = ColumnScaler::from_json(j.at("target"));
    for (const auto& labels : j.at("encoders")) {
        CategoryEncoder e;
        std::size_t id = 1;
        for (const auto& l : labels) e.ids.emplace(l.get<std::string>(), id++);
        p.encoders.push_back(std::move(e));
    }
    p.edges = Scaler::from_json(j.at("edges"));
    return p;
}

// ---- graph construction --------------------------------------------------------

json GraphConfig::to_json() const {
    return {{"threshold_km", threshold_km},
            {"k", k},
            {"variant", to_string(variant)},
            {"seed", seed},
            {"similarity_features", similarity_features},
            {"weights", weights},
            {"log_features", log_features}};
}

std::pair<Matrix, FeatureWeights> similarity_features(const Dataset& data, const GraphConfig& config) {
    std::vector<std::string> names = config.similarity_features;
    if (names.empty()) names = data.continuous_names;
    std::vector<std::size_t> cols;
    for (const auto& n : names) {
        const auto idx = data.continuous_index(n);
        if (!idx) throw InvalidInput("similarity feature '" + n + "' is not a continuous column");
        cols.push_back(*idx);
    }
    for (const auto& [n, w] : config.weights)
        if (std::find(names.begin(), names.end(), n) == names.end())
            throw InvalidInput("weight given for '" + n + "', which is not a similarity feature");

    const Matrix all = continuous_matrix(data);
    Matrix sel(all.rows, cols.size());
    for (std::size_t r = 0; r < all.rows; ++r)
        for (std::size_t c = 0; c < cols.size(); ++c) sel(r, c) = all(r, cols[c]);
    std::vector<std::size_t> rows(all.rows);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const Matrix scaled = Scaler::fit(sel, rows, kinds_for(names, config.log_features)).transform(sel);

    FeatureWeights w = FeatureWeights::ones(names.size());
    for (std::size_t c = 0; c < names.size(); ++c) {
        auto it = config.weights.find(names[c]);
        if (it != config.weights.end()) w.w[c] = it->second;
    }
    w.validate(names.size());
    return {scaled, w};
}

GraphBuildResult build_graph(const Dataset& data, const GraphConfig& config) {
    if (data.size() == 0) throw InvalidInput("cannot build a graph over zero records");
    const auto [features, weights] = similarity_features(data, config);
    const auto points = data.points();
    return build_graph(points, features, weights,
                       GraphOptions{config.threshold_km, config.k, config.variant, config.seed, config.threads});
}

} // namespace pdval
