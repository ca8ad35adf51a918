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
#include "pdval/data.hpp"
#include "pdval/knhs.hpp"
#include "pdval/layers.hpp"
#include "pdval/matrix.hpp"

#include "json.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace pdval {

enum class ScalerKind { minmax, log_then_minmax };

/// Min-max scaling of one column, optionally after a natural log.
struct ColumnScaler {
    ScalerKind kind = ScalerKind::minmax;
    double min = 0.0;
    double max = 1.0;
    /// max == min on the fitting rows: transform maps everything to 0.
    bool constant = false;

    /// Fits on the given values only.
    static ColumnScaler fit(std::span<const double> values, ScalerKind kind);
    double transform(double x) const;
    double inverse(double y) const;

    nlohmann::json to_json() const;
    static ColumnScaler from_json(const nlohmann::json& j);
    friend bool operator==(const ColumnScaler&, const ColumnScaler&) = default;
};

struct Scaler {
    std::vector<ColumnScaler> columns;

    /// Fits every column of `x` on `rows` only.
    static Scaler fit(const Matrix& x, std::span<const std::size_t> rows, const std::vector<ScalerKind>& kinds);
    Matrix transform(const Matrix& x) const;

    nlohmann::json to_json() const;
    static Scaler from_json(const nlohmann::json& j);
    friend bool operator==(const Scaler&, const Scaler&) = default;
};

/// Category label -> id. Id 0 is reserved for labels not seen when fitting.
struct CategoryEncoder {
    std::map<std::string, std::size_t> ids;

    static CategoryEncoder fit(const std::vector<std::string>& labels);
    std::size_t encode(const std::string& label) const;
    std::size_t cardinality() const noexcept { return ids.size() + 1; }

    friend bool operator==(const CategoryEncoder&, const CategoryEncoder&) = default;
};

/// Raw continuous features, one row per record.
Matrix continuous_matrix(const Dataset& data);

/// Everything fitted from the data that a model needs at inference time.
struct Preprocessor {
    Scaler features;       // continuous model features, fitted on train rows
    ColumnScaler target;   // log_then_minmax of price, fitted on train rows
    std::vector<CategoryEncoder> encoders;
    Scaler edges;          // min-max of the edge attributes of the graph

    static Preprocessor fit(const Dataset& data, std::span<const std::size_t> train_rows,
                            const std::vector<std::string>& log_features, const SpatialGraph& graph);

    std::vector<EmbeddingSpec> embedding_specs() const;
    Tensor scaled_continuous(const Dataset& data) const;
    std::vector<std::vector<std::size_t>> categorical_ids(const Dataset& data) const;
    std::vector<double> scaled_target(const Dataset& data) const;
    Tensor scaled_edges(const SpatialGraph& graph) const;
    double price_from_scaled(double y) const { return target.inverse(y); }

    /// Linear-model design matrix: scaled continuous features followed by
    /// one-hot columns (the first seen level of each variable is the reference).
    Matrix design_matrix(const Dataset& data) const;

    nlohmann::json to_json() const;
    static Preprocessor from_json(const nlohmann::json& j);
};

// ---- graph construction from records -------------------------------------------

struct GraphConfig {
    double threshold_km = 0.0;
    std::size_t k = 8;
    KnhsVariant variant = KnhsVariant::normal;
    std::uint64_t seed = 0;
    /// Continuous columns that enter the feature distance; empty means all.
    std::vector<std::string> similarity_features;
    /// Per-feature weights by name; unnamed features weigh 1.
    std::map<std::string, double> weights;
    std::vector<std::string> log_features;
    unsigned threads = 1;

    nlohmann::json to_json() const;
};

/// Min-max scaled (after the configured logs) similarity features over all
/// records, plus the matching weight vector.
std::pair<Matrix, FeatureWeights> similarity_features(const Dataset& data, const GraphConfig& config);

GraphBuildResult build_graph(const Dataset& data, const GraphConfig& config);

} // namespace pdval
