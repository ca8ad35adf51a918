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
#include "pdval/models.hpp"
#include "pdval/preprocess.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pdval {

// ---- optimizers --------------------------------------------------------------

enum class OptimizerKind { adam, sgd };

std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam:
///   m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
///   p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
class Adam {
public:
    Adam(double learning_rate, AdamConfig config = {});
    void step(ParamSet& params, const ParamSet& grads);
    std::size_t steps() const noexcept { return t_; }

private:
    double lr_;
    AdamConfig cfg_;
    std::size_t t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

/// p -= lr * g
void sgd_step(ParamSet& params, const ParamSet& grads, double learning_rate);

// ---- configuration -----------------------------------------------------------

struct TrainConfig {
    /// Optimizer steps; each is one full-graph forward/backward.
    std::size_t epochs = 300;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    AdamConfig adam;
    double split_ratio = 0.75;
    std::uint64_t seed = 0;
    /// Stop after this many steps without a new best train loss.
    std::optional<std::size_t> early_stop_patience;
    std::size_t moran_k = 8;
    std::size_t moran_permutations = 999;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Seeded permutation of 0..n-1; the first round(n * ratio) entries train.
/// Both parts keep at least one row.
Split split_indices(std::size_t n, double ratio, std::uint64_t seed);

// ---- checkpoint and report ---------------------------------------------------

struct Checkpoint {
    ModelSpec spec;
    ParamSet params; // linreg: a single "linreg.coef" vector
    Preprocessor preprocessing;
    Split split;
    TrainConfig train_config;
    std::vector<std::string> log_features;
    nlohmann::json graph_config; // echo only
    std::size_t best_epoch = 0;
    double best_train_loss = 0.0;

    nlohmann::json to_json() const;
    static Checkpoint from_json(const nlohmann::json& j);
};

struct Metrics {
    std::size_t count = 0;
    double mape = 0.0;
    double rmse = 0.0;
    std::optional<double> r2; // undefined for fewer than two distinct prices

    nlohmann::json to_json() const;
};

struct EvalReport {
    Metrics test;
    double morans_i = 0.0;
    double moran_p_value = 1.0;
    std::map<std::string, Metrics> per_group; // test rows only
    nlohmann::json config;

    nlohmann::json to_json() const;
    /// group,count,mape
    std::string per_group_csv() const;
};

// ---- training ----------------------------------------------------------------

struct EpochInfo {
    std::size_t epoch = 0; // number of optimizer steps already taken
    double train_loss = 0.0;
    const GraphIndex* graph = nullptr;
    std::vector<Tensor> attention; // per conv layer, [E x heads]
};

using TrainObserver = std::function<void(const EpochInfo&)>;

struct TrainOptions {
    std::vector<std::string> log_features;
    nlohmann::json graph_config;
    Grouping grouping; // empty: every district is its own group
    TrainObserver observer;
};

struct TrainResult {
    Checkpoint checkpoint;
    EvalReport report;
    std::vector<double> loss_history; // train loss after 0, 1, ... steps
};

/// Fits preprocessing on the train split, then trains with the loss masked
/// to train nodes while every node takes part in message passing. Returns
/// the parameters with the lowest train loss seen (including the initial
/// ones) and their test-split report. A non-finite loss raises Divergence.
/// `spec` supplies kind, widths and init seed; input sizes come from the data.
TrainResult train(const ModelSpec& spec, const SpatialGraph& graph, const Dataset& data, const TrainConfig& config,
                  const TrainOptions& options = {});

/// Assembles scaled model inputs for a fitted preprocessor.
ModelInputs model_inputs(const Preprocessor& pre, const SpatialGraph& graph, const Dataset& data);

/// Predicted prices (UF) for every record.
std::vector<double> predict_prices(const Checkpoint& checkpoint, const SpatialGraph& graph, const Dataset& data);

/// Test-split metrics, Moran's I of log price over all records, per-group
/// metrics. `graph` may be empty for linreg.
EvalReport evaluate(const Checkpoint& checkpoint, const SpatialGraph& graph, const Dataset& data,
                    const Grouping& grouping = {});

// ---- sensitivity grid --------------------------------------------------------

struct SensitivityConfig {
    ModelSpec spec;
    TrainConfig train;
    GraphConfig graph;
    std::string weight_feature = "appraisal_uf";
    std::vector<double> w_values{1.0};
    std::vector<std::size_t> k_values{8};
    std::vector<KnhsVariant> variants{KnhsVariant::normal};
    unsigned jobs = 1;
};

struct SensitivityRow {
    KnhsVariant variant = KnhsVariant::normal;
    double weight = 1.0;
    std::size_t k = 8;
    std::uint64_t seed = 0;
    double r2 = 0.0, rmse = 0.0, mape = 0.0;
    std::string error; // nonempty: the cell failed and the metrics are meaningless
};

/// One graph rebuild and one training run per (variant, w, k) cell, in that
/// nesting order. Cell c uses seed base ^ c for model init and the random
/// variant; the split always uses the base seed. w == 0 means unweighted.
std::vector<SensitivityRow> sensitivity_grid(const Dataset& data, const std::vector<std::string>& log_features,
                                             const SensitivityConfig& config);

/// r2,rmse,mape,weight,k,knhs. Failed cells print NA metrics.
std::string sensitivity_csv(const std::vector<SensitivityRow>& rows);

} // namespace pdval
