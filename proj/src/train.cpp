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

#include "pdval/train.hpp"

#include "pdval/errors.hpp"
#include "pdval/format.hpp"
#include "pdval/metrics.hpp"
#include "pdval/rng.hpp"
#include "pdval/serialize.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace pdval {

using nlohmann::json;

// ---- optimizers --------------------------------------------------------------

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd") return OptimizerKind::sgd;
    throw InvalidInput("unknown optimizer '" + std::string(s) + "' (expected adam or sgd)");
}

Adam::Adam(double learning_rate, AdamConfig config) : lr_(learning_rate), cfg_(config) {
    if (!(learning_rate > 0.0)) throw InvalidInput("learning rate must be > 0");
    if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0))
        throw InvalidInput("Adam betas must be in [0, 1)");
    if (!(cfg_.epsilon > 0.0)) throw InvalidInput("Adam epsilon must be > 0");
}

void Adam::step(ParamSet& params, const ParamSet& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params) {
        auto g = grads.find(name);
        if (g == grads.end()) throw InvalidInput("no gradient for parameter " + name);
        if (g->second.numel() != p.numel()) throw InvalidShape("gradient of " + name + " has the wrong size");
        auto& m = m_[name];
        auto& v = v_[name];
        if (m.empty()) {
            m.assign(p.numel(), 0.0);
            v.assign(p.numel(), 0.0);
        }
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = g->second.data[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            p.data[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
        }
    }
}

void sgd_step(ParamSet& params, const ParamSet& grads, double learning_rate) {
    for (auto& [name, p] : params) {
        auto g = grads.find(name);
        if (g == grads.end()) throw InvalidInput("no gradient for parameter " + name);
        if (g->second.numel() != p.numel()) throw InvalidShape("gradient of " + name + " has the wrong size");
        for (std::size_t i = 0; i < p.numel(); ++i) p.data[i] -= learning_rate * g->second.data[i];
    }
}

// ---- configuration -----------------------------------------------------------

void TrainConfig::validate() const {
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw InvalidInput("split_ratio must be in (0, 1)");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidInput("learning_rate must be > 0");
    if (moran_k == 0) throw InvalidInput("moran_k must be >= 1");
    if (early_stop_patience && *early_stop_patience == 0) throw InvalidInput("early_stop_patience must be >= 1");
}

json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"learning_rate", learning_rate},
            {"optimizer", to_string(optimizer)},
            {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"epsilon", adam.epsilon}}},
            {"split_ratio", split_ratio},
            {"seed", seed},
            {"early_stop_patience", early_stop_patience ? json(*early_stop_patience) : json(nullptr)},
            {"moran_k", moran_k},
            {"moran_permutations", moran_permutations}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    try {
        c.epochs = j.value("epochs", c.epochs);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
        if (j.contains("adam")) {
            const auto& a = j.at("adam");
            c.adam.beta1 = a.value("beta1", c.adam.beta1);
            c.adam.beta2 = a.value("beta2", c.adam.beta2);
            c.adam.epsilon = a.value("epsilon", c.adam.epsilon);
        }
        c.split_ratio = j.value("split_ratio", c.split_ratio);
        c.seed = j.value("seed", c.seed);
        if (j.contains("early_stop_patience") && !j.at("early_stop_patience").is_null())
            c.early_stop_patience = j.at("early_stop_patience").get<std::size_t>();
        c.moran_k = j.value("moran_k", c.moran_k);
        c.moran_permutations = j.value("moran_permutations", c.moran_permutations);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

Split split_indices(std::size_t n, double ratio, std::uint64_t seed) {
    if (n < 2) throw InvalidInput("a train/test split needs at least 2 records");
    if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidInput("split_ratio must be in (0, 1)");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(perm));
    auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    Split s;
    s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    return s;
}

// ---- checkpoint / report JSON --------------------------------------------------

json Checkpoint::to_json() const {
    return {{"schema_version", kSchemaVersion},
            {"model_kind", to_string(spec.kind)},
            {"spec", spec_to_json(spec)},
            {"tensors", params_to_json(params)},
            {"preprocessing", preprocessing.to_json()},
            {"split", {{"train", split.train}, {"test", split.test}}},
            {"train_config", train_config.to_json()},
            {"log_features", log_features},
            {"graph_config", graph_config},
            {"best_epoch", best_epoch},
            {"best_train_loss", best_train_loss}};
}

Checkpoint Checkpoint::from_json(const json& j) {
    check_schema_version(j, "checkpoint");
    Checkpoint c;
    try {
        c.spec = spec_from_json(j.at("spec"));
        if (j.at("model_kind").get<std::string>() != to_string(c.spec.kind))
            throw SchemaError("checkpoint: model_kind does not match spec.kind");
        c.params = params_from_json(j.at("tensors"));
        c.preprocessing = Preprocessor::from_json(j.at("preprocessing"));
        c.split.train = j.at("split").at("train").get<std::vector<std::size_t>>();
        c.split.test = j.at("split").at("test").get<std::vector<std::size_t>>();
        c.train_config = TrainConfig::from_json(j.at("train_config"));
        c.log_features = j.at("log_features").get<std::vector<std::string>>();
        c.graph_config = j.value("graph_config", json(nullptr));
        c.best_epoch = j.at("best_epoch").get<std::size_t>();
        c.best_train_loss = j.at("best_train_loss").get<double>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("checkpoint: ") + e.what());
    }
    return c;
}

json Metrics::to_json() const {
    return {{"count", count}, {"mape", mape}, {"rmse", rmse}, {"r2", r2 ? json(*r2) : json(nullptr)}};
}

json EvalReport::to_json() const {
    json groups = json::object();
    for (const auto& [name, m] : per_group) groups[name] = m.to_json();
    return {{"schema_version", kSchemaVersion},
            {"mape", test.mape},
            {"rmse", test.rmse},
            {"r2", test.r2 ? json(*test.r2) : json(nullptr)},
            {"test_count", test.count},
            {"morans_i", {{"i", morans_i}, {"p_value", moran_p_value}}},
            {"per_group", groups},
            {"config", config}};
}

std::string EvalReport::per_group_csv() const {
    std::string out = "group,count,mape,rmse,r2\n";
    for (const auto& [name, m] : per_group) {
        std::string g = name;
        if (g.find_first_of(",\"\n") != std::string::npos) {
            std::string q = "\"";
            for (char c : g) q += c == '"' ? std::string("\"\"") : std::string(1, c);
            g = q + "\"";
        }
        out += g + "," + std::to_string(m.count) + "," + format_double(m.mape) + "," + format_double(m.rmse) + "," +
               (m.r2 ? format_double(*m.r2) : std::string("NA")) + "\n";
    }
    return out;
}

// ---- training ----------------------------------------------------------------

ModelInputs model_inputs(const Preprocessor& pre, const SpatialGraph& graph, const Dataset& data) {
    if (graph.n_nodes != data.size())
        throw InvalidInput("graph has " + std::to_string(graph.n_nodes) + " nodes but the data has " +
                           std::to_string(data.size()) + " records");
    ModelInputs in;
    in.continuous = pre.scaled_continuous(data);
    in.categorical = pre.categorical_ids(data);
    in.graph = GraphIndex::from(graph);
    in.edge_attrs = pre.scaled_edges(graph);
    return in;
}

namespace {

Metrics metrics_for(std::span<const std::size_t> rows, const std::vector<double>& actual,
                    const std::vector<double>& pred) {
    std::vector<double> a, p;
    for (std::size_t r : rows) {
        a.push_back(actual[r]);
        p.push_back(pred[r]);
    }
    Metrics m;
    m.count = rows.size();
    if (rows.empty()) return m;
    m.mape = mape(a, p);
    m.rmse = rmse(a, p);
    try {
        m.r2 = r2(a, p);
    } catch (const DegenerateVariance&) {
    }
    return m;
}

ModelSpec resolved_spec(const ModelSpec& base, const Preprocessor& pre, const Dataset& data) {
    ModelSpec s = base;
    s.continuous_dim = data.continuous_names.size();
    s.embedding_specs = pre.embedding_specs();
    s.validate();
    return s;
}

void check_split(const Split& split, std::size_t n) {
    std::vector<char> seen(n, 0);
    for (auto part : {&split.train, &split.test})
        for (std::size_t r : *part) {
            if (r >= n) throw InvalidInput("split index out of range");
            if (seen[r]++) throw InvalidInput("split indices overlap");
        }
}

} // namespace

TrainResult train(const ModelSpec& spec, const SpatialGraph& graph, const Dataset& data, const TrainConfig& config,
                  const TrainOptions& options) {
    config.validate();
    if (graph.n_nodes != data.size())
        throw InvalidInput("graph has " + std::to_string(graph.n_nodes) + " nodes but the data has " +
                           std::to_string(data.size()) + " records");
    graph.validate();

    TrainResult result;
    Checkpoint& ck = result.checkpoint;
    ck.split = split_indices(data.size(), config.split_ratio, config.seed);
    ck.preprocessing = Preprocessor::fit(data, ck.split.train, options.log_features, graph);
    ck.spec = resolved_spec(spec, ck.preprocessing, data);
    ck.train_config = config;
    ck.log_features = options.log_features;
    ck.graph_config = options.graph_config;

    const std::vector<double> target = ck.preprocessing.scaled_target(data);
    std::vector<double> train_target;
    for (std::size_t r : ck.split.train) train_target.push_back(target[r]);

    if (spec.kind == ModelKind::linreg) {
        const Matrix x = ck.preprocessing.design_matrix(data);
        Matrix xt(ck.split.train.size(), x.cols);
        for (std::size_t i = 0; i < ck.split.train.size(); ++i) {
            const auto row = x.row(ck.split.train[i]);
            std::copy(row.begin(), row.end(), xt.row(i).begin());
        }
        const auto coef = fit_linreg(xt, train_target);
        ck.params.emplace("linreg.coef", Tensor({coef.size()}, coef));
        const auto fitted = predict_linreg(coef, xt);
        double loss = 0.0;
        for (std::size_t i = 0; i < fitted.size(); ++i)
            loss += (fitted[i] - train_target[i]) * (fitted[i] - train_target[i]);
        ck.best_train_loss = loss / static_cast<double>(fitted.size());
        result.loss_history.push_back(ck.best_train_loss);
    } else {
        const ModelInputs inputs = model_inputs(ck.preprocessing, graph, data);
        const Tensor target_t({train_target.size(), 1}, train_target);
        ParamSet params = init_params(ck.spec);
        Adam adam(config.learning_rate, config.adam);

        double best = std::numeric_limits<double>::infinity();
        std::size_t since_best = 0;
        for (std::size_t epoch = 0;; ++epoch) {
            Tape tape;
            BoundParams bound(tape, params);
            double loss_value = 0.0;
            Var loss;
            ForwardResult fwd;
            try {
                fwd = forward(tape, bound, ck.spec, inputs);
                loss = mse_loss(gather_rows(fwd.prediction, ck.split.train), tape.leaf(target_t));
                loss_value = loss.value().data[0];
            } catch (const NonFinite& e) {
                throw Divergence(static_cast<int>(epoch), e.what());
            }
            if (!std::isfinite(loss_value)) throw Divergence(static_cast<int>(epoch), "loss is not finite");
            result.loss_history.push_back(loss_value);
            if (options.observer) {
                EpochInfo info;
                info.epoch = epoch;
                info.train_loss = loss_value;
                info.graph = &inputs.graph;
                for (const auto& a : fwd.attention) info.attention.push_back(a.value());
                options.observer(info);
            }
            if (loss_value < best) {
                best = loss_value;
                ck.params = params;
                ck.best_epoch = epoch;
                since_best = 0;
            } else {
                ++since_best;
            }
            if (epoch == config.epochs) break;
            if (config.early_stop_patience && since_best >= *config.early_stop_patience) break;

            try {
                tape.backward(loss);
            } catch (const NonFinite& e) {
                throw Divergence(static_cast<int>(epoch), e.what());
            }
            const ParamSet grads = bound.gradients();
            for (const auto& [name, g] : grads)
                for (double v : g.data)
                    if (!std::isfinite(v)) throw Divergence(static_cast<int>(epoch), "gradient of " + name + " is not finite");
            if (config.optimizer == OptimizerKind::adam)
                adam.step(params, grads);
            else
                sgd_step(params, grads, config.learning_rate);
        }
        ck.best_train_loss = best;
    }

    result.report = evaluate(ck, graph, data, options.grouping);
    return result;
}

std::vector<double> predict_prices(const Checkpoint& ck, const SpatialGraph& graph, const Dataset& data) {
    std::vector<double> scaled;
    if (ck.spec.kind == ModelKind::linreg) {
        auto it = ck.params.find("linreg.coef");
        if (it == ck.params.end()) throw SchemaError("checkpoint has no linreg.coef tensor");
        scaled = predict_linreg(it->second.data, ck.preprocessing.design_matrix(data));
    } else {
        if (data.continuous_names.size() != ck.spec.continuous_dim)
            throw InvalidInput("data has a different number of continuous features than the checkpoint");
        scaled = predict(ck.params, ck.spec, model_inputs(ck.preprocessing, graph, data));
    }
    std::vector<double> prices;
    prices.reserve(scaled.size());
    for (double y : scaled) prices.push_back(ck.preprocessing.price_from_scaled(y));
    return prices;
}

EvalReport evaluate(const Checkpoint& ck, const SpatialGraph& graph, const Dataset& data, const Grouping& grouping) {
    check_split(ck.split, data.size());
    if (ck.spec.kind != ModelKind::linreg && graph.n_nodes != data.size())
        throw InvalidInput("graph and data disagree on the number of records");
    const std::vector<double> pred = predict_prices(ck, graph, data);
    const std::vector<double> actual = data.prices();

    EvalReport rep;
    rep.test = metrics_for(ck.split.test, actual, pred);

    std::vector<double> log_price;
    for (double p : actual) log_price.push_back(std::log(p));
    const auto points = data.points();
    const auto mr = morans_i(log_price, knn_weights(points, ck.train_config.moran_k),
                             ck.train_config.moran_permutations, ck.train_config.seed);
    rep.morans_i = mr.i;
    rep.moran_p_value = mr.p_value;

    const Grouping g = grouping.group_of.empty() ? Grouping::identity(data) : grouping;
    std::vector<char> is_test(data.size(), 0);
    for (std::size_t r : ck.split.test) is_test[r] = 1;
    for (const auto& [name, rows] : commune_groups(data, g)) {
        std::vector<std::size_t> test_rows;
        for (std::size_t r : rows)
            if (is_test[r]) test_rows.push_back(r);
        if (!test_rows.empty()) rep.per_group.emplace(name, metrics_for(test_rows, actual, pred));
    }

    rep.config = {{"model", spec_to_json(ck.spec)},
                  {"train_config", ck.train_config.to_json()},
                  {"graph_config", ck.graph_config},
                  {"log_features", ck.log_features},
                  {"n_records", data.size()},
                  {"n_train", ck.split.train.size()},
                  {"n_test", ck.split.test.size()},
                  {"best_epoch", ck.best_epoch},
                  {"best_train_loss", ck.best_train_loss}};
    return rep;
}

// ---- sensitivity grid --------------------------------------------------------

std::vector<SensitivityRow> sensitivity_grid(const Dataset& data, const std::vector<std::string>& log_features,
                                             const SensitivityConfig& config) {
    if (config.w_values.empty() || config.k_values.empty() || config.variants.empty())
        throw InvalidInput("sensitivity grid needs at least one value per axis");
    for (double w : config.w_values)
        if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("grid weights must be finite and >= 0");
    config.train.validate();

    std::vector<SensitivityRow> rows;
    for (auto v : config.variants)
        for (double w : config.w_values)
            for (std::size_t k : config.k_values) {
                SensitivityRow r;
                r.variant = v;
                r.weight = w;
                r.k = k;
                r.seed = config.train.seed ^ static_cast<std::uint64_t>(rows.size());
                rows.push_back(r);
            }

    auto run_cell = [&](SensitivityRow& row) {
        try {
            GraphConfig gc = config.graph;
            gc.k = row.k;
            gc.variant = row.variant;
            gc.seed = row.seed;
            if (config.jobs > 1) gc.threads = 1;
            if (row.weight == 0.0)
                gc.weights.erase(config.weight_feature);
            else
                gc.weights[config.weight_feature] = row.weight;
            const auto built = build_graph(data, gc);
            ModelSpec spec = config.spec;
            spec.seed = row.seed;
            TrainOptions opts;
            opts.log_features = log_features;
            opts.graph_config = gc.to_json();
            const auto res = train(spec, built.graph, data, config.train, opts);
            row.r2 = res.report.test.r2.value_or(std::numeric_limits<double>::quiet_NaN());
            row.rmse = res.report.test.rmse;
            row.mape = res.report.test.mape;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    };

    const unsigned jobs = std::max(1u, std::min<unsigned>(config.jobs, static_cast<unsigned>(rows.size())));
    if (jobs == 1) {
        for (auto& r : rows) run_cell(r);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs; ++t)
            pool.emplace_back([&] {
                for (std::size_t c = next++; c < rows.size(); c = next++) run_cell(rows[c]);
            });
        for (auto& th : pool) th.join();
    }
    return rows;
}

std::string sensitivity_csv(const std::vector<SensitivityRow>& rows) {
    std::string out = "r2,rmse,mape,weight,k,knhs\n";
    for (const auto& r : rows) {
        if (r.error.empty())
            out += format_double(r.r2) + "," + format_double(r.rmse) + "," + format_double(r.mape);
        else
            out += "NA,NA,NA";
        out += "," + format_double(r.weight) + "," + std::to_string(r.k) + "," + std::string(to_string(r.variant)) +
               "\n";
    }
    return out;
}

} // namespace pdval
