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

// pdval: command-line front end. Every subcommand reads files and writes
// files; outputs go through write_file_atomic.

#include "pdval/data.hpp"
#include "pdval/errors.hpp"
#include "pdval/format.hpp"
#include "pdval/metrics.hpp"
#include "pdval/preprocess.hpp"
#include "pdval/serialize.hpp"
#include "pdval/train.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pdval;

namespace {

/// Bad flags or config contents; exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json read_json(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError("'" + path + "' is not valid JSON: " + e.what());
    }
}

std::string sibling(const std::string& path, const std::string& name) {
    const fs::path p(path);
    return (p.has_parent_path() ? p.parent_path() / name : fs::path(name)).string();
}

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

// ---- config file merging ---------------------------------------------------------

std::string option_key(const CLI::Option* opt) {
    std::string name = opt->get_single_name();
    for (char& c : name)
        if (c == '-') c = '_';
    return name;
}

std::vector<std::string> config_tokens(const json& v, const std::string& key) {
    std::vector<std::string> out;
    auto scalar = [&](const json& x) -> std::string {
        if (x.is_string()) return x.get<std::string>();
        if (x.is_boolean()) return x.get<bool>() ? "true" : "false";
        if (x.is_number_float()) return format_double(x.get<double>());
        if (x.is_number()) return x.dump();
        throw UsageError("config key '" + key + "' has an unsupported value " + x.dump());
    };
    if (v.is_array()) {
        for (const auto& x : v) out.push_back(scalar(x));
    } else if (v.is_object()) {
        for (const auto& [k, x] : v.items()) out.push_back(k + "=" + scalar(x));
    } else {
        out.push_back(scalar(v));
    }
    return out;
}

/// Fills options that were not given on the command line from the config
/// file; flags always win. Keys are long option names with '_' or '-'.
/// A nested object under the subcommand name overrides top-level keys.
void merge_config(CLI::App* sub, const std::string& config_path) {
    if (config_path.empty()) return;
    json root;
    try {
        root = read_json(config_path);
    } catch (const Error& e) {
        throw UsageError(std::string("--config: ") + e.what());
    }
    if (!root.is_object()) throw UsageError("config file must hold a JSON object");
    json flat = json::object();
    for (const auto& [k, v] : root.items())
        if (!(v.is_object() && k == sub->get_name())) flat[k] = v;
    if (root.contains(sub->get_name()) && root.at(sub->get_name()).is_object())
        for (const auto& [k, v] : root.at(sub->get_name()).items()) flat[k] = v;

    std::map<std::string, CLI::Option*> by_key;
    for (CLI::Option* opt : sub->get_options()) {
        if (opt->get_lnames().empty()) continue;
        by_key[option_key(opt)] = opt;
    }
    std::set<std::string> other_subcommands;
    for (const CLI::App* app : sub->get_parent()->get_subcommands({})) other_subcommands.insert(app->get_name());
    for (const auto& [raw_key, value] : flat.items()) {
        std::string key = raw_key;
        for (char& c : key)
            if (c == '-') c = '_';
        if (key == "config" || key == "help" || key == "schema_version") continue;
        if (other_subcommands.count(raw_key) && value.is_object()) continue;
        auto it = by_key.find(key);
        if (it == by_key.end()) throw UsageError("config key '" + raw_key + "' is not an option of " + sub->get_name());
        CLI::Option* opt = it->second;
        if (opt->count() > 0) continue;
        if (value.is_null()) continue;
        for (const auto& tok : config_tokens(value, raw_key)) opt->add_result(tok);
        try {
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw UsageError("config key '" + raw_key + "': " + e.what());
        }
    }
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
}

/// Numbers and booleans keep their JSON type in the echo.
json typed(const std::string& s) {
    json v = json::parse(s, nullptr, false);
    if (v.is_discarded()) return s;
    if (v.is_number() || v.is_boolean()) return v;
    if (v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); })) return v;
    return s;
}

/// Every option with its resolved value, for the config echo.
json resolved_options(const CLI::App* sub) {
    json out = json::object();
    for (const CLI::Option* opt : sub->get_options()) {
        if (opt->get_lnames().empty()) continue;
        const std::string key = option_key(opt);
        if (key == "help" || key == "config") continue;
        if (opt->count() > 0) {
            const auto& res = opt->results();
            if (res.size() == 1 && opt->get_expected_max() <= 1) {
                out[key] = typed(res[0]);
            } else {
                json arr = json::array();
                for (const auto& r : res) arr.push_back(typed(r));
                out[key] = arr;
            }
        } else {
            out[key] = typed(opt->get_default_str());
        }
    }
    return out;
}

void echo_config(const CLI::App* sub, const std::string& dir, const json& extra = json::object()) {
    json j = {{"schema_version", kSchemaVersion}, {"subcommand", sub->get_name()}, {"options", resolved_options(sub)}};
    for (const auto& [k, v] : extra.items()) j[k] = v;
    write_file_atomic(in_dir(dir.empty() ? "." : dir, sub->get_name() + ".config.json"), dump(j));
}

/// Refuses to write an output over one of the inputs.
void check_outputs(const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
    auto norm = [](const std::string& p) { return fs::weakly_canonical(fs::absolute(p)).string(); };
    std::set<std::string> in;
    for (const auto& p : inputs)
        if (!p.empty()) in.insert(norm(p));
    for (const auto& p : outputs)
        if (!p.empty() && in.count(norm(p))) throw UsageError("output '" + p + "' would overwrite an input");
}

// ---- shared loading ------------------------------------------------------------

Schema load_schema(const std::string& path) { return Schema::from_json(read_json(path)); }

/// Loads a data file that has already been through `ingest`. Re-filtering
/// must drop nothing, otherwise record order would differ between commands.
Dataset load_clean(const std::string& path, const Schema& schema) {
    IngestResult r = ingest_csv(path, schema);
    if (r.report.parse_rejected > 0 || r.report.output_count != r.report.input_count)
        throw InvalidInput("'" + path + "' still has rows that fail parsing or the filters (" +
                           std::to_string(r.report.input_count - r.report.output_count) +
                           " dropped); run `pdval ingest` first");
    if (r.data.size() == 0) throw InvalidInput("'" + path + "' has no records");
    return std::move(r.data);
}

Grouping load_grouping(const std::string& path) { return path.empty() ? Grouping{} : Grouping::from_json(read_json(path)); }

SpatialGraph load_graph(const std::string& path) { return graph_from_json(read_json(path)); }

std::map<std::string, double> parse_weights(const std::vector<std::string>& items) {
    std::map<std::string, double> out;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--weight expects name=value, got '" + item + "'");
        try {
            std::size_t used = 0;
            const std::string num = item.substr(eq + 1);
            const double w = std::stod(num, &used);
            if (used != num.size()) throw std::invalid_argument("trailing text");
            out[item.substr(0, eq)] = w;
        } catch (const std::exception&) {
            throw UsageError("--weight value in '" + item + "' is not a number");
        }
    }
    return out;
}

// ---- option groups shared by train / sensitivity ----------------------------------

struct ModelFlags {
    std::string model = "pd_tgcn";
    std::size_t hidden_dim = 32;
    std::size_t heads = 4;
    std::size_t d_head = 16;

    void add(CLI::App* app) {
        app->add_option("--model", model, "pd_gcn, pd_tgcn or linreg")->capture_default_str();
        app->add_option("--hidden-dim", hidden_dim, "Hidden width")->capture_default_str();
        app->add_option("--heads", heads, "Attention heads (pd_tgcn)")->capture_default_str();
        app->add_option("--d-head", d_head, "Width per attention head (pd_tgcn)")->capture_default_str();
    }
    ModelSpec spec(std::uint64_t seed) const {
        ModelSpec s;
        try {
            s.kind = parse_model_kind(model);
        } catch (const InvalidInput& e) {
            throw UsageError(e.what());
        }
        s.hidden_dim = hidden_dim;
        s.heads = heads;
        s.d_head = d_head;
        s.seed = seed;
        return s;
    }
};

struct TrainFlags {
    std::size_t epochs = 300;
    double lr = 1e-3;
    std::string optimizer = "adam";
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    double split_ratio = 0.75;
    std::uint64_t seed = 0;
    std::size_t patience = 0;
    std::size_t moran_k = 8;
    std::size_t moran_permutations = 999;

    void add(CLI::App* app) {
        app->add_option("--epochs", epochs, "Optimizer steps (full-graph)")->capture_default_str();
        app->add_option("--lr", lr, "Learning rate")->capture_default_str();
        app->add_option("--optimizer", optimizer, "adam or sgd")->capture_default_str();
        app->add_option("--beta1", beta1, "Adam beta1")->capture_default_str();
        app->add_option("--beta2", beta2, "Adam beta2")->capture_default_str();
        app->add_option("--epsilon", epsilon, "Adam epsilon")->capture_default_str();
        app->add_option("--split-ratio", split_ratio, "Train fraction")->capture_default_str();
        app->add_option("--seed", seed, "Seed for split, init and permutations")->capture_default_str();
        app->add_option("--patience", patience, "Early stop after this many steps without improvement (0: off)")
            ->capture_default_str();
        app->add_option("--moran-k", moran_k, "Neighbors for the Moran weights")->capture_default_str();
        app->add_option("--moran-permutations", moran_permutations, "Moran permutations")->capture_default_str();
    }
    TrainConfig config() const {
        TrainConfig c;
        c.epochs = epochs;
        c.learning_rate = lr;
        try {
            c.optimizer = parse_optimizer(optimizer);
        } catch (const InvalidInput& e) {
            throw UsageError(e.what());
        }
        c.adam = {beta1, beta2, epsilon};
        c.split_ratio = split_ratio;
        c.seed = seed;
        if (patience > 0) c.early_stop_patience = patience;
        c.moran_k = moran_k;
        c.moran_permutations = moran_permutations;
        try {
            c.validate();
        } catch (const InvalidInput& e) {
            throw UsageError(e.what());
        }
        return c;
    }
};

void write_report(const EvalReport& rep, const std::string& dir) {
    write_file_atomic(in_dir(dir, "report.json"), dump(rep.to_json()));
    write_file_atomic(in_dir(dir, "per_group_mape.csv"), rep.per_group_csv());
}

} // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // Training allocates many large, short-lived buffers; keep them on the heap.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    CLI::App app{"pdval: peer-dependence graph models for house price valuation"};
    app.require_subcommand(1);
    app.fallthrough(false);
    std::string config_path;

    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON file supplying any option; flags override it");
    };

    // generate
    auto* gen = app.add_subcommand("generate", "Write a synthetic housing market (CSV + schema + grouping)");
    SyntheticOptions so;
    std::string gen_out, gen_schema, gen_grouping;
    gen->add_option("--n", so.n, "Number of houses")->capture_default_str();
    gen->add_option("--strength", so.spatial_strength, "Spatial strength in [0, 1]")->capture_default_str();
    gen->add_option("--seed", so.seed, "Seed")->capture_default_str();
    gen->add_option("--noise-sd", so.noise_sd, "Log-price noise")->capture_default_str();
    gen->add_option("--appraisal-noise-sd", so.appraisal_noise_sd, "Log-appraisal noise")->capture_default_str();
    gen->add_option("--district-grid", so.district_grid, "Districts per side")->capture_default_str();
    gen->add_option("--out", gen_out, "Output CSV (required)");
    gen->add_option("--schema-out", gen_schema, "Schema JSON (default: schema.json next to --out)");
    gen->add_option("--grouping-out", gen_grouping, "Grouping JSON (default: grouping.json next to --out)");
    add_config(gen);

    // ingest
    auto* ing = app.add_subcommand("ingest", "Parse and filter a raw CSV");
    std::string ing_in, ing_schema, ing_out, ing_report, ing_rejects;
    ing->add_option("--input", ing_in, "Raw CSV (required)");
    ing->add_option("--schema", ing_schema, "Schema JSON (required)");
    ing->add_option("--out", ing_out, "Filtered CSV (required)");
    ing->add_option("--report", ing_report, "Filter report JSON (default: filter_report.json next to --out)");
    ing->add_option("--rejects", ing_rejects, "Reject CSV (default: rejects.csv next to --out)");
    add_config(ing);

    // build-graph
    auto* bg = app.add_subcommand("build-graph", "Build the KNHS peer graph");
    std::string bg_data, bg_schema, bg_out;
    double bg_t = 0.0;
    std::size_t bg_k = 8;
    std::string bg_variant = "normal";
    std::uint64_t bg_seed = 0;
    std::vector<std::string> bg_weights, bg_similarity;
    unsigned bg_threads = 1;
    bg->add_option("--data", bg_data, "Filtered CSV (required)");
    bg->add_option("--schema", bg_schema, "Schema JSON (required)");
    bg->add_option("--threshold-km", bg_t, "Geographic threshold t in km (required)");
    bg->add_option("--k", bg_k, "Peers per house")->capture_default_str();
    bg->add_option("--variant", bg_variant, "normal, geo or random")->capture_default_str();
    bg->add_option("--seed", bg_seed, "Seed for the random variant")->capture_default_str();
    bg->add_option("--weight", bg_weights, "Feature weight name=value (repeatable)");
    bg->add_option("--similarity", bg_similarity, "Similarity features (default: all continuous)");
    bg->add_option("--threads", bg_threads, "Threads for the neighborhood scan (0: all cores)")->capture_default_str();
    bg->add_option("--out", bg_out, "Graph JSON (required)");
    add_config(bg);

    // train
    auto* tr = app.add_subcommand("train", "Train a model and report on the test split");
    std::string tr_data, tr_schema, tr_graph, tr_grouping, tr_out;
    ModelFlags tr_model;
    TrainFlags tr_flags;
    tr->add_option("--data", tr_data, "Filtered CSV (required)");
    tr->add_option("--schema", tr_schema, "Schema JSON (required)");
    tr->add_option("--graph", tr_graph, "Graph JSON (required unless --model linreg)");
    tr->add_option("--grouping", tr_grouping, "Grouping JSON for per-group metrics");
    tr->add_option("--out-dir", tr_out, "Output directory (required)");
    tr_model.add(tr);
    tr_flags.add(tr);
    add_config(tr);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint");
    std::string ev_ckpt, ev_data, ev_schema, ev_graph, ev_grouping, ev_out;
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint JSON (required)");
    ev->add_option("--data", ev_data, "Filtered CSV (required)");
    ev->add_option("--schema", ev_schema, "Schema JSON (required)");
    ev->add_option("--graph", ev_graph, "Graph JSON (required for graph models)");
    ev->add_option("--grouping", ev_grouping, "Grouping JSON for per-group metrics");
    ev->add_option("--out-dir", ev_out, "Output directory (required)");
    add_config(ev);

    // sensitivity
    auto* se = app.add_subcommand("sensitivity", "Grid over feature weight, k and KNHS variant");
    std::string se_data, se_schema, se_out, se_weight_feature = "appraisal_uf";
    double se_t = 0.0;
    std::vector<double> se_w{1.2, 1.5, 1.8, 3.0};
    std::vector<std::size_t> se_k{6, 8, 10, 12, 14, 16};
    std::vector<std::string> se_variants{"normal"}, se_similarity;
    unsigned se_jobs = 1;
    ModelFlags se_model;
    TrainFlags se_flags;
    se->add_option("--data", se_data, "Filtered CSV (required)");
    se->add_option("--schema", se_schema, "Schema JSON (required)");
    se->add_option("--threshold-km", se_t, "Geographic threshold t in km (required)");
    se->add_option("--weights", se_w, "Weight values (0: unweighted)")->delimiter(',')->capture_default_str();
    se->add_option("--ks", se_k, "k values")->delimiter(',')->capture_default_str();
    se->add_option("--variants", se_variants, "KNHS variants")->delimiter(',')->capture_default_str();
    se->add_option("--weight-feature", se_weight_feature, "Feature that receives the weight")->capture_default_str();
    se->add_option("--similarity", se_similarity, "Similarity features (default: all continuous)");
    se->add_option("--jobs", se_jobs, "Cells trained in parallel")->capture_default_str();
    se->add_option("--out", se_out, "Output CSV (required)");
    se_model.add(se);
    se_flags.add(se);
    add_config(se);

    // moran
    auto* mo = app.add_subcommand("moran", "Moran's I of house prices with a permutation p-value");
    std::string mo_data, mo_schema, mo_out, mo_variable = "log_price";
    std::size_t mo_k = 8, mo_perm = 999;
    std::uint64_t mo_seed = 0;
    mo->add_option("--data", mo_data, "Filtered CSV (required)");
    mo->add_option("--schema", mo_schema, "Schema JSON (required)");
    mo->add_option("--k", mo_k, "Neighbors in the weight matrix")->capture_default_str();
    mo->add_option("--permutations", mo_perm, "Permutations")->capture_default_str();
    mo->add_option("--seed", mo_seed, "Permutation seed")->capture_default_str();
    mo->add_option("--variable", mo_variable, "log_price or price")->capture_default_str();
    mo->add_option("--out", mo_out, "Output JSON (required)");
    add_config(mo);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        merge_config(sub, config_path);

        if (sub == gen) {
            require(gen_out, "--out");
            if (gen_schema.empty()) gen_schema = sibling(gen_out, "schema.json");
            if (gen_grouping.empty()) gen_grouping = sibling(gen_out, "grouping.json");
            const auto m = generate_synthetic(so);
            write_file_atomic(gen_out, dataset_to_csv(m.data, m.schema));
            json schema = m.schema.to_json();
            schema["schema_version"] = kSchemaVersion;
            write_file_atomic(gen_schema, dump(schema));
            json grouping = m.grouping.to_json();
            grouping["schema_version"] = kSchemaVersion;
            write_file_atomic(gen_grouping, dump(grouping));
            echo_config(gen, fs::path(gen_out).parent_path().string());
        } else if (sub == ing) {
            require(ing_in, "--input");
            require(ing_schema, "--schema");
            require(ing_out, "--out");
            if (ing_report.empty()) ing_report = sibling(ing_out, "filter_report.json");
            if (ing_rejects.empty()) ing_rejects = sibling(ing_out, "rejects.csv");
            check_outputs({ing_in, ing_schema}, {ing_out, ing_report, ing_rejects});
            const Schema schema = load_schema(ing_schema);
            const IngestResult r = ingest_csv(ing_in, schema);
            write_file_atomic(ing_out, dataset_to_csv(r.data, schema));
            write_file_atomic(ing_report, dump(r.report.to_json()));
            write_file_atomic(ing_rejects, rejects_to_csv(r.header, r.rejects));
            echo_config(ing, fs::path(ing_out).parent_path().string());
        } else if (sub == bg) {
            require(bg_data, "--data");
            require(bg_schema, "--schema");
            require(bg_out, "--out");
            if (!(bg_t > 0.0)) throw UsageError("--threshold-km must be given and > 0");
            const auto weights = parse_weights(bg_weights);
            check_outputs({bg_data, bg_schema}, {bg_out});
            const Schema schema = load_schema(bg_schema);
            const Dataset data = load_clean(bg_data, schema);
            GraphConfig gc;
            gc.threshold_km = bg_t;
            gc.k = bg_k;
            try {
                gc.variant = parse_variant(bg_variant);
            } catch (const InvalidInput& e) {
                throw UsageError(e.what());
            }
            gc.seed = bg_seed;
            gc.similarity_features = bg_similarity;
            gc.weights = weights;
            gc.log_features = schema.log_features;
            gc.threads = bg_threads;
            const auto built = build_graph(data, gc);
            json j = graph_to_json(built.graph);
            j["config"] = gc.to_json();
            j["isolated"] = built.isolated;
            write_file_atomic(bg_out, dump(j));
            if (!built.isolated.empty())
                std::cerr << "pdval: " << built.isolated.size() << " houses have no peer within " << bg_t << " km\n";
            echo_config(bg, fs::path(bg_out).parent_path().string(), {{"graph_config", gc.to_json()}});
        } else if (sub == tr) {
            require(tr_data, "--data");
            require(tr_schema, "--schema");
            require(tr_out, "--out-dir");
            const ModelSpec spec = tr_model.spec(tr_flags.seed);
            if (spec.kind != ModelKind::linreg) require(tr_graph, "--graph");
            const TrainConfig cfg = tr_flags.config();
            const Schema schema = load_schema(tr_schema);
            const Dataset data = load_clean(tr_data, schema);
            SpatialGraph graph{data.size(), {}, {}};
            json graph_config = nullptr;
            if (!tr_graph.empty()) {
                const json gj = read_json(tr_graph);
                graph = graph_from_json(gj);
                graph_config = gj.value("config", json(nullptr));
            }
            TrainOptions opts;
            opts.log_features = schema.log_features;
            opts.graph_config = graph_config;
            opts.grouping = load_grouping(tr_grouping);
            const TrainResult res = train(spec, graph, data, cfg, opts);
            write_file_atomic(in_dir(tr_out, "checkpoint.json"), dump(res.checkpoint.to_json()));
            write_report(res.report, tr_out);
            std::string loss = "step,train_loss\n";
            for (std::size_t i = 0; i < res.loss_history.size(); ++i)
                loss += std::to_string(i) + "," + format_double(res.loss_history[i]) + "\n";
            write_file_atomic(in_dir(tr_out, "loss_history.csv"), loss);
            echo_config(tr, tr_out, {{"model", spec_to_json(res.checkpoint.spec)}, {"train_config", cfg.to_json()}});
        } else if (sub == ev) {
            require(ev_ckpt, "--checkpoint");
            require(ev_data, "--data");
            require(ev_schema, "--schema");
            require(ev_out, "--out-dir");
            const Checkpoint ck = Checkpoint::from_json(read_json(ev_ckpt));
            if (ck.spec.kind != ModelKind::linreg) require(ev_graph, "--graph");
            const Schema schema = load_schema(ev_schema);
            const Dataset data = load_clean(ev_data, schema);
            const SpatialGraph graph = ev_graph.empty() ? SpatialGraph{data.size(), {}, {}} : load_graph(ev_graph);
            const EvalReport rep = evaluate(ck, graph, data, load_grouping(ev_grouping));
            write_report(rep, ev_out);
            echo_config(ev, ev_out);
        } else if (sub == se) {
            require(se_data, "--data");
            require(se_schema, "--schema");
            require(se_out, "--out");
            if (!(se_t > 0.0)) throw UsageError("--threshold-km must be given and > 0");
            check_outputs({se_data, se_schema}, {se_out});
            const Schema schema = load_schema(se_schema);
            const Dataset data = load_clean(se_data, schema);
            SensitivityConfig sc;
            sc.spec = se_model.spec(se_flags.seed);
            sc.train = se_flags.config();
            sc.graph.threshold_km = se_t;
            sc.graph.similarity_features = se_similarity;
            sc.graph.log_features = schema.log_features;
            sc.weight_feature = se_weight_feature;
            sc.w_values = se_w;
            sc.k_values = se_k;
            sc.variants.clear();
            for (const auto& v : se_variants) {
                try {
                    sc.variants.push_back(parse_variant(v));
                } catch (const InvalidInput& e) {
                    throw UsageError(e.what());
                }
            }
            sc.jobs = se_jobs == 0 ? 1 : se_jobs;
            const auto rows = sensitivity_grid(data, schema.log_features, sc);
            write_file_atomic(se_out, sensitivity_csv(rows));
            json errors = json::array();
            for (const auto& r : rows)
                if (!r.error.empty()) {
                    std::cerr << "pdval: cell (" << to_string(r.variant) << ", w=" << r.weight << ", k=" << r.k
                              << ") failed: " << r.error << "\n";
                    errors.push_back({{"knhs", to_string(r.variant)}, {"weight", r.weight}, {"k", r.k}, {"error", r.error}});
                }
            echo_config(se, fs::path(se_out).parent_path().string(),
                        {{"train_config", sc.train.to_json()}, {"failed_cells", errors}});
        } else if (sub == mo) {
            require(mo_data, "--data");
            require(mo_schema, "--schema");
            require(mo_out, "--out");
            if (mo_variable != "log_price" && mo_variable != "price")
                throw UsageError("--variable must be log_price or price");
            check_outputs({mo_data, mo_schema}, {mo_out});
            const Schema schema = load_schema(mo_schema);
            const Dataset data = load_clean(mo_data, schema);
            std::vector<double> values = data.prices();
            if (mo_variable == "log_price")
                for (double& v : values) v = std::log(v);
            const auto points = data.points();
            const auto r = morans_i(values, knn_weights(points, mo_k), mo_perm, mo_seed);
            json j = {{"schema_version", kSchemaVersion}, {"I", r.i},          {"p", r.p_value},
                      {"n", data.size()},                 {"k", mo_k},         {"permutations", mo_perm},
                      {"seed", mo_seed},                  {"variable", mo_variable}};
            write_file_atomic(mo_out, dump(j));
            echo_config(mo, fs::path(mo_out).parent_path().string());
        }
    } catch (const UsageError& e) {
        std::cerr << "pdval: " << e.what() << "\nRun with --help for usage.\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "pdval: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
