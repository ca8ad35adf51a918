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

#include "pdval/models.hpp"

#include "pdval/errors.hpp"
#include "pdval/rng.hpp"

#include <cmath>

namespace pdval {

std::string_view to_string(ModelKind k) {
    switch (k) {
    case ModelKind::pd_gcn: return "pd_gcn";
    case ModelKind::pd_tgcn: return "pd_tgcn";
    case ModelKind::linreg: return "linreg";
    }
    return "pd_tgcn";
}

ModelKind parse_model_kind(std::string_view s) {
    if (s == "pd_gcn") return ModelKind::pd_gcn;
    if (s == "pd_tgcn") return ModelKind::pd_tgcn;
    if (s == "linreg") return ModelKind::linreg;
    throw InvalidInput("unknown model kind '" + std::string(s) + "' (expected pd_gcn, pd_tgcn or linreg)");
}

std::size_t ModelSpec::input_dim() const {
    std::size_t d = continuous_dim;
    for (const auto& e : embedding_specs) d += e.dim;
    return d;
}

void ModelSpec::validate() const {
    if (input_dim() == 0) throw InvalidInput("model has no input features");
    for (const auto& e : embedding_specs)
        if (e.cardinality == 0 || e.dim == 0) throw InvalidInput("embedding spec with zero cardinality or width");
    if (kind == ModelKind::linreg) return;
    if (hidden_dim == 0) throw InvalidInput("hidden_dim must be at least 1");
    if (kind == ModelKind::pd_tgcn && (heads == 0 || d_head == 0))
        throw InvalidInput("heads and d_head must be at least 1");
    if (kind == ModelKind::pd_tgcn && edge_dim == 0) throw InvalidInput("edge_dim must be at least 1");
}

ParamSet init_params(const ModelSpec& spec) {
    spec.validate();
    if (spec.kind == ModelKind::linreg) throw InvalidInput("linreg parameters come from fit_linreg, not init_params");
    Rng rng(spec.seed);
    ParamSet p;
    for (std::size_t i = 0; i < spec.embedding_specs.size(); ++i) {
        const auto& e = spec.embedding_specs[i];
        p.emplace("emb." + std::to_string(i), glorot_uniform(e.cardinality, e.dim, rng));
    }
    const std::size_t in = spec.input_dim();
    const std::size_t hid = spec.hidden_dim;
    if (spec.kind == ModelKind::pd_gcn) {
        p.emplace("gcn1.w_self", glorot_uniform(in, hid, rng));
        p.emplace("gcn1.w_neigh", glorot_uniform(in, hid, rng));
        p.emplace("gcn2.w_self", glorot_uniform(hid, hid, rng));
        p.emplace("gcn2.w_neigh", glorot_uniform(hid, hid, rng));
        p.emplace("dense.w", glorot_uniform(hid, hid, rng));
        p.emplace("dense.b", Tensor::zeros({hid}));
    } else {
        const std::size_t att = spec.heads * spec.d_head;
        std::size_t layer_in = in;
        for (const char* layer : {"tc1", "tc2"}) {
            const std::string pre = layer;
            p.emplace(pre + ".w_query", glorot_uniform(layer_in, att, rng));
            p.emplace(pre + ".w_key", glorot_uniform(layer_in, att, rng));
            p.emplace(pre + ".w_value", glorot_uniform(layer_in, att, rng));
            p.emplace(pre + ".w_edge", glorot_uniform(spec.edge_dim, att, rng));
            p.emplace(pre + ".w_aggr", glorot_uniform(layer_in + att, hid, rng));
            layer_in = hid;
        }
    }
    p.emplace("out.w", glorot_uniform(hid, 1, rng));
    p.emplace("out.b", Tensor::zeros({1}));
    return p;
}

Var embed_inputs(Tape& tape, const BoundParams& params, const ModelSpec& spec, const ModelInputs& inputs) {
    const std::size_t n = inputs.n_nodes();
    if (inputs.continuous.rows() != n || inputs.continuous.cols() != spec.continuous_dim)
        throw InvalidShape("continuous inputs " + shape_string(inputs.continuous.shape) + " do not match " +
                           std::to_string(n) + " nodes x " + std::to_string(spec.continuous_dim) + " features");
    if (inputs.categorical.size() != spec.embedding_specs.size())
        throw InvalidShape("expected " + std::to_string(spec.embedding_specs.size()) + " categorical columns, got " +
                           std::to_string(inputs.categorical.size()));
    Var x = tape.leaf(inputs.continuous.rank() == 2 ? inputs.continuous : Tensor::zeros({n, 0}));
    for (std::size_t i = 0; i < spec.embedding_specs.size(); ++i) {
        if (inputs.categorical[i].size() != n) throw InvalidShape("categorical column length does not match nodes");
        x = concat_rows(x, gather_rows(params["emb." + std::to_string(i)], inputs.categorical[i]));
    }
    return x;
}

ForwardResult forward_pd_gcn(Tape& tape, const BoundParams& params, const ModelSpec& spec, const ModelInputs& inputs) {
    Var h = embed_inputs(tape, params, spec, inputs);
    h = gcn_layer(h, inputs.graph, {params["gcn1.w_self"], params["gcn1.w_neigh"]});
    h = gcn_layer(h, inputs.graph, {params["gcn2.w_self"], params["gcn2.w_neigh"]});
    h = dense(h, params["dense.w"], params["dense.b"], Activation::relu);
    return {dense(h, params["out.w"], params["out.b"], Activation::identity), {}};
}

ForwardResult forward_pd_tgcn(Tape& tape, const BoundParams& params, const ModelSpec& spec,
                              const ModelInputs& inputs) {
    if (inputs.edge_attrs.cols() != spec.edge_dim)
        throw InvalidShape("edge attributes have width " + std::to_string(inputs.edge_attrs.cols()) + ", expected " +
                           std::to_string(spec.edge_dim));
    Var h = embed_inputs(tape, params, spec, inputs);
    // One constant leaf feeds both layers: the attributes are never updated.
    const Var edges = tape.leaf(inputs.edge_attrs);
    ForwardResult res;
    for (const char* layer : {"tc1", "tc2"}) {
        const std::string pre = layer;
        const TransformerConvParams tp{params[pre + ".w_query"], params[pre + ".w_key"], params[pre + ".w_value"],
                                       params[pre + ".w_edge"],  params[pre + ".w_aggr"], spec.heads};
        auto out = transformer_conv(h, inputs.graph, edges, tp);
        h = out.out;
        res.attention.push_back(out.attention);
    }
    res.prediction = dense(h, params["out.w"], params["out.b"], Activation::identity);
    return res;
}

ForwardResult forward(Tape& tape, const BoundParams& params, const ModelSpec& spec, const ModelInputs& inputs) {
    switch (spec.kind) {
    case ModelKind::pd_gcn: return forward_pd_gcn(tape, params, spec, inputs);
    case ModelKind::pd_tgcn: return forward_pd_tgcn(tape, params, spec, inputs);
    case ModelKind::linreg: break;
    }
    throw InvalidInput("linreg has no graph forward pass");
}

std::vector<double> predict(const ParamSet& params, const ModelSpec& spec, const ModelInputs& inputs) {
    Tape tape;
    BoundParams bound(tape, params);
    return forward(tape, bound, spec, inputs).prediction.value().data;
}

// ---- hedonic baseline --------------------------------------------------------

std::vector<double> fit_linreg(const Matrix& x, std::span<const double> y) {
    const std::size_t n = x.rows, d = x.cols + 1;
    if (y.size() != n) throw InvalidInput("fit_linreg: target length does not match rows");
    if (n <= x.cols) throw InvalidInput("fit_linreg needs more rows than features");

    // Normal equations A = Z^T Z + jitter I, b = Z^T y with Z = [1 | X].
    Matrix a(d, d);
    std::vector<double> b(d, 0.0);
    std::vector<double> z(d);
    for (std::size_t r = 0; r < n; ++r) {
        z[0] = 1.0;
        for (std::size_t c = 0; c < x.cols; ++c) z[c + 1] = x(r, c);
        for (std::size_t i = 0; i < d; ++i) {
            b[i] += z[i] * y[r];
            for (std::size_t j = 0; j <= i; ++j) a(i, j) += z[i] * z[j];
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        a(i, i) += kLinregJitter;
        for (std::size_t j = 0; j < i; ++j) a(j, i) = a(i, j);
    }

    // Cholesky A = L L^T in place (lower triangle). A pivot lost to
    // cancellation relative to its diagonal means the jitter did not rescue
    // the system.
    for (std::size_t j = 0; j < d; ++j) {
        const double diag = a(j, j);
        double s = diag;
        for (std::size_t k = 0; k < j; ++k) s -= a(j, k) * a(j, k);
        if (!(s > 1e-15 * diag) || !std::isfinite(s))
            throw SingularSystem("normal equations are singular at column " + std::to_string(j));
        const double ljj = std::sqrt(s);
        a(j, j) = ljj;
        for (std::size_t i = j + 1; i < d; ++i) {
            double t = a(i, j);
            for (std::size_t k = 0; k < j; ++k) t -= a(i, k) * a(j, k);
            a(i, j) = t / ljj;
        }
    }
    std::vector<double> w(d);
    for (std::size_t i = 0; i < d; ++i) {
        double t = b[i];
        for (std::size_t k = 0; k < i; ++k) t -= a(i, k) * w[k];
        w[i] = t / a(i, i);
    }
    for (std::size_t i = d; i-- > 0;) {
        double t = w[i];
        for (std::size_t k = i + 1; k < d; ++k) t -= a(k, i) * w[k];
        w[i] = t / a(i, i);
    }
    for (double v : w)
        if (!std::isfinite(v)) throw SingularSystem("least-squares solution is not finite");
    return w;
}

std::vector<double> predict_linreg(std::span<const double> coefficients, const Matrix& x) {
    if (coefficients.size() != x.cols + 1) throw InvalidInput("coefficient count does not match feature count");
    std::vector<double> out(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
        double acc = coefficients[0];
        for (std::size_t c = 0; c < x.cols; ++c) acc += coefficients[c + 1] * x(r, c);
        out[r] = acc;
    }
    return out;
}

} // namespace pdval
