#include "giva/nn.hpp"

#include <cmath>
#include <string>

#include "giva/adapters.hpp"
#include "giva/error.hpp"

namespace giva::nn {

namespace {

const LinearLayer& stage_first_layer(const Stage& s) {
    if (const auto* d = std::get_if<DenseStage>(&s)) {
        return d->layer;
    }
    return std::get<AttentionStage>(s).query;
}

index_t stage_in_dim(const Stage& s) { return stage_first_layer(s).in_dim(); }

index_t stage_out_dim(const Stage& s) {
    if (const auto* d = std::get_if<DenseStage>(&s)) {
        return d->layer.out_dim();
    }
    return std::get<AttentionStage>(s).output.out_dim();
}

void check_layer(const LinearLayer& layer, index_t expect_in, const std::string& where) {
    if (layer.in_dim() != expect_in) {
        throw ConfigError(where + ": input dim " + std::to_string(layer.in_dim()) +
                          " does not match incoming dim " + std::to_string(expect_in));
    }
    if (layer.bias && layer.bias->size() != layer.out_dim()) {
        throw ConfigError(where + ": bias length " + std::to_string(layer.bias->size()) +
                          " vs output dim " + std::to_string(layer.out_dim()));
    }
    if (layer.adapter && (layer.adapter->out_dim() != layer.out_dim() ||
                          layer.adapter->in_dim() != layer.in_dim())) {
        throw ConfigError(where + ": adapter shape mismatch");
    }
}

Matrix adapter_contribution(const adapters::AdapterState& st, const Matrix& x,
                            AdapterCache* cache) {
    if (const auto* v = std::get_if<adapters::VectorAdapterState>(&st.value)) {
        Matrix c = matmul(*v->a, x);
        Matrix p = matmul(scale_cols(*v->b, v->lambda), c);
        Matrix contrib = scale_rows(v->gamma, p);
        if (cache) {
            cache->c = std::move(c);
            cache->p = std::move(p);
        }
        return contrib;
    }
    const auto& l = std::get<adapters::LoraState>(st.value);
    Matrix c = matmul(l.a, x);
    Matrix contrib = scaled(matmul(l.b, c), l.scaling());
    if (cache) {
        cache->c = std::move(c);
    }
    return contrib;
}

Matrix layer_apply(const LinearLayer& layer, const Matrix& x, AdapterCache* cache) {
    Matrix z = matmul(layer.weight, x);
    if (layer.bias) {
        for (index_t i = 0; i < z.rows(); ++i) {
            const double b = (*layer.bias)[i];
            for (index_t j = 0; j < z.cols(); ++j) {
                z(i, j) += b;
            }
        }
    }
    if (layer.adapter) {
        z = add(z, adapter_contribution(*layer.adapter, x, cache));
    }
    return z;
}

Matrix col_softmax(const Matrix& z) {
    Matrix p(z.rows(), z.cols());
    for (index_t j = 0; j < z.cols(); ++j) {
        double zmax = z(0, j);
        for (index_t i = 1; i < z.rows(); ++i) {
            zmax = std::max(zmax, z(i, j));
        }
        double sum = 0.0;
        for (index_t i = 0; i < z.rows(); ++i) {
            p(i, j) = std::exp(z(i, j) - zmax);
            sum += p(i, j);
        }
        for (index_t i = 0; i < z.rows(); ++i) {
            p(i, j) /= sum;
        }
    }
    return p;
}

Matrix apply_activation(Activation act, const Matrix& z) {
    switch (act) {
    case Activation::identity:
        return z;
    case Activation::relu: {
        Matrix out = z;
        for (double& v : out.data()) {
            v = v > 0.0 ? v : 0.0;
        }
        return out;
    }
    case Activation::tanh: {
        Matrix out = z;
        for (double& v : out.data()) {
            v = std::tanh(v);
        }
        return out;
    }
    case Activation::softmax_output:
        return col_softmax(z);
    }
    throw ConfigError("unknown activation");
}

Matrix activation_backward(Activation act, const DenseCache& dc, const Matrix& dout) {
    switch (act) {
    case Activation::identity:
        return dout;
    case Activation::relu: {
        Matrix dz = dout;
        for (index_t i = 0; i < dz.rows(); ++i) {
            for (index_t j = 0; j < dz.cols(); ++j) {
                if (dc.z(i, j) <= 0.0) {
                    dz(i, j) = 0.0;
                }
            }
        }
        return dz;
    }
    case Activation::tanh: {
        Matrix dz = dout;
        for (index_t i = 0; i < dz.rows(); ++i) {
            for (index_t j = 0; j < dz.cols(); ++j) {
                dz(i, j) *= 1.0 - dc.out(i, j) * dc.out(i, j);
            }
        }
        return dz;
    }
    case Activation::softmax_output:
        break;
    }
    throw ContractError("activation_backward: softmax gradient is fused into the loss");
}

std::vector<double> row_sums(const Matrix& m) {
    std::vector<double> s(m.rows(), 0.0);
    for (index_t i = 0; i < m.rows(); ++i) {
        for (index_t j = 0; j < m.cols(); ++j) {
            s[i] += m(i, j);
        }
    }
    return s;
}

// Shared single-layer backward. Fills the flat gradient slot and returns the
// input gradient (W + dW)^T dz without materializing dW.
Matrix layer_backward(const LinearLayer& layer, const Matrix& dz, const Matrix& x,
                      const AdapterCache& ad, index_t slot, Gradients& grads) {
    grads.weight[slot] = matmul(dz, transpose(x));
    if (layer.bias) {
        grads.bias[slot] = row_sums(dz);
    }
    Matrix dx = matmul(transpose(layer.weight), dz);
    if (!layer.adapter) {
        return dx;
    }
    AdapterGrads& ag = grads.adapter[slot];
    if (const auto* v = std::get_if<adapters::VectorAdapterState>(&layer.adapter->value)) {
        ag.gamma.assign(v->gamma.size(), 0.0);
        for (index_t i = 0; i < dz.rows(); ++i) {
            for (index_t j = 0; j < dz.cols(); ++j) {
                ag.gamma[i] += dz(i, j) * ad.p(i, j);
            }
        }
        Matrix t = matmul(transpose(*v->b), scale_rows(v->gamma, dz));
        ag.lambda.assign(v->lambda.size(), 0.0);
        for (index_t i = 0; i < t.rows(); ++i) {
            for (index_t j = 0; j < t.cols(); ++j) {
                ag.lambda[i] += t(i, j) * ad.c(i, j);
            }
        }
        return add(dx, matmul(transpose(*v->a), scale_rows(v->lambda, t)));
    }
    const auto& l = std::get<adapters::LoraState>(layer.adapter->value);
    const double s = l.scaling();
    ag.b = scaled(matmul(dz, transpose(ad.c)), s);
    Matrix bt_dz = matmul(transpose(l.b), dz);
    ag.a = scaled(matmul(bt_dz, transpose(x)), s);
    return add(dx, scaled(matmul(transpose(l.a), bt_dz), s));
}

struct LossGrad {
    double loss = 0.0;
    Matrix dlast;
    bool wrt_preactivation = false;
};

LossGrad loss_grad(const Model& model, const ForwardResult& fr, const Targets& targets,
                   bool want_grad) {
    const index_t n = fr.outputs.cols();
    LossGrad lg;
    if (model.loss == LossKind::mse) {
        const auto* y = std::get_if<Matrix>(&targets);
        if (!y) {
            throw ContractError("mse loss requires matrix targets");
        }
        if (y->rows() != fr.outputs.rows() || y->cols() != n) {
            throw DimensionError("mse targets " + std::to_string(y->rows()) + "x" +
                                 std::to_string(y->cols()) + " vs outputs " +
                                 std::to_string(fr.outputs.rows()) + "x" + std::to_string(n));
        }
        Matrix diff = sub(fr.outputs, *y);
        double sse = 0.0;
        for (double v : diff.data()) {
            sse += v * v;
        }
        lg.loss = sse / (2.0 * static_cast<double>(n));
        if (want_grad) {
            lg.dlast = scaled(diff, 1.0 / static_cast<double>(n));
        }
        return lg;
    }

    const auto* labels = std::get_if<std::vector<int>>(&targets);
    if (!labels) {
        throw ContractError("cross-entropy loss requires class-index targets");
    }
    if (labels->size() != n) {
        throw DimensionError("cross-entropy: " + std::to_string(labels->size()) +
                             " labels for batch of " + std::to_string(n));
    }
    // The final stage is dense with softmax output (checked by validate());
    // compute the loss from its pre-activation values for stability.
    const auto& dc = std::get<DenseCache>(fr.caches.back());
    const index_t m = dc.z.rows();
    for (index_t j = 0; j < n; ++j) {
        const int y = (*labels)[j];
        if (y < 0 || static_cast<index_t>(y) >= m) {
            throw DataError("label " + std::to_string(y) + " out of range for " +
                            std::to_string(m) + " classes (column " + std::to_string(j) + ")");
        }
        double zmax = dc.z(0, j);
        for (index_t i = 1; i < m; ++i) {
            zmax = std::max(zmax, dc.z(i, j));
        }
        double sum = 0.0;
        for (index_t i = 0; i < m; ++i) {
            sum += std::exp(dc.z(i, j) - zmax);
        }
        lg.loss += zmax + std::log(sum) - dc.z(static_cast<index_t>(y), j);
    }
    lg.loss /= static_cast<double>(n);
    if (want_grad) {
        lg.dlast = scaled(fr.outputs, 1.0 / static_cast<double>(n));
        for (index_t j = 0; j < n; ++j) {
            lg.dlast(static_cast<index_t>((*labels)[j]), j) -= 1.0 / static_cast<double>(n);
        }
        lg.wrt_preactivation = true;
    }
    return lg;
}

index_t flat_layer_count(const Model& model) {
    index_t c = 0;
    for (const Stage& s : model.stages) {
        c += std::holds_alternative<DenseStage>(s) ? 1 : 4;
    }
    return c;
}

} // namespace

index_t Model::input_dim() const {
    if (stages.empty()) {
        throw ConfigError("model has no stages");
    }
    return stage_in_dim(stages.front());
}

index_t Model::output_dim() const {
    if (stages.empty()) {
        throw ConfigError("model has no stages");
    }
    return stage_out_dim(stages.back());
}

void Model::validate() const {
    if (stages.empty()) {
        throw ConfigError("model has no stages");
    }
    index_t cur = stage_in_dim(stages.front());
    for (index_t i = 0; i < stages.size(); ++i) {
        const std::string where = "stage " + std::to_string(i);
        const bool last = i + 1 == stages.size();
        if (const auto* d = std::get_if<DenseStage>(&stages[i])) {
            check_layer(d->layer, cur, where);
            if (d->act == Activation::softmax_output &&
                !(last && loss == LossKind::cross_entropy)) {
                throw ConfigError(where + ": softmax activation is only valid on the final "
                                          "stage under cross-entropy loss");
            }
            if (last && loss == LossKind::cross_entropy &&
                d->act != Activation::softmax_output) {
                throw ConfigError(where + ": cross-entropy loss requires softmax output");
            }
            cur = d->layer.out_dim();
        } else {
            const auto& a = std::get<AttentionStage>(stages[i]);
            check_layer(a.query, cur, where + ".q");
            check_layer(a.key, cur, where + ".k");
            check_layer(a.value, cur, where + ".v");
            if (a.key.out_dim() != a.query.out_dim() || a.value.out_dim() != a.query.out_dim()) {
                throw ConfigError(where + ": query/key/value projection dims disagree");
            }
            check_layer(a.output, a.query.out_dim(), where + ".o");
            if (last && loss == LossKind::cross_entropy) {
                throw ConfigError(where + ": cross-entropy loss requires a dense softmax "
                                          "output stage");
            }
            cur = a.output.out_dim();
        }
    }
}

ForwardResult forward(const Model& model, const Matrix& inputs) {
    model.validate();
    if (inputs.rows() != model.input_dim()) {
        throw DimensionError("forward: inputs have dim " + std::to_string(inputs.rows()) +
                             ", model expects " + std::to_string(model.input_dim()));
    }
    if (inputs.cols() == 0) {
        throw DataError("forward: empty batch");
    }
    ForwardResult fr;
    fr.caches.reserve(model.stages.size());
    Matrix cur = inputs;
    for (const Stage& s : model.stages) {
        if (const auto* d = std::get_if<DenseStage>(&s)) {
            DenseCache dc;
            dc.x = cur;
            dc.z = layer_apply(d->layer, cur, &dc.ad);
            dc.out = apply_activation(d->act, dc.z);
            cur = dc.out;
            fr.caches.emplace_back(std::move(dc));
        } else {
            const auto& at = std::get<AttentionStage>(s);
            AttnCache ac;
            ac.x = cur;
            ac.q = layer_apply(at.query, cur, &ac.ad_q);
            ac.k = layer_apply(at.key, cur, &ac.ad_k);
            ac.v = layer_apply(at.value, cur, &ac.ad_v);
            const double scale = 1.0 / std::sqrt(static_cast<double>(ac.q.rows()));
            ac.p = col_softmax(scaled(matmul(transpose(ac.k), ac.q), scale));
            ac.y = matmul(ac.v, ac.p);
            cur = layer_apply(at.output, ac.y, &ac.ad_o);
            fr.caches.emplace_back(std::move(ac));
        }
    }
    fr.outputs = std::move(cur);
    return fr;
}

double evaluate(const Model& model, const Batch& batch) {
    ForwardResult fr = forward(model, batch.inputs);
    return loss_grad(model, fr, batch.targets, false).loss;
}

std::pair<double, Gradients> loss_and_grads(const Model& model, const Batch& batch) {
    ForwardResult fr = forward(model, batch.inputs);
    LossGrad lg = loss_grad(model, fr, batch.targets, true);

    Gradients grads;
    const index_t nflat = flat_layer_count(model);
    grads.layer_names.resize(nflat);
    grads.weight.resize(nflat);
    grads.bias.resize(nflat);
    grads.adapter.resize(nflat);

    // Flat slot base index per stage, in traversal order.
    std::vector<index_t> base(model.stages.size());
    index_t acc = 0;
    for (index_t i = 0; i < model.stages.size(); ++i) {
        base[i] = acc;
        acc += std::holds_alternative<DenseStage>(model.stages[i]) ? 1 : 4;
    }

    Matrix d = std::move(lg.dlast);
    for (index_t ri = model.stages.size(); ri-- > 0;) {
        const std::string lname = "L" + std::to_string(ri);
        if (const auto* ds = std::get_if<DenseStage>(&model.stages[ri])) {
            const auto& dc = std::get<DenseCache>(fr.caches[ri]);
            Matrix dz = (ri + 1 == model.stages.size() && lg.wrt_preactivation)
                            ? std::move(d)
                            : activation_backward(ds->act, dc, d);
            grads.layer_names[base[ri]] = lname;
            d = layer_backward(ds->layer, dz, dc.x, dc.ad, base[ri], grads);
        } else {
            const auto& at = std::get<AttentionStage>(model.stages[ri]);
            const auto& ac = std::get<AttnCache>(fr.caches[ri]);
            grads.layer_names[base[ri] + 0] = lname + ".q";
            grads.layer_names[base[ri] + 1] = lname + ".k";
            grads.layer_names[base[ri] + 2] = lname + ".v";
            grads.layer_names[base[ri] + 3] = lname + ".o";

            Matrix dy = layer_backward(at.output, d, ac.y, ac.ad_o, base[ri] + 3, grads);
            Matrix dv = matmul(dy, transpose(ac.p));
            Matrix dp = matmul(transpose(ac.v), dy);

            // Columnwise softmax Jacobian, folding in the 1/sqrt(p) score scale.
            const double scale = 1.0 / std::sqrt(static_cast<double>(ac.q.rows()));
            Matrix ds_scores(dp.rows(), dp.cols());
            for (index_t j = 0; j < dp.cols(); ++j) {
                double dot = 0.0;
                for (index_t i = 0; i < dp.rows(); ++i) {
                    dot += ac.p(i, j) * dp(i, j);
                }
                for (index_t i = 0; i < dp.rows(); ++i) {
                    ds_scores(i, j) = scale * ac.p(i, j) * (dp(i, j) - dot);
                }
            }
            Matrix dq = matmul(ac.k, ds_scores);
            Matrix dk = matmul(ac.q, transpose(ds_scores));

            Matrix dx = layer_backward(at.query, dq, ac.x, ac.ad_q, base[ri] + 0, grads);
            dx = add(dx, layer_backward(at.key, dk, ac.x, ac.ad_k, base[ri] + 1, grads));
            dx = add(dx, layer_backward(at.value, dv, ac.x, ac.ad_v, base[ri] + 2, grads));
            d = std::move(dx);
        }
    }
    return {lg.loss, std::move(grads)};
}

std::pair<double, std::vector<Matrix>> loss_and_full_grad(const Model& model,
                                                          const Batch& batch) {
    for (const ConstLayerRef& ref : linear_layers(model)) {
        const auto& ad = ref.layer->adapter;
        if (!ad) {
            continue;
        }
        bool preserving = false;
        if (const auto* v = std::get_if<adapters::VectorAdapterState>(&ad->value)) {
            preserving = true;
            for (double g : v->gamma) {
                if (g != 0.0) {
                    preserving = false;
                    break;
                }
            }
        } else {
            preserving = max_abs(std::get<adapters::LoraState>(ad->value).b) == 0.0;
        }
        if (!preserving) {
            throw ContractError("loss_and_full_grad: adapter on " + ref.name +
                                " has left its function-preserving initialization; "
                                "weight-space gradients must be taken at the pretrained point");
        }
    }
    auto [loss, grads] = loss_and_grads(model, batch);
    return {loss, std::move(grads.weight)};
}

std::pair<std::vector<double>, std::vector<double>> adapter_backward(const LinearLayer& layer,
                                                                     const Matrix& upstream,
                                                                     const Matrix& cached_input) {
    if (!layer.adapter) {
        throw ContractError("adapter_backward: layer has no adapter attached");
    }
    const auto* v = std::get_if<adapters::VectorAdapterState>(&layer.adapter->value);
    if (!v) {
        throw ContractError("adapter_backward: layer adapter has no gamma/lambda vectors");
    }
    if (upstream.rows() != layer.out_dim() || cached_input.rows() != layer.in_dim() ||
        upstream.cols() != cached_input.cols()) {
        throw ContractError("adapter_backward: stale or mismatched cache (upstream " +
                            std::to_string(upstream.rows()) + "x" +
                            std::to_string(upstream.cols()) + ", input " +
                            std::to_string(cached_input.rows()) + "x" +
                            std::to_string(cached_input.cols()) + ")");
    }
    Matrix c = matmul(*v->a, cached_input);
    Matrix p = matmul(scale_cols(*v->b, v->lambda), c);

    std::vector<double> dgamma(v->gamma.size(), 0.0);
    for (index_t i = 0; i < upstream.rows(); ++i) {
        for (index_t j = 0; j < upstream.cols(); ++j) {
            dgamma[i] += upstream(i, j) * p(i, j);
        }
    }
    Matrix t = matmul(transpose(*v->b), scale_rows(v->gamma, upstream));
    std::vector<double> dlambda(v->lambda.size(), 0.0);
    for (index_t i = 0; i < t.rows(); ++i) {
        for (index_t j = 0; j < t.cols(); ++j) {
            dlambda[i] += t(i, j) * c(i, j);
        }
    }
    return {std::move(dgamma), std::move(dlambda)};
}

std::vector<LayerRef> linear_layers(Model& model) {
    std::vector<LayerRef> out;
    for (index_t i = 0; i < model.stages.size(); ++i) {
        const std::string lname = "L" + std::to_string(i);
        if (auto* d = std::get_if<DenseStage>(&model.stages[i])) {
            out.push_back({&d->layer, lname});
        } else {
            auto& a = std::get<AttentionStage>(model.stages[i]);
            out.push_back({&a.query, lname + ".q"});
            out.push_back({&a.key, lname + ".k"});
            out.push_back({&a.value, lname + ".v"});
            out.push_back({&a.output, lname + ".o"});
        }
    }
    return out;
}

std::vector<ConstLayerRef> linear_layers(const Model& model) {
    std::vector<ConstLayerRef> out;
    for (const LayerRef& ref : linear_layers(const_cast<Model&>(model))) {
        out.push_back({ref.layer, ref.name});
    }
    return out;
}

} // namespace giva::nn
