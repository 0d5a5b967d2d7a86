#include "giva/gradprobe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "giva/error.hpp"
#include "giva/linalg.hpp"
#include "giva/rng.hpp"

namespace giva::gradprobe {

GradientProbeReport estimate_first_step_gradient(const nn::Model& model,
                                                 const datasets::Dataset& data,
                                                 index_t num_batches, index_t batch_size,
                                                 std::uint64_t seed) {
    if (data.size() == 0) {
        throw DataError("estimate_first_step_gradient: empty data source");
    }
    if (num_batches < 1) {
        throw ConfigError("estimate_first_step_gradient: num_batches must be >= 1");
    }
    const index_t n = data.size();
    if (batch_size == 0) {
        batch_size = n;
    }
    batch_size = std::min(batch_size, n);

    // Seeded sampling without replacement per batch; the permutation restarts
    // once exhausted so large num_batches stay valid on small datasets.
    std::vector<index_t> perm(n);
    std::iota(perm.begin(), perm.end(), index_t{0});
    std::mt19937_64 gen(mix_seed(seed, 0));
    std::shuffle(perm.begin(), perm.end(), gen);
    index_t cursor = 0;

    GradientProbeReport report;
    report.num_batches = num_batches;
    report.seed = seed;

    for (index_t b = 0; b < num_batches; ++b) {
        if (cursor + batch_size > n) {
            std::shuffle(perm.begin(), perm.end(), gen);
            cursor = 0;
        }
        std::span<const index_t> idx(perm.data() + cursor, batch_size);
        cursor += batch_size;

        auto [loss, grads] = nn::loss_and_full_grad(model, data.batch(idx));
        if (!std::isfinite(loss)) {
            throw NumericalError("estimate_first_step_gradient: non-finite loss on batch " +
                                 std::to_string(b));
        }
        for (const Matrix& g : grads) {
            if (!g.all_finite()) {
                throw NumericalError("estimate_first_step_gradient: non-finite gradient on "
                                     "batch " +
                                     std::to_string(b));
            }
        }
        report.mean_loss += loss;
        report.total_examples += batch_size;
        if (b == 0) {
            report.grads = std::move(grads);
        } else {
            for (index_t l = 0; l < report.grads.size(); ++l) {
                report.grads[l] = add(report.grads[l], grads[l]);
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(num_batches);
    report.mean_loss *= inv;
    for (Matrix& g : report.grads) {
        g = scaled(g, inv);
        report.grad_norms.push_back(linalg::frobenius_norm(g));
    }
    for (const nn::ConstLayerRef& ref : linear_layers(model)) {
        report.layer_names.push_back(ref.name);
    }
    return report;
}

void attach_giva_adapters(nn::Model& model, const GradientProbeReport& report,
                          const adapters::AdapterConfig& cfg) {
    std::vector<nn::LayerRef> layers = nn::linear_layers(model);
    if (layers.size() != report.grads.size()) {
        throw ContractError("attach_giva_adapters: probe report covers " +
                            std::to_string(report.grads.size()) + " layers, model has " +
                            std::to_string(layers.size()));
    }
    for (index_t i = 0; i < layers.size(); ++i) {
        if (!report.layer_names.empty() && report.layer_names[i] != layers[i].name) {
            throw ContractError("attach_giva_adapters: probe layer '" + report.layer_names[i] +
                                "' does not match model layer '" + layers[i].name + "'");
        }
        adapters::AdapterConfig layer_cfg = cfg;
        layer_cfg.seed = mix_seed(cfg.seed, i);
        adapters::attach_adapter(*layers[i].layer,
                                 adapters::init_giva(*layers[i].layer, report.grads[i],
                                                     layer_cfg));
    }
}

void attach_basic_adapters(nn::Model& model, const adapters::AdapterConfig& cfg,
                           adapters::VeraBasisPool& pool) {
    for (nn::LayerRef& ref : nn::linear_layers(model)) {
        switch (cfg.method) {
        case adapters::Method::vera:
            adapters::attach_adapter(
                *ref.layer, adapters::init_vera(ref.layer->out_dim(), ref.layer->in_dim(), cfg,
                                                pool));
            break;
        case adapters::Method::osora:
            adapters::attach_adapter(*ref.layer, adapters::init_osora(*ref.layer, cfg));
            break;
        case adapters::Method::lora: {
            adapters::AdapterConfig layer_cfg = cfg;
            layer_cfg.seed = mix_seed(cfg.seed, 0x10a + std::hash<std::string>{}(ref.name));
            adapters::attach_adapter(
                *ref.layer,
                adapters::init_lora(ref.layer->out_dim(), ref.layer->in_dim(), layer_cfg));
            break;
        }
        case adapters::Method::giva:
            throw ConfigError("attach_basic_adapters: the gradient-informed method needs a "
                              "probe; use attach_giva_adapters");
        }
    }
}

} // namespace giva::gradprobe
