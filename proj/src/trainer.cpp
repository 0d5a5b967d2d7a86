#include "giva/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "giva/adapters.hpp"
#include "giva/error.hpp"
#include "giva/rng.hpp"

namespace giva::trainer {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) {
        throw ConfigError("train.learning_rate must be > 0");
    }
    if (!(clip_norm > 0.0)) {
        throw ConfigError("train.clip_norm must be > 0");
    }
    if (warmup_fraction < 0.0 || warmup_fraction > 1.0) {
        throw ConfigError("train.warmup must be within [0, 1]");
    }
    if (steps < 1) {
        throw ConfigError("train.steps must be >= 1");
    }
    if (batch_size < 1) {
        throw ConfigError("train.batch_size must be >= 1");
    }
    if (evals_per_epoch < 1) {
        throw ConfigError("train.evals_per_epoch must be >= 1");
    }
    if (weight_decay < 0.0) {
        throw ConfigError("train.weight_decay must be >= 0");
    }
}

std::vector<ParamRef> trainable_params(nn::Model& model) {
    std::vector<ParamRef> out;
    for (nn::LayerRef& ref : nn::linear_layers(model)) {
        if (!ref.layer->adapter) {
            continue;
        }
        auto& state = *ref.layer->adapter;
        if (auto* v = std::get_if<adapters::VectorAdapterState>(&state.value)) {
            out.push_back({ref.name + ".gamma", std::span<double>(v->gamma)});
            out.push_back({ref.name + ".lambda", std::span<double>(v->lambda)});
        } else {
            auto& l = std::get<adapters::LoraState>(state.value);
            out.push_back({ref.name + ".A", l.a.data()});
            out.push_back({ref.name + ".B", l.b.data()});
        }
    }
    return out;
}

std::vector<std::vector<double>> flatten_adapter_grads(const nn::Gradients& grads) {
    std::vector<std::vector<double>> out;
    for (index_t i = 0; i < grads.adapter.size(); ++i) {
        const nn::AdapterGrads& ag = grads.adapter[i];
        if (!ag.gamma.empty() || !ag.lambda.empty()) {
            out.push_back(ag.gamma);
            out.push_back(ag.lambda);
        } else if (!ag.a.empty() || !ag.b.empty()) {
            out.emplace_back(ag.a.data().begin(), ag.a.data().end());
            out.emplace_back(ag.b.data().begin(), ag.b.data().end());
        }
    }
    return out;
}

void sgd_step(std::span<double> params, std::span<const double> grads, double lr) {
    if (params.size() != grads.size()) {
        throw DimensionError("sgd_step: " + std::to_string(params.size()) + " params vs " +
                             std::to_string(grads.size()) + " grads");
    }
    for (index_t i = 0; i < params.size(); ++i) {
        params[i] -= lr * grads[i];
    }
}

void adamw_step(std::vector<ParamRef>& params, const std::vector<std::vector<double>>& grads,
                OptimState& state, const TrainConfig& cfg, double lr) {
    if (params.size() != grads.size()) {
        throw DimensionError("adamw_step: parameter/gradient block count mismatch");
    }
    if (state.m.empty()) {
        for (const ParamRef& p : params) {
            state.m.emplace_back(p.values.size(), 0.0);
            state.v.emplace_back(p.values.size(), 0.0);
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (index_t b = 0; b < params.size(); ++b) {
        std::span<double> p = params[b].values;
        const std::vector<double>& g = grads[b];
        if (p.size() != g.size() || p.size() != state.m[b].size()) {
            throw DimensionError("adamw_step: shape mismatch in block '" + params[b].name + "'");
        }
        for (index_t i = 0; i < p.size(); ++i) {
            state.m[b][i] = cfg.beta1 * state.m[b][i] + (1.0 - cfg.beta1) * g[i];
            state.v[b][i] = cfg.beta2 * state.v[b][i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = state.m[b][i] / bc1;
            const double vhat = state.v[b][i] / bc2;
            p[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p[i]);
        }
    }
}

double clip_grad_norm(std::vector<std::vector<double>>& grads, double threshold) {
    if (!(threshold > 0.0)) {
        throw ConfigError("clip_grad_norm: threshold must be > 0");
    }
    double sq = 0.0;
    for (const auto& g : grads) {
        for (double v : g) {
            sq += v * v;
        }
    }
    const double norm = std::sqrt(sq);
    if (norm > threshold) {
        const double scale = threshold / norm;
        for (auto& g : grads) {
            for (double& v : g) {
                v *= scale;
            }
        }
    }
    return norm;
}

double lr_at(index_t step, const TrainConfig& cfg) {
    const double peak = cfg.learning_rate;
    const index_t total = cfg.steps;
    index_t w = cfg.warmup_steps;
    if (w == 0 && cfg.warmup_fraction > 0.0) {
        w = static_cast<index_t>(std::llround(cfg.warmup_fraction * static_cast<double>(total)));
    }
    if (w > 0 && step < w) {
        return peak * static_cast<double>(step) / static_cast<double>(w);
    }
    if (cfg.schedule == Schedule::constant || total <= w) {
        return peak;
    }
    const double t = static_cast<double>(step - w) / static_cast<double>(total - w);
    if (cfg.schedule == Schedule::linear) {
        return peak * std::max(0.0, 1.0 - t);
    }
    return peak * 0.5 * (1.0 + std::cos(std::min(t, 1.0) * 3.14159265358979323846));
}

BatchSampler::BatchSampler(index_t n, index_t batch_size, std::uint64_t seed)
    : n_(n), bs_(std::min(batch_size, n)), seed_(seed), cached_epoch_(~index_t{0}), perm_(n) {
    if (n == 0 || batch_size == 0) {
        throw DataError("BatchSampler: empty dataset or zero batch size");
    }
    std::iota(perm_.begin(), perm_.end(), index_t{0});
}

std::vector<index_t> BatchSampler::batch_for_step(index_t step) {
    const index_t spe = steps_per_epoch();
    const index_t epoch = step / spe;
    if (epoch != cached_epoch_) {
        std::iota(perm_.begin(), perm_.end(), index_t{0});
        std::mt19937_64 gen(mix_seed(seed_, epoch));
        std::shuffle(perm_.begin(), perm_.end(), gen);
        cached_epoch_ = epoch;
    }
    const index_t k = step % spe;
    const index_t lo = k * bs_;
    const index_t hi = std::min(n_, lo + bs_);
    return std::vector<index_t>(perm_.begin() + static_cast<std::ptrdiff_t>(lo),
                                perm_.begin() + static_cast<std::ptrdiff_t>(hi));
}

namespace {

std::vector<std::vector<double>> snapshot(const std::vector<ParamRef>& params) {
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (const ParamRef& p : params) {
        out.emplace_back(p.values.begin(), p.values.end());
    }
    return out;
}

void check_finite_params(const std::vector<ParamRef>& params, index_t step) {
    for (const ParamRef& p : params) {
        for (double v : p.values) {
            if (!std::isfinite(v)) {
                throw DivergenceError("training diverged at step " + std::to_string(step) +
                                      ": non-finite value in " + p.name);
            }
        }
    }
}

} // namespace

TrainReport train(nn::Model& model, const datasets::Dataset& train_set,
                  const datasets::Dataset& val_set, const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    if (train_set.size() == 0 || val_set.size() == 0) {
        throw DataError("train: empty train or validation set");
    }
    std::vector<ParamRef> params = trainable_params(model);
    if (params.empty()) {
        throw ContractError("train: model has no trainable adapter parameters");
    }

    const auto t0 = std::chrono::steady_clock::now();
    BatchSampler sampler(train_set.size(), cfg.batch_size, cfg.seed);
    const index_t spe = sampler.steps_per_epoch();
    const index_t eval_every = std::max<index_t>(1, spe / cfg.evals_per_epoch);
    const nn::Batch val_all = val_set.all();

    TrainReport report;
    for (const ParamRef& p : params) {
        report.param_names.push_back(p.name);
    }
    report.best_val_loss = nn::evaluate(model, val_all);
    report.best_step = 0;
    report.best_params = snapshot(params);
    report.evals.push_back({0, nn::evaluate(model, train_set.all()), report.best_val_loss});

    OptimState opt;
    for (index_t step = 0; step < cfg.steps; ++step) {
        const nn::Batch batch = train_set.batch(sampler.batch_for_step(step));
        auto [loss, grads] = nn::loss_and_grads(model, batch);
        if (!std::isfinite(loss) || loss > cfg.divergence_threshold) {
            throw DivergenceError("training diverged at step " + std::to_string(step) +
                                  ": loss = " + std::to_string(loss));
        }
        report.step_loss.push_back(loss);

        std::vector<std::vector<double>> g = flatten_adapter_grads(grads);
        if (g.size() != params.size()) {
            throw ContractError("train: gradient blocks (" + std::to_string(g.size()) +
                                ") do not match trainable parameter blocks (" +
                                std::to_string(params.size()) + ")");
        }
        clip_grad_norm(g, cfg.clip_norm);
        const double lr = lr_at(step, cfg);
        if (cfg.optimizer == Optimizer::sgd) {
            for (index_t b = 0; b < params.size(); ++b) {
                sgd_step(params[b].values, g[b], lr);
            }
        } else {
            adamw_step(params, g, opt, cfg, lr);
        }
        check_finite_params(params, step);

        if ((step + 1) % eval_every == 0 || step + 1 == cfg.steps) {
            const double val = nn::evaluate(model, val_all);
            report.evals.push_back({step + 1, loss, val});
            if (val < report.best_val_loss) {
                report.best_val_loss = val;
                report.best_step = step + 1;
                report.best_params = snapshot(params);
            }
        }
    }
    report.final_val_loss = report.evals.back().val_loss;
    report.final_train_loss = report.step_loss.back();
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

void load_params(nn::Model& model, const std::vector<std::vector<double>>& values) {
    std::vector<ParamRef> params = trainable_params(model);
    if (params.size() != values.size()) {
        throw ContractError("load_params: snapshot has " + std::to_string(values.size()) +
                            " blocks, model has " + std::to_string(params.size()));
    }
    for (index_t b = 0; b < params.size(); ++b) {
        if (params[b].values.size() != values[b].size()) {
            throw ContractError("load_params: size mismatch in block '" + params[b].name + "'");
        }
        std::copy(values[b].begin(), values[b].end(), params[b].values.begin());
    }
}

} // namespace giva::trainer
