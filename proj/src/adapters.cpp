#include "giva/adapters.hpp"

#include <cmath>

#include "giva/error.hpp"
#include "giva/linalg.hpp"
#include "giva/rng.hpp"

namespace giva::adapters {

std::string method_name(Method m) {
    switch (m) {
    case Method::lora: return "lora";
    case Method::vera: return "vera";
    case Method::osora: return "osora";
    case Method::giva: return "giva";
    }
    throw ConfigError("method_name: unknown method");
}

Method method_from_name(const std::string& name) {
    if (name == "lora") return Method::lora;
    if (name == "vera") return Method::vera;
    if (name == "osora") return Method::osora;
    if (name == "giva") return Method::giva;
    throw ConfigError("unknown adapter method '" + name + "'");
}

std::string basis_name(GivaBasis b) {
    switch (b) {
    case GivaBasis::v_r_u_r: return "v_r_u_r";
    case GivaBasis::v_r_u_2r: return "v_r_u_2r";
    case GivaBasis::v_r_q: return "v_r_q";
    }
    throw ConfigError("basis_name: unknown basis");
}

GivaBasis basis_from_name(const std::string& name) {
    if (name == "v_r_u_r") return GivaBasis::v_r_u_r;
    if (name == "v_r_u_2r") return GivaBasis::v_r_u_2r;
    if (name == "v_r_q") return GivaBasis::v_r_q;
    throw ConfigError("unknown basis strategy '" + name + "'");
}

index_t AdapterState::rank() const {
    if (const auto* v = std::get_if<VectorAdapterState>(&value)) {
        return v->a->rows();
    }
    return std::get<LoraState>(value).a.rows();
}

index_t AdapterState::out_dim() const {
    if (const auto* v = std::get_if<VectorAdapterState>(&value)) {
        return v->b->rows();
    }
    return std::get<LoraState>(value).b.rows();
}

index_t AdapterState::in_dim() const {
    if (const auto* v = std::get_if<VectorAdapterState>(&value)) {
        return v->a->cols();
    }
    return std::get<LoraState>(value).a.cols();
}

GivaBases giva_bases_from_gradient(const Matrix& grad, index_t r, GivaBasis strategy,
                                   std::uint64_t seed, SvdRoute route) {
    const index_t m = grad.rows();
    const index_t d = grad.cols();
    const index_t need = (strategy == GivaBasis::v_r_u_2r) ? 2 * r : r;
    if (r < 1 || need > std::min(m, d)) {
        throw RankError("giva_bases_from_gradient: strategy needs " + std::to_string(need) +
                        " singular vectors but min(m, d) = " +
                        std::to_string(std::min(m, d)));
    }
    if (linalg::frobenius_norm(grad) == 0.0) {
        throw DegeneracyError("giva_bases_from_gradient: zero gradient has no "
                              "distinguished singular subspace");
    }

    linalg::SvdFactors f;
    const bool randomized =
        route == SvdRoute::randomized ||
        (route == SvdRoute::automatic && std::min(m, d) > 4 * need);
    if (randomized) {
        f = linalg::svd_lowrank(grad, need, 8, 4, mix_seed(seed, 11));
    } else {
        f = linalg::truncate_rank(linalg::svd_full(grad), need);
    }

    auto a = std::make_shared<Matrix>(r, d);
    for (index_t i = 0; i < r; ++i) {
        for (index_t j = 0; j < d; ++j) {
            (*a)(i, j) = f.V(j, i);
        }
    }

    auto b = std::make_shared<Matrix>(m, r);
    switch (strategy) {
    case GivaBasis::v_r_u_r:
        for (index_t i = 0; i < m; ++i) {
            for (index_t j = 0; j < r; ++j) {
                (*b)(i, j) = f.U(i, j);
            }
        }
        break;
    case GivaBasis::v_r_u_2r:
        for (index_t i = 0; i < m; ++i) {
            for (index_t j = 0; j < r; ++j) {
                (*b)(i, j) = f.U(i, r + j);
            }
        }
        break;
    case GivaBasis::v_r_q:
        *b = linalg::qr_orthonormal(gaussian_matrix(m, r, mix_seed(seed, 13)));
        break;
    }
    return {std::move(a), std::move(b)};
}

std::pair<std::shared_ptr<const Matrix>, std::shared_ptr<const Matrix>>
VeraBasisPool::bases(index_t m, index_t d, index_t r, bool shared) {
    if (r < 1 || r > std::min(m, d)) {
        throw RankError("VeraBasisPool: r=" + std::to_string(r) + " outside [1, " +
                        std::to_string(std::min(m, d)) + "]");
    }
    const auto key = std::make_tuple(m, d, r);
    if (shared) {
        auto it = pool_.find(key);
        if (it != pool_.end()) {
            return it->second;
        }
    }
    const std::uint64_t draw_seed = mix_seed(seed_, shared ? 0 : ++draws_);
    const std::uint64_t shape_stream = (m * 131 + d) * 131 + r;
    auto a = std::make_shared<Matrix>(
        kaiming_uniform_matrix(r, d, d, mix_seed(draw_seed, 2 * shape_stream)));
    auto b = std::make_shared<Matrix>(
        kaiming_uniform_matrix(m, r, r, mix_seed(draw_seed, 2 * shape_stream + 1)));
    ++materialized_;
    auto entry = std::make_pair(std::shared_ptr<const Matrix>(std::move(a)),
                                std::shared_ptr<const Matrix>(std::move(b)));
    if (shared) {
        pool_[key] = entry;
    }
    return entry;
}

namespace {

void require_rank(const char* op, index_t r, index_t m, index_t d) {
    if (r < 1 || r > std::min(m, d)) {
        throw RankError(std::string(op) + ": r=" + std::to_string(r) + " outside [1, " +
                        std::to_string(std::min(m, d)) + "]");
    }
}

} // namespace

std::shared_ptr<AdapterState> init_giva(const nn::LinearLayer& layer, const Matrix& grad,
                                        const AdapterConfig& cfg) {
    if (grad.rows() != layer.out_dim() || grad.cols() != layer.in_dim()) {
        throw DimensionError("init_giva: gradient shape " + std::to_string(grad.rows()) + "x" +
                             std::to_string(grad.cols()) + " does not match layer " +
                             std::to_string(layer.out_dim()) + "x" +
                             std::to_string(layer.in_dim()));
    }
    GivaBases bases =
        giva_bases_from_gradient(grad, cfg.rank, cfg.basis, cfg.seed, cfg.svd_route);
    auto state = std::make_shared<AdapterState>();
    state->method = Method::giva;
    state->basis = cfg.basis;
    state->value = VectorAdapterState{std::move(bases.a), std::move(bases.b),
                                      std::vector<double>(layer.out_dim(), 0.0),
                                      std::vector<double>(cfg.rank, 1.0)};
    return state;
}

std::shared_ptr<AdapterState> init_vera(index_t m, index_t d, const AdapterConfig& cfg,
                                        VeraBasisPool& pool) {
    auto [a, b] = pool.bases(m, d, cfg.rank, cfg.vera_shared);
    auto state = std::make_shared<AdapterState>();
    state->method = Method::vera;
    state->value = VectorAdapterState{std::move(a), std::move(b), std::vector<double>(m, 0.0),
                                      std::vector<double>(cfg.rank, cfg.vera_d_initial)};
    return state;
}

std::shared_ptr<AdapterState> init_osora(nn::LinearLayer& layer, const AdapterConfig& cfg) {
    const index_t m = layer.out_dim();
    const index_t d = layer.in_dim();
    require_rank("init_osora", cfg.rank, m, d);

    linalg::SvdFactors f = linalg::truncate_rank(linalg::svd_full(layer.weight), cfg.rank);
    auto a = std::make_shared<Matrix>(transpose(f.V));
    auto b = std::make_shared<Matrix>(f.U);
    layer.weight = sub(layer.weight, linalg::reconstruct(f));

    auto state = std::make_shared<AdapterState>();
    state->method = Method::osora;
    state->value = VectorAdapterState{std::move(a), std::move(b), std::vector<double>(m, 1.0),
                                      std::move(f.S)};
    return state;
}

std::shared_ptr<AdapterState> init_lora(index_t m, index_t d, const AdapterConfig& cfg) {
    require_rank("init_lora", cfg.rank, m, d);
    auto state = std::make_shared<AdapterState>();
    state->method = Method::lora;
    LoraState lora;
    lora.a = kaiming_uniform_matrix(cfg.rank, d, d, mix_seed(cfg.seed, 0x10a));
    lora.b = Matrix(m, cfg.rank);
    lora.alpha = cfg.lora_alpha > 0.0 ? cfg.lora_alpha : 2.0 * static_cast<double>(cfg.rank);
    state->value = std::move(lora);
    return state;
}

Matrix delta_w(const AdapterState& state) {
    if (const auto* v = std::get_if<VectorAdapterState>(&state.value)) {
        return scale_rows(v->gamma, matmul(scale_cols(*v->b, v->lambda), *v->a));
    }
    const auto& l = std::get<LoraState>(state.value);
    return scaled(matmul(l.b, l.a), l.scaling());
}

index_t trainable_param_count(const AdapterState& state) {
    if (const auto* v = std::get_if<VectorAdapterState>(&state.value)) {
        return v->gamma.size() + v->lambda.size();
    }
    const auto& l = std::get<LoraState>(state.value);
    return l.a.size() + l.b.size();
}

void attach_adapter(nn::LinearLayer& layer, std::shared_ptr<AdapterState> state) {
    if (!state) {
        throw ContractError("attach_adapter: null adapter state");
    }
    if (state->out_dim() != layer.out_dim() || state->in_dim() != layer.in_dim()) {
        throw DimensionError("attach_adapter: adapter " + std::to_string(state->out_dim()) + "x" +
                             std::to_string(state->in_dim()) + " vs layer " +
                             std::to_string(layer.out_dim()) + "x" +
                             std::to_string(layer.in_dim()));
    }
    layer.adapter = std::move(state);
}

nn::LinearLayer merge(const nn::LinearLayer& layer) {
    if (!layer.adapter) {
        throw ContractError("merge: layer has no adapter attached");
    }
    nn::LinearLayer out;
    out.weight = add(layer.weight, delta_w(*layer.adapter));
    out.bias = layer.bias;
    return out;
}

} // namespace giva::adapters
