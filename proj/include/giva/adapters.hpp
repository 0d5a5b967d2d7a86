#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "giva/matrix.hpp"
#include "giva/nn.hpp"

namespace giva::adapters {

enum class Method { lora, vera, osora, giva };

/// How the frozen B factor is chosen when building bases from a gradient:
/// leading left singular vectors, the next r left singular vectors, or a
/// seeded random orthonormal basis.
enum class GivaBasis { v_r_u_r, v_r_u_2r, v_r_q };

/// Which SVD backend materializes the bases. `automatic` switches to the
/// randomized route when min(m, d) > 4x the factors needed; `exact` is the
/// default because the first-step guarantee only holds for the exact
/// singular subspace.
enum class SvdRoute { exact, randomized, automatic };

std::string method_name(Method m);
Method method_from_name(const std::string& name);
std::string basis_name(GivaBasis b);
GivaBasis basis_from_name(const std::string& name);

/// Shared state shape for GiVA, VeRA and OSoRA: frozen bases A (r x d) and
/// B (m x r), trainable per-row scale gamma (m) and per-component scale
/// lambda (r). The update is diag(gamma) * B * diag(lambda) * A.
struct VectorAdapterState {
    std::shared_ptr<const Matrix> a;
    std::shared_ptr<const Matrix> b;
    std::vector<double> gamma;
    std::vector<double> lambda;
};

/// Classic low-rank adapter: trainable A (r x d) and B (m x r), update
/// (alpha / r) * B * A.
struct LoraState {
    Matrix a;
    Matrix b;
    double alpha = 0.0;

    double scaling() const { return alpha / static_cast<double>(a.rows()); }
};

struct AdapterState {
    Method method = Method::giva;
    GivaBasis basis = GivaBasis::v_r_u_r;
    std::variant<VectorAdapterState, LoraState> value;

    index_t rank() const;
    index_t out_dim() const;
    index_t in_dim() const;
};

struct AdapterConfig {
    Method method = Method::giva;
    index_t rank = 8;
    GivaBasis basis = GivaBasis::v_r_u_r;
    SvdRoute svd_route = SvdRoute::exact;
    std::uint64_t seed = 0;
    double vera_d_initial = 1.0;
    double lora_alpha = 0.0; // 0 means the 2*rank default
    bool vera_shared = true;
};

struct GivaBases {
    std::shared_ptr<const Matrix> a; // r x d
    std::shared_ptr<const Matrix> b; // m x r
};

/// Builds the frozen factor pair from a weight-space gradient: A spans the
/// top-r right singular subspace of the gradient, B is orthonormal. Throws
/// DegeneracyError on a zero gradient and RankError when the strategy needs
/// more singular vectors than the gradient has.
GivaBases giva_bases_from_gradient(const Matrix& grad, index_t r, GivaBasis strategy,
                                   std::uint64_t seed, SvdRoute route = SvdRoute::exact);

/// Hands out frozen VeRA bases. In shared mode all layers of equal shape
/// receive the same matrices; otherwise every request draws fresh ones.
class VeraBasisPool {
public:
    explicit VeraBasisPool(std::uint64_t seed) : seed_(seed) {}

    std::pair<std::shared_ptr<const Matrix>, std::shared_ptr<const Matrix>> bases(index_t m,
                                                                                  index_t d,
                                                                                  index_t r,
                                                                                  bool shared);
    index_t materialized_count() const { return materialized_; }

private:
    std::uint64_t seed_;
    index_t materialized_ = 0;
    index_t draws_ = 0;
    std::map<std::tuple<index_t, index_t, index_t>,
             std::pair<std::shared_ptr<const Matrix>, std::shared_ptr<const Matrix>>>
        pool_;
};

std::shared_ptr<AdapterState> init_giva(const nn::LinearLayer& layer, const Matrix& grad,
                                        const AdapterConfig& cfg);
std::shared_ptr<AdapterState> init_vera(index_t m, index_t d, const AdapterConfig& cfg,
                                        VeraBasisPool& pool);
/// Splits the layer into a top-r SVD part (the adapter) and a residual that
/// replaces layer.weight. The merged layer reproduces the original weights
/// exactly at initialization.
std::shared_ptr<AdapterState> init_osora(nn::LinearLayer& layer, const AdapterConfig& cfg);
std::shared_ptr<AdapterState> init_lora(index_t m, index_t d, const AdapterConfig& cfg);

Matrix delta_w(const AdapterState& state);
index_t trainable_param_count(const AdapterState& state);

/// Validates shapes and attaches. Throws DimensionError on mismatch.
void attach_adapter(nn::LinearLayer& layer, std::shared_ptr<AdapterState> state);

/// Returns a copy of the layer with the adapter folded into the weight and
/// no adapter attached. Throws ContractError when nothing is attached.
nn::LinearLayer merge(const nn::LinearLayer& layer);

} // namespace giva::adapters
