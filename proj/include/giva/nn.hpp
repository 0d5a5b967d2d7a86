#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "giva/matrix.hpp"

namespace giva::adapters {
struct AdapterState;
}

namespace giva::nn {

enum class Activation { identity, relu, tanh, softmax_output };
enum class LossKind { mse, cross_entropy };

/// A linear map y = W x (+ bias), optionally carrying an attached adapter.
/// `weight` is the frozen pretrained (or residual) matrix; training never
/// writes to it, only to the adapter.
struct LinearLayer {
    Matrix weight;                             // out_dim x in_dim
    std::optional<std::vector<double>> bias;   // out_dim
    std::shared_ptr<adapters::AdapterState> adapter;

    index_t out_dim() const { return weight.rows(); }
    index_t in_dim() const { return weight.cols(); }
};

struct DenseStage {
    LinearLayer layer;
    Activation act = Activation::identity;
};

/// Single-head scaled dot-product attention over the batch dimension:
/// Q = Wq X, K = Wk X, V = Wv X, P = softmax(K^T Q / sqrt(p)) columnwise,
/// output = Wo (V P). All four projections can carry adapters.
struct AttentionStage {
    LinearLayer query;  // p x d
    LinearLayer key;    // p x d
    LinearLayer value;  // p x d
    LinearLayer output; // m x p
};

using Stage = std::variant<DenseStage, AttentionStage>;

struct Model {
    std::vector<Stage> stages;
    LossKind loss = LossKind::mse;

    index_t input_dim() const;
    index_t output_dim() const;

    /// Checks dimension composition and loss/activation pairing. Throws
    /// ConfigError naming the offending stage.
    void validate() const;
};

/// Regression targets are a matrix (out_dim x n); classification targets are
/// class indices (length n).
using Targets = std::variant<Matrix, std::vector<int>>;

struct Batch {
    Matrix inputs; // in_dim x n
    Targets targets;

    index_t size() const { return inputs.cols(); }
};

struct AdapterCache {
    Matrix c; // A x (r x n)
    Matrix p; // B diag(lambda) A x (m x n), vector adapters only
};

struct DenseCache {
    Matrix x, z, out;
    AdapterCache ad;
};

struct AttnCache {
    Matrix x, q, k, v, p, y;
    AdapterCache ad_q, ad_k, ad_v, ad_o;
};

using StageCache = std::variant<DenseCache, AttnCache>;

struct ForwardResult {
    Matrix outputs;
    std::vector<StageCache> caches;
};

ForwardResult forward(const Model& model, const Matrix& inputs);

/// Gradients for one layer's adapter. Vector adapters fill gamma/lambda;
/// the low-rank matrix adapter fills a/b.
struct AdapterGrads {
    std::vector<double> gamma;
    std::vector<double> lambda;
    Matrix a;
    Matrix b;
};

/// Per-layer gradients in flattened traversal order (attention stages
/// contribute query, key, value, output in that order). Names look like
/// "L0" or "L1.q".
struct Gradients {
    std::vector<std::string> layer_names;
    std::vector<Matrix> weight;
    std::vector<std::vector<double>> bias;    // empty vector when no bias
    std::vector<AdapterGrads> adapter;        // empty members when no adapter
};

double evaluate(const Model& model, const Batch& batch);
std::pair<double, Gradients> loss_and_grads(const Model& model, const Batch& batch);

/// Weight-space gradients at the pretrained point. Requires every adapter to
/// be absent or still at a function-preserving initialization (zero gamma, or
/// zero B for the low-rank adapter); otherwise throws ContractError, because
/// the probe contract is that gradients are taken at the pretrained weights.
std::pair<double, std::vector<Matrix>> loss_and_full_grad(const Model& model, const Batch& batch);

/// Standalone backward for one adapted layer: given the loss gradient at the
/// layer's pre-activation output (out_dim x n) and the cached layer input
/// (in_dim x n), returns (d gamma, d lambda). Shape mismatches against the
/// layer or its adapter throw ContractError.
std::pair<std::vector<double>, std::vector<double>> adapter_backward(const LinearLayer& layer,
                                                                     const Matrix& upstream,
                                                                     const Matrix& cached_input);

struct LayerRef {
    LinearLayer* layer;
    std::string name;
};

struct ConstLayerRef {
    const LinearLayer* layer;
    std::string name;
};

std::vector<LayerRef> linear_layers(Model& model);
std::vector<ConstLayerRef> linear_layers(const Model& model);

} // namespace giva::nn
