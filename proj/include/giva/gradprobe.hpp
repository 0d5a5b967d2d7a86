#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "giva/adapters.hpp"
#include "giva/datasets.hpp"
#include "giva/matrix.hpp"
#include "giva/nn.hpp"

namespace giva::gradprobe {

/// Per-layer estimate of the weight gradient at the pretrained point,
/// averaged over one or more seeded batches.
struct GradientProbeReport {
    std::vector<std::string> layer_names;
    std::vector<Matrix> grads;
    std::vector<double> grad_norms;
    index_t num_batches = 0;
    index_t total_examples = 0;
    std::uint64_t seed = 0;
    double mean_loss = 0.0;
};

/// Runs num_batches forward/backward passes on seeded batches drawn from
/// `data` and averages the per-layer weight gradients. The model must not
/// have been trained yet (see loss_and_full_grad). batch_size 0 means the
/// whole dataset as a single batch.
GradientProbeReport estimate_first_step_gradient(const nn::Model& model,
                                                 const datasets::Dataset& data,
                                                 index_t num_batches, index_t batch_size,
                                                 std::uint64_t seed);

/// Re-export: the basis construction shared with adapter initialization.
using adapters::giva_bases_from_gradient;

/// Builds and attaches one gradient-informed adapter per linear layer. The
/// report must come from this exact model layout.
void attach_giva_adapters(nn::Model& model, const GradientProbeReport& report,
                          const adapters::AdapterConfig& cfg);

/// Attaches adapters that need no gradient probe (vera, osora, lora) to
/// every linear layer. Throws ConfigError for the gradient-informed method.
void attach_basic_adapters(nn::Model& model, const adapters::AdapterConfig& cfg,
                           adapters::VeraBasisPool& pool);

} // namespace giva::gradprobe
