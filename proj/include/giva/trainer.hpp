#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "giva/datasets.hpp"
#include "giva/nn.hpp"

namespace giva::trainer {

enum class Optimizer { sgd, adamw };
enum class Schedule { constant, linear, cosine };

struct TrainConfig {
    Optimizer optimizer = Optimizer::adamw;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    Schedule schedule = Schedule::linear;
    // Warmup given as a fraction of total steps; warmup_steps (if nonzero)
    // takes precedence.
    double warmup_fraction = 0.0;
    index_t warmup_steps = 0;
    index_t steps = 1000;
    index_t batch_size = 32;
    double clip_norm = 1.0;
    index_t evals_per_epoch = 4;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double divergence_threshold = 1e6;

    void validate() const;
};

/// A named view into one trainable parameter block living inside the model.
struct ParamRef {
    std::string name;
    std::span<double> values;
};

/// Trainable parameters in flattened layer order. Vector adapters expose
/// gamma then lambda; the low-rank adapter exposes A then B. Frozen bases
/// and layer weights are never included.
std::vector<ParamRef> trainable_params(nn::Model& model);

/// Adapter gradients from a backward pass, aligned with trainable_params.
std::vector<std::vector<double>> flatten_adapter_grads(const nn::Gradients& grads);

void sgd_step(std::span<double> params, std::span<const double> grads, double lr);

struct OptimState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    index_t step = 0;
};

void adamw_step(std::vector<ParamRef>& params, const std::vector<std::vector<double>>& grads,
                OptimState& state, const TrainConfig& cfg, double lr);

/// Scales all gradients by threshold / norm when the global L2 norm exceeds
/// the threshold. Returns the pre-clip norm.
double clip_grad_norm(std::vector<std::vector<double>>& grads, double threshold);

/// Linear warmup from 0 to the peak rate, then constant / linear / cosine
/// decay to 0 at cfg.steps.
double lr_at(index_t step, const TrainConfig& cfg);

struct EvalRecord {
    index_t step;
    double train_loss;
    double val_loss;
};

struct TrainReport {
    std::vector<double> step_loss;
    std::vector<EvalRecord> evals;
    double best_val_loss = 0.0;
    index_t best_step = 0;
    double final_val_loss = 0.0;
    double final_train_loss = 0.0;
    double wall_seconds = 0.0;
    std::vector<std::string> param_names;
    std::vector<std::vector<double>> best_params;
};

/// Deterministic epoch-shuffled minibatch order.
class BatchSampler {
public:
    BatchSampler(index_t n, index_t batch_size, std::uint64_t seed);

    index_t steps_per_epoch() const { return (n_ + bs_ - 1) / bs_; }
    std::vector<index_t> batch_for_step(index_t step);

private:
    index_t n_;
    index_t bs_;
    std::uint64_t seed_;
    index_t cached_epoch_;
    std::vector<index_t> perm_;
};

/// Trains the attached adapters. The model is left at its final parameters;
/// the report carries a snapshot of the best-validation parameters.
TrainReport train(nn::Model& model, const datasets::Dataset& train_set,
                  const datasets::Dataset& val_set, const TrainConfig& cfg);

/// Writes a parameter snapshot (from TrainReport::best_params) back into the
/// model's trainable parameters.
void load_params(nn::Model& model, const std::vector<std::vector<double>>& values);

} // namespace giva::trainer
