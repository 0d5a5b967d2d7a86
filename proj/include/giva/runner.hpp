#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "giva/datasets.hpp"
#include "giva/nn.hpp"
#include "giva/runconfig.hpp"
#include "giva/trainer.hpp"

namespace giva::runner {

struct BuiltData {
    datasets::Dataset train;
    datasets::Dataset val;
    std::optional<Matrix> w_pt;       // teacher-student pretrained weight
    std::optional<Matrix> delta_star; // teacher-student hidden update
    index_t target_dim = 0;
    nn::LossKind loss = nn::LossKind::mse;
};

BuiltData build_data(const runcfg::RunConfig& cfg);

/// Builds the frozen model. An empty stage list yields one dense layer sized
/// input_dim -> target_dim; for teacher-student data that layer starts at the
/// pretrained weight. Explicit stages draw seeded Gaussian weights.
nn::Model build_model(const runcfg::RunConfig& cfg, const BuiltData& data);

/// Attaches the configured adapter to every linear layer. The
/// gradient-informed method runs the probe on the training split first.
void attach_adapters_from_config(nn::Model& model, const runcfg::RunConfig& cfg,
                                 const datasets::Dataset& train_set);

struct TrainOutcome {
    trainer::TrainReport report;
    index_t trainable_params = 0;
    bool diverged = false;
    std::string error;
};

/// One full training run into out_dir: config echo, frozen-bases checkpoint,
/// metrics.jsonl, best-weights light checkpoint, summary.json. Divergence is
/// reported in the outcome, not thrown.
TrainOutcome run_training(const runcfg::RunConfig& cfg, const std::filesystem::path& out_dir);

int cmd_train(const runcfg::RunConfig& cfg, const std::filesystem::path& out_dir);
int cmd_bench(const runcfg::RunConfig& cfg, const std::filesystem::path& out_dir, index_t threads);
int cmd_verify(const runcfg::RunConfig& cfg, const std::filesystem::path& out_dir);
int cmd_inspect(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir);

} // namespace giva::runner
