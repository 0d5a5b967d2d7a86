#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "giva/adapters.hpp"
#include "giva/trainer.hpp"

namespace giva::runcfg {

struct DatasetConfig {
    std::string kind = "teacher_student";
    index_t m = 64;
    index_t d = 64;
    index_t k = 4;
    index_t n = 2048;
    double noise = 0.01;
    std::uint64_t seed = 0;
    double split = 0.8;
    // blobs
    index_t classes = 3;
    double separation = 4.0;
    // csv
    std::string path;
    std::string target_column;
    std::string task = "regression";
};

struct StageConfig {
    std::string kind = "dense"; // dense | attention
    index_t width = 0;          // dense output width, 0 = dataset target dim
    std::string activation = "identity";
    bool bias = false;
    index_t proj_dim = 0; // attention head dim, 0 = stage input dim
};

struct ModelConfig {
    std::string loss = "auto"; // auto | mse | cross_entropy
    std::uint64_t init_seed = 1;
    std::vector<StageConfig> stages; // empty = one dense output layer
};

struct ProbeConfig {
    index_t num_batches = 1;
    index_t batch_size = 0; // 0 = the whole training split
    std::uint64_t seed = 0;
};

struct SweepConfig {
    std::vector<std::string> methods;
    std::vector<index_t> ranks;
    std::vector<double> learning_rates;
    std::vector<std::uint64_t> seeds;
};

struct VerifyConfig {
    // Nonzero values are added to A(0,0) of each built basis before the
    // orthonormality checks run, as a negative control for the suite.
    double inject_perturbation = 0.0;
};

struct RunConfig {
    DatasetConfig dataset;
    ModelConfig model;
    adapters::AdapterConfig adapter;
    ProbeConfig probe;
    trainer::TrainConfig train;
    SweepConfig sweep;
    VerifyConfig verify;
    std::string output_dir = "runs";

    /// Cross-field checks beyond what parsing enforces. Throws ConfigError
    /// with a dotted field path.
    void validate() const;
};

/// Strict parse: unknown keys, wrong types and out-of-range values all throw
/// ConfigError naming the offending field as a dotted path.
RunConfig parse_run_config(const nlohmann::json& doc);

/// Reads a JSON config file. File errors throw DataError; syntax errors
/// throw ParseError; semantic errors throw ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);

/// Full echo with every default resolved, suitable for reproducing the run.
nlohmann::json to_json(const RunConfig& cfg);

std::string optimizer_name(trainer::Optimizer o);
trainer::Optimizer optimizer_from_name(const std::string& name);
std::string schedule_name(trainer::Schedule s);
trainer::Schedule schedule_from_name(const std::string& name);
std::string svd_route_name(adapters::SvdRoute r);
adapters::SvdRoute svd_route_from_name(const std::string& name);

} // namespace giva::runcfg
