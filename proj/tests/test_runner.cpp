#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "giva/adapters.hpp"
#include "giva/nn.hpp"
#include "giva/runconfig.hpp"
#include "giva/runner.hpp"

using nlohmann::json;
namespace runcfg = giva::runcfg;
namespace runner = giva::runner;
namespace nn = giva::nn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& leaf) {
    fs::path p = fs::temp_directory_path() / "giva_test_runner" / leaf;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

runcfg::RunConfig small_run() {
    runcfg::RunConfig cfg;
    cfg.dataset.m = 12;
    cfg.dataset.d = 10;
    cfg.dataset.k = 2;
    cfg.dataset.n = 160;
    cfg.dataset.noise = 0.01;
    cfg.dataset.seed = 3;
    cfg.adapter.method = giva::adapters::Method::giva;
    cfg.adapter.rank = 2;
    cfg.train.learning_rate = 0.05;
    cfg.train.steps = 30;
    cfg.train.batch_size = 32;
    cfg.train.evals_per_epoch = 2;
    cfg.train.seed = 5;
    cfg.validate();
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_SUITE("runner") {

TEST_CASE("data building picks losses and dimensions by dataset kind") {
    runcfg::RunConfig ts = small_run();
    auto data = runner::build_data(ts);
    CHECK(data.loss == nn::LossKind::mse);
    CHECK(data.target_dim == 12);
    REQUIRE(data.w_pt.has_value());
    CHECK(data.w_pt->rows() == 12);
    CHECK(data.train.size() + data.val.size() == 160);

    runcfg::RunConfig bl;
    bl.dataset.kind = "blobs";
    bl.dataset.classes = 3;
    bl.dataset.d = 6;
    bl.dataset.n = 90;
    bl.validate();
    auto bdata = runner::build_data(bl);
    CHECK(bdata.loss == nn::LossKind::cross_entropy);
    CHECK(bdata.target_dim == 3);
    CHECK_FALSE(bdata.w_pt.has_value());

    // Forcing mse onto class labels is refused.
    bl.model.loss = "mse";
    CHECK_THROWS_AS(runner::build_data(bl), giva::ConfigError);
}

TEST_CASE("the default model is one dense layer starting at the pretrained weight") {
    runcfg::RunConfig cfg = small_run();
    auto data = runner::build_data(cfg);
    auto model = runner::build_model(cfg, data);
    REQUIRE(model.stages.size() == 1);
    const auto& layer = std::get<nn::DenseStage>(model.stages[0]).layer;
    CHECK(giva::max_abs_diff(layer.weight, *data.w_pt) == 0.0);
    CHECK(model.loss == nn::LossKind::mse);
}

TEST_CASE("explicit stages are validated against the dataset") {
    runcfg::RunConfig cfg = small_run();
    cfg.model.stages.push_back({"dense", 0, "relu", false, 0}); // non-final needs a width
    cfg.model.stages.push_back({"dense", 12, "identity", false, 0});
    auto data = runner::build_data(cfg);
    CHECK_THROWS_AS(runner::build_model(cfg, data), giva::ConfigError);

    cfg.model.stages.clear();
    cfg.model.stages.push_back({"dense", 8, "relu", true, 0});
    cfg.model.stages.push_back({"dense", 5, "identity", false, 0}); // 5 != target_dim 12
    CHECK_THROWS_AS(runner::build_model(cfg, data), giva::ConfigError);

    cfg.model.stages.back().width = 12;
    auto model = runner::build_model(cfg, data);
    CHECK(model.stages.size() == 2);
    CHECK(model.input_dim() == 10);
    CHECK(model.output_dim() == 12);

    cfg.model.stages.clear();
    cfg.model.stages.push_back({"attention", 0, "identity", false, 4});
    cfg.model.stages.push_back({"dense", 12, "identity", false, 0});
    auto attn = runner::build_model(cfg, data);
    CHECK(attn.stages.size() == 2);
    CHECK(std::holds_alternative<nn::AttentionStage>(attn.stages[0]));
}

TEST_CASE("adapters are attached per configured method") {
    runcfg::RunConfig cfg = small_run();
    auto data = runner::build_data(cfg);
    for (auto method : {giva::adapters::Method::giva, giva::adapters::Method::vera,
                        giva::adapters::Method::osora, giva::adapters::Method::lora}) {
        cfg.adapter.method = method;
        auto model = runner::build_model(cfg, data);
        runner::attach_adapters_from_config(model, cfg, data.train);
        for (const auto& ref : nn::linear_layers(model)) {
            REQUIRE(ref.layer->adapter != nullptr);
            CHECK(ref.layer->adapter->method == method);
        }
    }
}

TEST_CASE("a training run writes the full artifact set deterministically") {
    runcfg::RunConfig cfg = small_run();
    fs::path dir1 = scratch("train1");
    auto o1 = runner::run_training(cfg, dir1);
    CHECK_FALSE(o1.diverged);
    CHECK(o1.trainable_params == 12 + 2);

    for (const char* name : {"config.json", "bases.json", "bases.bin", "metrics.jsonl",
                             "light_best.json", "light_best.bin", "summary.json"}) {
        CHECK_MESSAGE(fs::exists(dir1 / name), name);
    }

    json summary = json::parse(slurp(dir1 / "summary.json"));
    CHECK(summary.at("diverged") == false);
    CHECK(summary.at("method") == "giva");
    CHECK(summary.at("trainable_params") == 14);
    CHECK(summary.at("best_val_loss").get<double>() <= summary.at("final_val_loss").get<double>() + 1e-15);

    // Eval cadence: step-0 eval plus evals_per_epoch per pass over the data.
    std::istringstream metrics(slurp(dir1 / "metrics.jsonl"));
    std::string line;
    std::size_t lines = 0;
    double last_val = -1.0;
    while (std::getline(metrics, line)) {
        json rec = json::parse(line);
        CHECK(rec.contains("step"));
        CHECK(rec.contains("train_loss"));
        CHECK(rec.contains("val_loss"));
        CHECK(rec.contains("lr"));
        last_val = rec.at("val_loss").get<double>();
        ++lines;
    }
    CHECK(lines >= 2);
    CHECK(last_val == summary.at("final_val_loss").get<double>());

    fs::path dir2 = scratch("train2");
    runner::run_training(cfg, dir2);
    CHECK(slurp(dir2 / "metrics.jsonl") == slurp(dir1 / "metrics.jsonl"));
    CHECK(slurp(dir2 / "config.json") == slurp(dir1 / "config.json"));
}

TEST_CASE("divergence is recorded, not thrown") {
    runcfg::RunConfig cfg = small_run();
    cfg.train.optimizer = giva::trainer::Optimizer::sgd;
    cfg.train.learning_rate = 1e12;
    cfg.train.schedule = giva::trainer::Schedule::constant;
    fs::path dir = scratch("diverge");
    auto outcome = runner::run_training(cfg, dir);
    CHECK(outcome.diverged);
    CHECK_FALSE(outcome.error.empty());
    json summary = json::parse(slurp(dir / "summary.json"));
    CHECK(summary.at("diverged") == true);
    CHECK_FALSE(fs::exists(dir / "metrics.jsonl"));
}

TEST_CASE("the verification battery passes clean and fails when perturbed") {
    runcfg::RunConfig cfg;
    fs::path clean = scratch("verify_clean");
    CHECK(runner::cmd_verify(cfg, clean) == 0);
    json report = json::parse(slurp(clean / "verify.json"));
    CHECK(report.at("failed").get<int>() == 0);
    CHECK(report.at("passed").get<int>() >= 15);
    bool saw_first_step = false;
    for (const auto& c : report.at("checks")) {
        CHECK(c.at("pass") == true);
        if (c.at("name") == "first_step_matches_truncated_svd") saw_first_step = true;
    }
    CHECK(saw_first_step);

    cfg.verify.inject_perturbation = 1e-3;
    fs::path broken = scratch("verify_broken");
    CHECK(runner::cmd_verify(cfg, broken) == 1);
    json bad = json::parse(slurp(broken / "verify.json"));
    CHECK(bad.at("failed").get<int>() >= 1);
}

TEST_CASE("the bench grid writes run and mean rows and selects a rate") {
    runcfg::RunConfig cfg = small_run();
    cfg.dataset.n = 128;
    cfg.train.steps = 16;
    cfg.train.evals_per_epoch = 1;
    cfg.sweep.methods = {"giva", "lora"};
    cfg.sweep.ranks = {2};
    cfg.sweep.learning_rates = {0.05, 0.02};
    cfg.sweep.seeds = {1, 2};

    fs::path dir = scratch("bench");
    CHECK(runner::cmd_bench(cfg, dir, 1) == 0);
    REQUIRE(fs::exists(dir / "results.csv"));

    std::istringstream csv(slurp(dir / "results.csv"));
    std::string line;
    REQUIRE(std::getline(csv, line));
    CHECK(line ==
          "kind,method,rank,learning_rate,seed,final_val_loss,best_val_loss,final_train_loss,"
          "trainable_params,wall_seconds,diverged");
    std::size_t runs = 0, means = 0;
    while (std::getline(csv, line)) {
        if (line.rfind("run,", 0) == 0) ++runs;
        if (line.rfind("mean,", 0) == 0) ++means;
    }
    CHECK(runs == 8);
    CHECK(means == 4);
    CHECK(fs::exists(dir / "cells"));
}

TEST_CASE("inspection reports basis orthonormality from a stored checkpoint") {
    runcfg::RunConfig cfg = small_run();
    fs::path run_dir = scratch("inspect_run");
    runner::run_training(cfg, run_dir);

    fs::path out = scratch("inspect_out");
    CHECK(runner::cmd_inspect(run_dir / "bases.json", out) == 0);
    json doc = json::parse(slurp(out / "inspect.json"));
    CHECK(doc.at("manifest").at("kind") == "bases");
    CHECK(doc.at("blob_bytes").get<std::uint64_t>() == fs::file_size(run_dir / "bases.bin"));
    const auto& res = doc.at("orthonormality_residuals");
    REQUIRE(res.contains("L0.A"));
    REQUIRE(res.contains("L0.B"));
    CHECK(res.at("L0.A").get<double>() < 1e-10);
    CHECK(res.at("L0.B").get<double>() < 1e-10);

    CHECK_THROWS_AS(runner::cmd_inspect(run_dir / "nothere.json", out), giva::DataError);
}

} // TEST_SUITE
