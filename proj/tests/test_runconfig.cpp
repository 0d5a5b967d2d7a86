#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "giva/runconfig.hpp"

using nlohmann::json;
namespace runcfg = giva::runcfg;
namespace fs = std::filesystem;

namespace {

runcfg::RunConfig parse(const json& j) {
    auto cfg = runcfg::parse_run_config(j);
    cfg.validate();
    return cfg;
}

std::string thrown_message(const json& j) {
    try {
        parse(j);
    } catch (const giva::ConfigError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_SUITE("runconfig") {

TEST_CASE("empty document yields working defaults") {
    auto cfg = parse(json::object());
    CHECK(cfg.dataset.kind == "teacher_student");
    CHECK(cfg.dataset.m == 64);
    CHECK(cfg.dataset.d == 64);
    CHECK(cfg.dataset.k == 4);
    CHECK(cfg.dataset.n == 2048);
    CHECK(cfg.dataset.noise == 0.01);
    CHECK(cfg.adapter.method == giva::adapters::Method::giva);
    CHECK(cfg.adapter.rank == 8);
    CHECK(cfg.adapter.vera_d_initial == 1.0);
    CHECK(cfg.probe.num_batches == 1);
    CHECK(cfg.train.optimizer == giva::trainer::Optimizer::adamw);
    CHECK(cfg.train.clip_norm == 1.0);
    CHECK(cfg.output_dir == "runs");
}

TEST_CASE("a full document parses field by field") {
    json doc = json::parse(R"({
        "dataset": {"kind": "blobs", "classes": 4, "d": 12, "n": 200,
                    "separation": 6.5, "seed": 3, "split": 0.75},
        "model": {"loss": "cross_entropy", "init_seed": 9,
                  "stages": [{"kind": "dense", "width": 16, "activation": "relu", "bias": true},
                             {"kind": "dense", "activation": "softmax_output"}]},
        "adapter": {"method": "vera", "rank": 6, "d_initial": 0.1,
                    "svd_route": "randomized", "seed": 5, "shared_bases": false},
        "probe": {"num_batches": 2, "batch_size": 32, "seed": 8},
        "train": {"optimizer": "sgd", "learning_rate": 0.02, "schedule": "cosine",
                  "warmup": 0.1, "steps": 50, "batch_size": 25, "clip_norm": 2.0,
                  "evals_per_epoch": 2, "seed": 4, "weight_decay": 0.01},
        "sweep": {"methods": ["giva", "vera"], "ranks": [4, 32],
                  "learning_rates": [0.01, 0.03], "seeds": [0, 1, 2]},
        "verify": {"inject_perturbation": 0.0},
        "output_dir": "out"
    })");
    auto cfg = parse(doc);
    CHECK(cfg.dataset.kind == "blobs");
    CHECK(cfg.dataset.classes == 4);
    CHECK(cfg.dataset.separation == 6.5);
    CHECK(cfg.model.loss == "cross_entropy");
    CHECK(cfg.model.stages.size() == 2);
    CHECK(cfg.model.stages[0].width == 16);
    CHECK(cfg.model.stages[0].bias);
    CHECK(cfg.adapter.method == giva::adapters::Method::vera);
    CHECK(cfg.adapter.vera_d_initial == 0.1);
    CHECK(cfg.adapter.svd_route == giva::adapters::SvdRoute::randomized);
    CHECK_FALSE(cfg.adapter.vera_shared);
    CHECK(cfg.probe.num_batches == 2);
    CHECK(cfg.train.optimizer == giva::trainer::Optimizer::sgd);
    CHECK(cfg.train.schedule == giva::trainer::Schedule::cosine);
    CHECK(cfg.train.warmup_fraction == 0.1);
    CHECK(cfg.sweep.methods == std::vector<std::string>{"giva", "vera"});
    CHECK(cfg.sweep.ranks == std::vector<giva::index_t>{4, 32});
    CHECK(cfg.output_dir == "out");
}

TEST_CASE("unknown keys are rejected with a dotted path") {
    CHECK(thrown_message({{"datsaet", json::object()}}).find("datsaet") != std::string::npos);
    CHECK(thrown_message({{"dataset", {{"frobnicate", 1}}}}).find("dataset.frobnicate") !=
          std::string::npos);
    CHECK(thrown_message({{"train", {{"lr", 0.1}}}}).find("train.lr") != std::string::npos);
}

TEST_CASE("type and vocabulary violations name the field") {
    CHECK(thrown_message({{"dataset", {{"m", "many"}}}}).find("dataset.m") != std::string::npos);
    CHECK(thrown_message({{"dataset", {{"m", -3}}}}).find("dataset.m") != std::string::npos);
    CHECK(thrown_message({{"adapter", {{"method", "dora"}}}}).find("adapter.method") !=
          std::string::npos);
    CHECK(thrown_message({{"adapter", {{"rank", 0}}}}).find("adapter.rank") != std::string::npos);
    CHECK(thrown_message({{"train", {{"learning_rate", 0.0}}}}).find("train.learning_rate") !=
          std::string::npos);
    CHECK(thrown_message({{"probe", {{"num_batches", 0}}}}).find("probe.num_batches") !=
          std::string::npos);
    CHECK(thrown_message({{"verify", {{"inject_perturbation", -1.0}}}})
              .find("verify.inject_perturbation") != std::string::npos);
    CHECK(thrown_message({{"sweep", {{"methods", json::array({"giva", "nope"})}}}})
              .find("sweep.methods") != std::string::npos);
    CHECK(thrown_message({{"sweep", {{"ranks", json::array({4, 0})}}}}).find("sweep.ranks") !=
          std::string::npos);
}

TEST_CASE("cross-field validation") {
    CHECK(thrown_message({{"dataset", {{"k", 100}}}}).find("dataset.k") != std::string::npos);
    CHECK(thrown_message({{"dataset", {{"n", 1}}}}).find("dataset.n") != std::string::npos);
    CHECK(thrown_message({{"dataset", {{"split", 0.0}}}}) != "");
    CHECK(thrown_message({{"dataset", {{"kind", "csv"}}}}).find("dataset.path") !=
          std::string::npos);
    CHECK(thrown_message({{"dataset", {{"kind", "csv"}, {"path", "x.csv"}}}})
              .find("dataset.target_column") != std::string::npos);
    CHECK(thrown_message({{"dataset", {{"kind", "blobs"}, {"classes", 1}}}})
              .find("dataset.classes") != std::string::npos);
    CHECK(thrown_message({{"model", {{"loss", "cross_entropy"}}}}).find("model.loss") !=
          std::string::npos);

    json attn_w = {{"model",
                    {{"stages", json::array({{{"kind", "attention"}, {"width", 8}}})}}}};
    CHECK(thrown_message(attn_w).find("width") != std::string::npos);
    json dense_p = {{"model",
                     {{"stages", json::array({{{"kind", "dense"}, {"proj_dim", 8}}})}}}};
    CHECK(thrown_message(dense_p).find("proj_dim") != std::string::npos);
    json early_sm = {{"model",
                      {{"stages", json::array({{{"kind", "dense"},
                                                {"activation", "softmax_output"}},
                                               {{"kind", "dense"}}})}}}};
    CHECK(thrown_message(early_sm).find("softmax_output") != std::string::npos);

    CHECK(thrown_message({{"output_dir", ""}}).find("output_dir") != std::string::npos);
}

TEST_CASE("the echoed config is a parse fixpoint") {
    json doc = json::parse(R"({
        "dataset": {"kind": "teacher_student", "m": 16, "d": 12, "k": 2, "n": 64},
        "adapter": {"method": "giva", "rank": 3, "init": "v_r_q"},
        "train": {"steps": 20, "batch_size": 16}
    })");
    auto cfg = parse(doc);
    json echo = runcfg::to_json(cfg);
    auto cfg2 = parse(echo);
    CHECK(runcfg::to_json(cfg2) == echo);
    CHECK(cfg2.adapter.basis == giva::adapters::GivaBasis::v_r_q);
    CHECK(cfg2.dataset.m == 16);
    CHECK(cfg2.train.steps == 20);
}

TEST_CASE("config files are loaded with the right error taxonomy") {
    fs::path dir = fs::temp_directory_path() / "giva_test_runconfig";
    fs::create_directories(dir);

    fs::path good = dir / "good.json";
    {
        std::ofstream out(good);
        out << R"({"train": {"steps": 7}})";
    }
    auto cfg = runcfg::load_run_config(good);
    CHECK(cfg.train.steps == 7);

    fs::path broken = dir / "broken.json";
    {
        std::ofstream out(broken);
        out << "{]";
    }
    CHECK_THROWS_AS(runcfg::load_run_config(broken), giva::ParseError);
    CHECK_THROWS_AS(runcfg::load_run_config(dir / "absent.json"), giva::DataError);
}

TEST_CASE("enum name helpers round trip") {
    using giva::trainer::Optimizer;
    using giva::trainer::Schedule;
    using giva::adapters::SvdRoute;
    for (auto o : {Optimizer::sgd, Optimizer::adamw}) {
        CHECK(runcfg::optimizer_from_name(runcfg::optimizer_name(o)) == o);
    }
    for (auto s : {Schedule::constant, Schedule::linear, Schedule::cosine}) {
        CHECK(runcfg::schedule_from_name(runcfg::schedule_name(s)) == s);
    }
    for (auto r : {SvdRoute::exact, SvdRoute::randomized, SvdRoute::automatic}) {
        CHECK(runcfg::svd_route_from_name(runcfg::svd_route_name(r)) == r);
    }
    CHECK_THROWS_AS(runcfg::optimizer_from_name("lion"), giva::ConfigError);
    CHECK_THROWS_AS(runcfg::schedule_from_name("step"), giva::ConfigError);
    CHECK_THROWS_AS(runcfg::svd_route_from_name("gpu"), giva::ConfigError);
}

} // TEST_SUITE
