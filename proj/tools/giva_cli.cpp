#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "giva/error.hpp"
#include "giva/runconfig.hpp"
#include "giva/runner.hpp"

namespace {

giva::runcfg::RunConfig resolve_config(const std::string& config_path, long long seed_override) {
    giva::runcfg::RunConfig cfg;
    if (!config_path.empty()) {
        cfg = giva::runcfg::load_run_config(config_path);
    }
    if (seed_override >= 0) {
        const auto seed = static_cast<std::uint64_t>(seed_override);
        cfg.dataset.seed = seed;
        cfg.adapter.seed = seed;
        cfg.probe.seed = seed;
        cfg.train.seed = seed;
    }
    return cfg;
}

giva::index_t resolve_threads(long long flag_value) {
    if (flag_value > 0) {
        return static_cast<giva::index_t>(flag_value);
    }
    if (const char* env = std::getenv("GIVA_THREADS")) {
        const long parsed = std::strtol(env, nullptr, 10);
        if (parsed > 0) {
            return static_cast<giva::index_t>(parsed);
        }
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Vector-scaled low-rank adapters: training, verification and benchmarks"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    long long seed_override = -1;
    long long threads_flag = 0;
    std::string checkpoint_path;

    auto add_common = [&](CLI::App* sub, bool with_config) {
        if (with_config) {
            sub->add_option("--config", config_path, "JSON run configuration");
        }
        sub->add_option("--out", out_dir, "Output directory (overrides output_dir)");
        sub->add_option("--seed", seed_override, "Override every seed in the configuration");
        sub->add_option("--threads", threads_flag,
                        "Worker threads (falls back to GIVA_THREADS, then 1)");
    };

    CLI::App* verify = app.add_subcommand("verify", "Run the numerical check suite");
    add_common(verify, true);
    CLI::App* train = app.add_subcommand("train", "Train the configured adapter");
    add_common(train, true);
    CLI::App* bench = app.add_subcommand("bench", "Sweep methods/ranks/learning rates/seeds");
    add_common(bench, true);
    CLI::App* inspect = app.add_subcommand("inspect", "Describe a checkpoint manifest");
    inspect->add_option("checkpoint", checkpoint_path, "Path to a checkpoint manifest (.json)")
        ->required();
    add_common(inspect, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (inspect->parsed()) {
            return giva::runner::cmd_inspect(checkpoint_path, out_dir);
        }
        giva::runcfg::RunConfig cfg = resolve_config(config_path, seed_override);
        const std::string target = out_dir.empty() ? cfg.output_dir : out_dir;
        if (verify->parsed()) {
            return giva::runner::cmd_verify(cfg, target);
        }
        if (train->parsed()) {
            return giva::runner::cmd_train(cfg, target);
        }
        return giva::runner::cmd_bench(cfg, target, resolve_threads(threads_flag));
    } catch (const giva::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const giva::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const giva::IntegrityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const giva::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
