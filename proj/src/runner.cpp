#include "giva/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <thread>
#include <variant>

#include <json.hpp>

#include "giva/checkpoint.hpp"
#include "giva/error.hpp"
#include "giva/gradprobe.hpp"
#include "giva/linalg.hpp"
#include "giva/oracle.hpp"
#include "giva/rng.hpp"

namespace giva::runner {

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

nn::Activation activation_from_name(const std::string& s) {
    if (s == "identity") return nn::Activation::identity;
    if (s == "relu") return nn::Activation::relu;
    if (s == "tanh") return nn::Activation::tanh;
    if (s == "softmax_output") return nn::Activation::softmax_output;
    throw ConfigError("unknown activation '" + s + "'");
}

index_t max_label_plus_one(const nn::Targets& targets) {
    const auto& labels = std::get<std::vector<int>>(targets);
    int top = 0;
    for (int v : labels) top = std::max(top, v);
    return static_cast<index_t>(top) + 1;
}

} // namespace

BuiltData build_data(const runcfg::RunConfig& cfg) {
    const runcfg::DatasetConfig& ds = cfg.dataset;
    BuiltData out;
    if (ds.kind == "teacher_student") {
        datasets::TeacherStudentData data =
            datasets::gen_teacher_student(ds.m, ds.d, ds.k, ds.n, ds.noise, ds.seed, ds.split);
        out.train = std::move(data.train);
        out.val = std::move(data.val);
        out.w_pt = std::move(data.w_pt);
        out.delta_star = std::move(data.delta_star);
        out.target_dim = ds.m;
        out.loss = nn::LossKind::mse;
    } else if (ds.kind == "blobs") {
        auto [train, val] = datasets::gen_blobs(ds.classes, ds.d, ds.n, ds.separation, ds.seed,
                                                ds.split);
        out.train = std::move(train);
        out.val = std::move(val);
        out.target_dim = ds.classes;
        out.loss = nn::LossKind::cross_entropy;
    } else {
        const auto task = ds.task == "classification" ? datasets::CsvTask::classification
                                                      : datasets::CsvTask::regression;
        datasets::Dataset full = datasets::load_csv(ds.path, ds.target_column, task);
        auto [train, val] = datasets::split_dataset(full, ds.split);
        if (task == datasets::CsvTask::classification) {
            out.target_dim = max_label_plus_one(full.targets);
            out.loss = nn::LossKind::cross_entropy;
        } else {
            out.target_dim = 1;
            out.loss = nn::LossKind::mse;
        }
        out.train = std::move(train);
        out.val = std::move(val);
    }
    if (cfg.model.loss == "mse") {
        if (!std::holds_alternative<Matrix>(out.train.targets)) {
            throw ConfigError("model.loss: mse requires continuous targets");
        }
        out.loss = nn::LossKind::mse;
    } else if (cfg.model.loss == "cross_entropy") {
        if (!std::holds_alternative<std::vector<int>>(out.train.targets)) {
            throw ConfigError("model.loss: cross_entropy requires classification targets");
        }
        out.loss = nn::LossKind::cross_entropy;
    }
    return out;
}

nn::Model build_model(const runcfg::RunConfig& cfg, const BuiltData& data) {
    nn::Model model;
    model.loss = data.loss;
    const index_t input_dim = data.train.input_dim();

    if (cfg.model.stages.empty()) {
        nn::DenseStage stage;
        if (data.w_pt) {
            stage.layer.weight = *data.w_pt;
        } else {
            stage.layer.weight =
                gaussian_matrix(data.target_dim, input_dim,
                                     mix_seed(cfg.model.init_seed, 100),
                                     1.0 / std::sqrt(static_cast<double>(input_dim)));
        }
        stage.act = model.loss == nn::LossKind::cross_entropy ? nn::Activation::softmax_output
                                                              : nn::Activation::identity;
        model.stages.emplace_back(std::move(stage));
    } else {
        index_t cur = input_dim;
        for (index_t i = 0; i < cfg.model.stages.size(); ++i) {
            const runcfg::StageConfig& sc = cfg.model.stages[i];
            const bool last = i + 1 == cfg.model.stages.size();
            const std::uint64_t base = mix_seed(cfg.model.init_seed, 100 + 8 * i);
            if (sc.kind == "dense") {
                index_t width = sc.width;
                if (width == 0) {
                    if (!last) {
                        throw ConfigError("model.stages[" + std::to_string(i) +
                                          "].width: required for non-final dense stages");
                    }
                    width = data.target_dim;
                }
                nn::DenseStage stage;
                stage.layer.weight = gaussian_matrix(
                    width, cur, base, 1.0 / std::sqrt(static_cast<double>(cur)));
                if (sc.bias) {
                    stage.layer.bias = std::vector<double>(width, 0.0);
                }
                stage.act = activation_from_name(sc.activation);
                if (last && model.loss == nn::LossKind::cross_entropy &&
                    stage.act == nn::Activation::identity) {
                    stage.act = nn::Activation::softmax_output;
                }
                model.stages.emplace_back(std::move(stage));
                cur = width;
            } else {
                const index_t p = sc.proj_dim == 0 ? cur : sc.proj_dim;
                const double in_scale = 1.0 / std::sqrt(static_cast<double>(cur));
                const double p_scale = 1.0 / std::sqrt(static_cast<double>(p));
                nn::AttentionStage stage;
                stage.query.weight =
                    gaussian_matrix(p, cur, mix_seed(base, 1), in_scale);
                stage.key.weight = gaussian_matrix(p, cur, mix_seed(base, 2), in_scale);
                stage.value.weight =
                    gaussian_matrix(p, cur, mix_seed(base, 3), in_scale);
                stage.output.weight =
                    gaussian_matrix(cur, p, mix_seed(base, 4), p_scale);
                model.stages.emplace_back(std::move(stage));
            }
        }
    }
    if (model.output_dim() != data.target_dim) {
        throw ConfigError("model.stages: final width " + std::to_string(model.output_dim()) +
                          " does not match the target dimension " +
                          std::to_string(data.target_dim));
    }
    model.validate();
    return model;
}

void attach_adapters_from_config(nn::Model& model, const runcfg::RunConfig& cfg,
                                 const datasets::Dataset& train_set) {
    if (cfg.adapter.method == adapters::Method::giva) {
        gradprobe::GradientProbeReport report = gradprobe::estimate_first_step_gradient(
            model, train_set, cfg.probe.num_batches, cfg.probe.batch_size, cfg.probe.seed);
        gradprobe::attach_giva_adapters(model, report, cfg.adapter);
    } else {
        adapters::VeraBasisPool pool(cfg.adapter.seed);
        gradprobe::attach_basic_adapters(model, cfg.adapter, pool);
    }
}

namespace {

index_t total_trainable(const nn::Model& model) {
    index_t total = 0;
    for (const nn::ConstLayerRef& ref : nn::linear_layers(model)) {
        if (ref.layer->adapter) {
            total += adapters::trainable_param_count(*ref.layer->adapter);
        }
    }
    return total;
}

nlohmann::json checkpoint_header(const runcfg::RunConfig& cfg) {
    const double alpha = cfg.adapter.lora_alpha > 0.0
                             ? cfg.adapter.lora_alpha
                             : 2.0 * static_cast<double>(cfg.adapter.rank);
    return {{"method", adapters::method_name(cfg.adapter.method)},
            {"rank", cfg.adapter.rank},
            {"init", adapters::basis_name(cfg.adapter.basis)},
            {"svd_route", runcfg::svd_route_name(cfg.adapter.svd_route)},
            {"d_initial", cfg.adapter.vera_d_initial},
            {"alpha", alpha},
            {"seeds",
             {{"dataset", cfg.dataset.seed},
              {"model", cfg.model.init_seed},
              {"adapter", cfg.adapter.seed},
              {"probe", cfg.probe.seed},
              {"train", cfg.train.seed}}}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write '" + path.string() + "'");
    }
    out << text;
}

} // namespace

TrainOutcome run_training(const runcfg::RunConfig& cfg, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    write_text(out_dir / "config.json", runcfg::to_json(cfg).dump(2) + "\n");

    BuiltData data = build_data(cfg);
    nn::Model model = build_model(cfg, data);
    attach_adapters_from_config(model, cfg, data.train);

    ckpt::save_adapter_bases(model, out_dir, "bases", checkpoint_header(cfg));

    TrainOutcome outcome;
    outcome.trainable_params = total_trainable(model);

    nlohmann::json summary = {{"method", adapters::method_name(cfg.adapter.method)},
                              {"rank", cfg.adapter.rank},
                              {"trainable_params", outcome.trainable_params},
                              {"learning_rate", cfg.train.learning_rate},
                              {"steps", cfg.train.steps},
                              {"seed", cfg.train.seed}};
    try {
        outcome.report = trainer::train(model, data.train, data.val, cfg.train);
    } catch (const DivergenceError& e) {
        outcome.diverged = true;
        outcome.error = e.what();
        summary["diverged"] = true;
        summary["error"] = outcome.error;
        write_text(out_dir / "summary.json", summary.dump(2) + "\n");
        return outcome;
    }

    std::ostringstream metrics;
    for (const trainer::EvalRecord& rec : outcome.report.evals) {
        nlohmann::json line = {{"step", rec.step},
                               {"train_loss", rec.train_loss},
                               {"val_loss", rec.val_loss},
                               {"lr", trainer::lr_at(rec.step, cfg.train)}};
        metrics << line.dump() << "\n";
    }
    write_text(out_dir / "metrics.jsonl", metrics.str());

    trainer::load_params(model, outcome.report.best_params);
    nlohmann::json light_header = checkpoint_header(cfg);
    light_header["best_step"] = outcome.report.best_step;
    light_header["best_val_loss"] = outcome.report.best_val_loss;
    ckpt::save_adapter_light(model, out_dir, "light_best", light_header);

    summary["diverged"] = false;
    summary["best_val_loss"] = outcome.report.best_val_loss;
    summary["best_step"] = outcome.report.best_step;
    summary["final_val_loss"] = outcome.report.final_val_loss;
    summary["final_train_loss"] = outcome.report.final_train_loss;
    summary["wall_seconds"] = outcome.report.wall_seconds;
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    return outcome;
}

int cmd_train(const runcfg::RunConfig& cfg, const std::filesystem::path& out_dir) {
    std::cout << "dataset: " << cfg.dataset.kind << "  adapter: "
              << adapters::method_name(cfg.adapter.method) << " r=" << cfg.adapter.rank
              << "  optimizer: " << runcfg::optimizer_name(cfg.train.optimizer)
              << " lr=" << fmt(cfg.train.learning_rate) << " steps=" << cfg.train.steps << "\n";
    TrainOutcome outcome = run_training(cfg, out_dir);
    std::cout << "trainable parameters: " << outcome.trainable_params << "\n";
    if (outcome.diverged) {
        std::cerr << "training diverged: " << outcome.error << "\n";
        return 1;
    }
    for (const trainer::EvalRecord& rec : outcome.report.evals) {
        std::cout << "step " << rec.step << "  train " << fmt(rec.train_loss) << "  val "
                  << fmt(rec.val_loss) << "\n";
    }
    std::cout << "best val " << fmt(outcome.report.best_val_loss) << " at step "
              << outcome.report.best_step << "; artifacts in " << out_dir.string() << "\n";
    return 0;
}

namespace {

struct BenchCell {
    std::string method;
    index_t rank = 0;
    double lr = 0.0;
    std::uint64_t seed = 0;
    std::filesystem::path dir;
    TrainOutcome outcome;
};

struct MeanRow {
    std::string method;
    index_t rank = 0;
    double lr = 0.0;
    double final_val = std::numeric_limits<double>::quiet_NaN();
    double best_val = std::numeric_limits<double>::quiet_NaN();
    double final_train = std::numeric_limits<double>::quiet_NaN();
    double wall = 0.0;
    index_t params = 0;
    index_t diverged = 0;
    index_t runs = 0;
};

} // namespace

int cmd_bench(const runcfg::RunConfig& cfg, const std::filesystem::path& out_dir,
              index_t threads) {
    std::vector<std::string> methods = cfg.sweep.methods;
    if (methods.empty()) methods = {adapters::method_name(cfg.adapter.method)};
    std::vector<index_t> ranks = cfg.sweep.ranks;
    if (ranks.empty()) ranks = {cfg.adapter.rank};
    std::vector<double> lrs = cfg.sweep.learning_rates;
    if (lrs.empty()) lrs = {cfg.train.learning_rate};
    std::vector<std::uint64_t> seeds = cfg.sweep.seeds;
    if (seeds.empty()) seeds = {cfg.train.seed};

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    write_text(out_dir / "config.json", runcfg::to_json(cfg).dump(2) + "\n");

    if (cfg.dataset.kind == "teacher_student") {
        const double floor =
            0.5 * cfg.dataset.noise * cfg.dataset.noise * static_cast<double>(cfg.dataset.m);
        std::cout << "teacher-student noise floor (val loss): " << fmt(floor) << "\n";
    }

    std::vector<BenchCell> cells;
    for (const std::string& method : methods) {
        for (index_t rank : ranks) {
            for (double lr : lrs) {
                for (std::uint64_t seed : seeds) {
                    BenchCell cell;
                    cell.method = method;
                    cell.rank = rank;
                    cell.lr = lr;
                    cell.seed = seed;
                    char lr_buf[32];
                    std::snprintf(lr_buf, sizeof lr_buf, "%g", lr);
                    cell.dir = out_dir / "cells" /
                               (method + "_r" + std::to_string(rank) + "_lr" + lr_buf + "_s" +
                                std::to_string(seed));
                    cells.push_back(std::move(cell));
                }
            }
        }
    }

    auto run_cell = [&](BenchCell& cell) {
        runcfg::RunConfig c = cfg;
        c.adapter.method = adapters::method_from_name(cell.method);
        c.adapter.rank = cell.rank;
        c.adapter.seed = cell.seed;
        c.probe.seed = cell.seed;
        c.train.learning_rate = cell.lr;
        c.train.seed = cell.seed;
        c.output_dir = cell.dir.string();
        try {
            cell.outcome = run_training(c, cell.dir);
        } catch (const Error& e) {
            cell.outcome.diverged = true;
            cell.outcome.error = e.what();
        }
    };

    const index_t nthreads = std::max<index_t>(1, std::min<index_t>(threads, cells.size()));
    if (nthreads <= 1) {
        for (BenchCell& cell : cells) run_cell(cell);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= cells.size()) break;
                run_cell(cells[i]);
            }
        };
        std::vector<std::thread> pool;
        for (index_t t = 0; t + 1 < nthreads; ++t) pool.emplace_back(worker);
        worker();
        for (std::thread& t : pool) t.join();
    }

    std::map<std::tuple<std::string, index_t, double>, MeanRow> means;
    std::ostringstream csv;
    csv << "kind,method,rank,learning_rate,seed,final_val_loss,best_val_loss,final_train_loss,"
           "trainable_params,wall_seconds,diverged\n";
    for (const BenchCell& cell : cells) {
        const bool ok = !cell.outcome.diverged;
        csv << "run," << cell.method << "," << cell.rank << "," << fmt(cell.lr) << ","
            << cell.seed << "," << (ok ? fmt(cell.outcome.report.final_val_loss) : "nan") << ","
            << (ok ? fmt(cell.outcome.report.best_val_loss) : "nan") << ","
            << (ok ? fmt(cell.outcome.report.final_train_loss) : "nan") << ","
            << cell.outcome.trainable_params << ","
            << (ok ? fmt(cell.outcome.report.wall_seconds) : "0") << "," << (ok ? 0 : 1) << "\n";
        MeanRow& row = means[{cell.method, cell.rank, cell.lr}];
        row.method = cell.method;
        row.rank = cell.rank;
        row.lr = cell.lr;
        ++row.runs;
        if (ok) {
            const double n = static_cast<double>(row.runs - row.diverged);
            auto fold = [n](double acc, double v) {
                return ((std::isnan(acc) ? 0.0 : acc * (n - 1.0)) + v) / n;
            };
            row.final_val = fold(row.final_val, cell.outcome.report.final_val_loss);
            row.best_val = fold(row.best_val, cell.outcome.report.best_val_loss);
            row.final_train = fold(row.final_train, cell.outcome.report.final_train_loss);
            row.wall = fold(row.wall, cell.outcome.report.wall_seconds);
            row.params = cell.outcome.trainable_params;
        } else {
            ++row.diverged;
        }
    }
    for (const auto& [key, row] : means) {
        csv << "mean," << row.method << "," << row.rank << "," << fmt(row.lr) << ",-,"
            << fmt(row.final_val) << "," << fmt(row.best_val) << "," << fmt(row.final_train)
            << "," << row.params << "," << fmt(row.wall) << "," << row.diverged << "\n";
    }

    std::map<std::pair<std::string, index_t>, const MeanRow*> selected;
    for (const auto& [key, row] : means) {
        if (std::isnan(row.best_val)) continue;
        const std::pair<std::string, index_t> group{row.method, row.rank};
        auto it = selected.find(group);
        if (it == selected.end() || row.best_val < it->second->best_val ||
            (row.best_val == it->second->best_val && row.lr < it->second->lr)) {
            selected[group] = &row;
        }
    }
    for (const auto& [group, row] : selected) {
        csv << "selected," << row->method << "," << row->rank << "," << fmt(row->lr) << ",-,"
            << fmt(row->final_val) << "," << fmt(row->best_val) << "," << fmt(row->final_train)
            << "," << row->params << "," << fmt(row->wall) << "," << row->diverged << "\n";
        std::cout << "selected " << row->method << " r=" << row->rank << ": lr=" << fmt(row->lr)
                  << " mean best val " << fmt(row->best_val) << " (params " << row->params
                  << ", diverged " << row->diverged << "/" << row->runs << ")\n";
    }
    write_text(out_dir / "results.csv", csv.str());
    std::cout << "bench table written to " << (out_dir / "results.csv").string() << "\n";
    return 0;
}

namespace {

struct Check {
    std::string name;
    double tolerance = 0.0;
    double measured = 0.0;
    bool pass = false;
    std::string note;
};

double col_gram_residual(const Matrix& q) {
    return max_abs_diff(matmul(transpose(q), q), Matrix::identity(q.cols()));
}

double row_gram_residual(const Matrix& a) {
    return max_abs_diff(matmul(a, transpose(a)), Matrix::identity(a.rows()));
}

/// Builds a small regression model with an attached adapter and a seeded
/// batch; used by the gradcheck and preservation checks.
struct Fixture {
    nn::Model model;
    nn::Batch batch;
};

Fixture make_fixture(index_t m, index_t d, index_t n, std::uint64_t seed) {
    Fixture f;
    nn::DenseStage stage;
    stage.layer.weight = gaussian_matrix(m, d, mix_seed(seed, 1), 0.4);
    f.model.stages.emplace_back(std::move(stage));
    f.model.loss = nn::LossKind::mse;
    f.batch.inputs = gaussian_matrix(d, n, mix_seed(seed, 2));
    f.batch.targets = gaussian_matrix(m, n, mix_seed(seed, 3));
    return f;
}

void randomize_trainables(nn::Model& model, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist(0.0, 0.5);
    for (trainer::ParamRef& p : trainer::trainable_params(model)) {
        for (double& v : p.values) v = dist(gen);
    }
}

} // namespace

int cmd_verify(const runcfg::RunConfig& cfg, const std::filesystem::path& out_dir) {
    const std::uint64_t s = mix_seed(cfg.adapter.seed, 777);
    const double inject = cfg.verify.inject_perturbation;
    std::vector<Check> checks;

    auto run_check = [&](const std::string& name, double tol, auto&& body,
                         bool pass_above = false) {
        Check c;
        c.name = name;
        c.tolerance = tol;
        try {
            c.measured = body();
            c.pass = pass_above ? c.measured > tol : c.measured <= tol;
        } catch (const std::exception& e) {
            c.measured = std::numeric_limits<double>::quiet_NaN();
            c.pass = false;
            c.note = e.what();
        }
        checks.push_back(std::move(c));
    };

    const Matrix m0 = gaussian_matrix(24, 16, mix_seed(s, 1));
    run_check("svd_reconstruction", 1e-12, [&] {
        const linalg::SvdFactors f = linalg::svd_full(m0);
        return linalg::frobenius_norm(sub(linalg::reconstruct(f), m0)) /
               linalg::frobenius_norm(m0);
    });
    run_check("svd_factor_orthonormality", 1e-12, [&] {
        const linalg::SvdFactors f = linalg::svd_full(m0);
        return std::max(col_gram_residual(f.U), col_gram_residual(f.V));
    });
    run_check("svd_value_ordering", 0.0, [&] {
        const linalg::SvdFactors f = linalg::svd_full(m0);
        double worst = -1.0;
        for (index_t i = 0; i + 1 < f.S.size(); ++i) {
            worst = std::max(worst, f.S[i + 1] - f.S[i]);
        }
        return std::max(worst, 0.0) + (f.S.empty() ? 1.0 : 0.0);
    });
    run_check("qr_column_orthonormality", 1e-12, [&] {
        const Matrix q = linalg::qr_orthonormal(gaussian_matrix(20, 6, mix_seed(s, 2)));
        return col_gram_residual(q);
    });
    run_check("randomized_svd_top_values", 1e-6, [&] {
        const index_t rows = 48, cols = 32, r = 6;
        const Matrix u = oracle::random_orthonormal(rows, cols, mix_seed(s, 3));
        const Matrix v = oracle::random_orthonormal(cols, cols, mix_seed(s, 4));
        std::vector<double> sv(cols);
        for (index_t i = 0; i < cols; ++i) sv[i] = std::pow(0.9, static_cast<double>(i));
        const Matrix m = matmul(scale_cols(u, sv), transpose(v));
        const linalg::SvdFactors approx = linalg::svd_lowrank(m, r, 8, 4, mix_seed(s, 5));
        double worst = 0.0;
        for (index_t i = 0; i < r; ++i) {
            worst = std::max(worst, std::abs(approx.S[i] - sv[i]) / sv[i]);
        }
        return worst;
    });

    const Matrix grad = gaussian_matrix(24, 16, mix_seed(s, 6));
    const index_t rank = 4;
    run_check("probe_basis_orthonormality", 1e-10, [&] {
        adapters::GivaBases bases = adapters::giva_bases_from_gradient(
            grad, rank, adapters::GivaBasis::v_r_u_r, mix_seed(s, 7));
        Matrix a = *bases.a;
        a(0, 0) += inject;
        return std::max(row_gram_residual(a), col_gram_residual(*bases.b));
    });
    run_check("objective_achieves_optimum", 1e-10, [&] {
        adapters::GivaBases bases = adapters::giva_bases_from_gradient(
            grad, rank, adapters::GivaBasis::v_r_u_r, mix_seed(s, 7));
        const double obj = oracle::objective_value(grad, *bases.a, *bases.b);
        const double best = oracle::best_rank_r_error(grad, rank);
        return std::abs(obj - best) / std::max(best, 1e-300);
    });
    run_check("no_orthonormal_pair_beats_optimum", 1e-10, [&] {
        const double best = oracle::best_rank_r_error(grad, rank);
        double max_improvement = -std::numeric_limits<double>::infinity();
        for (index_t t = 0; t < 20; ++t) {
            const Matrix a = transpose(
                oracle::random_orthonormal(grad.cols(), rank, mix_seed(s, 200 + 2 * t)));
            const Matrix b =
                oracle::random_orthonormal(grad.rows(), rank, mix_seed(s, 201 + 2 * t));
            max_improvement =
                std::max(max_improvement, best - oracle::objective_value(grad, a, b));
        }
        return max_improvement;
    });

    {
        Fixture f = make_fixture(16, 12, 8, mix_seed(s, 8));
        const auto& layer = std::get<nn::DenseStage>(f.model.stages[0]).layer;
        run_check("first_step_matches_truncated_svd", 1e-8, [&] {
            auto [loss, grads] = nn::loss_and_full_grad(f.model, f.batch);
            (void)loss;
            return oracle::first_step_equivalence(layer, grads[0], rank,
                                                  oracle::BasisChoice::v_r_u_r, 0.05, f.batch)
                .rel_fro_diff;
        });
        run_check(
            "first_step_random_bases_control", 1e-4,
            [&] {
                auto [loss, grads] = nn::loss_and_full_grad(f.model, f.batch);
                (void)loss;
                return oracle::first_step_equivalence(layer, grads[0], rank,
                                                      oracle::BasisChoice::vera_random, 0.05,
                                                      f.batch, nn::LossKind::mse,
                                                      mix_seed(s, 9))
                    .rel_fro_diff;
            },
            /*pass_above=*/true);
    }

    run_check("gradcheck_scaling_vectors", 1e-6, [&] {
        Fixture f = make_fixture(10, 8, 12, mix_seed(s, 10));
        auto [loss, grads] = nn::loss_and_full_grad(f.model, f.batch);
        (void)loss;
        adapters::AdapterConfig acfg = cfg.adapter;
        acfg.method = adapters::Method::giva;
        acfg.rank = 3;
        acfg.svd_route = adapters::SvdRoute::exact;
        auto& layer = std::get<nn::DenseStage>(f.model.stages[0]).layer;
        adapters::attach_adapter(layer, adapters::init_giva(layer, grads[0], acfg));
        randomize_trainables(f.model, mix_seed(s, 11));
        return oracle::max_rel_grad_error(f.model, f.batch);
    });
    run_check("gradcheck_low_rank_factors", 1e-6, [&] {
        Fixture f = make_fixture(10, 8, 12, mix_seed(s, 12));
        adapters::AdapterConfig acfg = cfg.adapter;
        acfg.method = adapters::Method::lora;
        acfg.rank = 3;
        auto& layer = std::get<nn::DenseStage>(f.model.stages[0]).layer;
        adapters::attach_adapter(layer, adapters::init_lora(10, 8, acfg));
        randomize_trainables(f.model, mix_seed(s, 13));
        return oracle::max_rel_grad_error(f.model, f.batch);
    });

    run_check("init_preserves_function", 1e-12, [&] {
        double worst = 0.0;
        for (auto method :
             {adapters::Method::giva, adapters::Method::vera, adapters::Method::lora}) {
            Fixture f = make_fixture(14, 10, 9, mix_seed(s, 14));
            const Matrix before = nn::forward(f.model, f.batch.inputs).outputs;
            adapters::AdapterConfig acfg = cfg.adapter;
            acfg.method = method;
            acfg.rank = 4;
            auto& layer = std::get<nn::DenseStage>(f.model.stages[0]).layer;
            if (method == adapters::Method::giva) {
                auto [loss, grads] = nn::loss_and_full_grad(f.model, f.batch);
                (void)loss;
                adapters::attach_adapter(layer, adapters::init_giva(layer, grads[0], acfg));
            } else if (method == adapters::Method::vera) {
                adapters::VeraBasisPool pool(mix_seed(s, 15));
                adapters::attach_adapter(layer, adapters::init_vera(14, 10, acfg, pool));
            } else {
                adapters::attach_adapter(layer, adapters::init_lora(14, 10, acfg));
            }
            worst = std::max(worst,
                             max_abs_diff(nn::forward(f.model, f.batch.inputs).outputs, before));
        }
        return worst;
    });
    run_check("init_preserves_function_svd_split", 1e-9, [&] {
        Fixture f = make_fixture(14, 10, 9, mix_seed(s, 16));
        const Matrix before = nn::forward(f.model, f.batch.inputs).outputs;
        adapters::AdapterConfig acfg = cfg.adapter;
        acfg.method = adapters::Method::osora;
        acfg.rank = 4;
        auto& layer = std::get<nn::DenseStage>(f.model.stages[0]).layer;
        adapters::attach_adapter(layer, adapters::init_osora(layer, acfg));
        return max_abs_diff(nn::forward(f.model, f.batch.inputs).outputs, before);
    });

    run_check("merge_matches_adapted_forward", 1e-9, [&] {
        Fixture f = make_fixture(14, 10, 9, mix_seed(s, 17));
        auto [loss, grads] = nn::loss_and_full_grad(f.model, f.batch);
        (void)loss;
        adapters::AdapterConfig acfg = cfg.adapter;
        acfg.method = adapters::Method::giva;
        acfg.rank = 4;
        auto& layer = std::get<nn::DenseStage>(f.model.stages[0]).layer;
        adapters::attach_adapter(layer, adapters::init_giva(layer, grads[0], acfg));
        randomize_trainables(f.model, mix_seed(s, 18));
        const Matrix adapted = nn::forward(f.model, f.batch.inputs).outputs;
        nn::Model merged = f.model;
        auto& mlayer = std::get<nn::DenseStage>(merged.stages[0]).layer;
        mlayer = adapters::merge(mlayer);
        return max_abs_diff(nn::forward(merged, f.batch.inputs).outputs, adapted);
    });

    run_check("trainable_param_counts", 0.0, [&] {
        const index_t m = 20, d = 12, r = 5;
        Fixture f = make_fixture(m, d, 6, mix_seed(s, 19));
        auto [loss, grads] = nn::loss_and_full_grad(f.model, f.batch);
        (void)loss;
        adapters::AdapterConfig acfg = cfg.adapter;
        acfg.rank = r;
        acfg.method = adapters::Method::giva;
        auto& layer = std::get<nn::DenseStage>(f.model.stages[0]).layer;
        const auto vec_state = adapters::init_giva(layer, grads[0], acfg);
        acfg.method = adapters::Method::lora;
        const auto lora_state = adapters::init_lora(m, d, acfg);
        const double vec_dev = std::abs(static_cast<double>(
            adapters::trainable_param_count(*vec_state) - (m + r)));
        const double lora_dev = std::abs(static_cast<double>(
            adapters::trainable_param_count(*lora_state) - r * (m + d)));
        return std::max(vec_dev, lora_dev);
    });

    const std::filesystem::path ckpt_dir = out_dir / "verify_ckpt";
    run_check("checkpoint_roundtrip_exact", 0.0, [&] {
        Fixture f = make_fixture(12, 9, 6, mix_seed(s, 20));
        auto [loss, grads] = nn::loss_and_full_grad(f.model, f.batch);
        (void)loss;
        adapters::AdapterConfig acfg = cfg.adapter;
        acfg.method = adapters::Method::giva;
        acfg.rank = 3;
        auto& layer = std::get<nn::DenseStage>(f.model.stages[0]).layer;
        adapters::attach_adapter(layer, adapters::init_giva(layer, grads[0], acfg));
        randomize_trainables(f.model, mix_seed(s, 21));
        ckpt::save_adapter_bases(f.model, ckpt_dir, "bases",
                                 {{"method", "giva"}, {"rank", 3}});
        ckpt::save_adapter_light(f.model, ckpt_dir, "light",
                                 {{"method", "giva"}, {"rank", 3}});
        nn::Model restored;
        nn::DenseStage stage;
        stage.layer.weight = std::get<nn::DenseStage>(f.model.stages[0]).layer.weight;
        restored.stages.emplace_back(std::move(stage));
        restored.loss = nn::LossKind::mse;
        ckpt::load_adapter_bases(restored, ckpt::read_checkpoint(ckpt_dir / "bases.json"));
        ckpt::load_adapter_light(restored, ckpt::read_checkpoint(ckpt_dir / "light.json"));
        return max_abs_diff(nn::forward(restored, f.batch.inputs).outputs,
                            nn::forward(f.model, f.batch.inputs).outputs);
    });
    run_check("checkpoint_corruption_detected", 0.0, [&] {
        const std::filesystem::path blob = ckpt_dir / "light.bin";
        std::vector<char> bytes;
        {
            std::ifstream in(blob, std::ios::binary);
            bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        }
        if (bytes.size() < 16) {
            throw DataError("verify: light checkpoint blob unexpectedly small");
        }
        bytes[bytes.size() - 3] ^= 0x40;
        {
            std::ofstream out(blob, std::ios::binary | std::ios::trunc);
            out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        }
        try {
            ckpt::read_checkpoint(ckpt_dir / "light.json");
            return 1.0;
        } catch (const IntegrityError&) {
            return 0.0;
        }
    });

    run_check("shared_bases_materialized_once", 0.0, [&] {
        adapters::VeraBasisPool pool(mix_seed(s, 22));
        adapters::AdapterConfig acfg = cfg.adapter;
        acfg.method = adapters::Method::vera;
        acfg.rank = 4;
        acfg.vera_shared = true;
        adapters::init_vera(16, 12, acfg, pool);
        adapters::init_vera(16, 12, acfg, pool);
        return static_cast<double>(pool.materialized_count()) - 1.0;
    });

    run_check("update_rank_bounded", 1e-10, [&] {
        Fixture f = make_fixture(18, 14, 7, mix_seed(s, 23));
        auto [loss, grads] = nn::loss_and_full_grad(f.model, f.batch);
        (void)loss;
        adapters::AdapterConfig acfg = cfg.adapter;
        acfg.method = adapters::Method::giva;
        acfg.rank = 4;
        auto& layer = std::get<nn::DenseStage>(f.model.stages[0]).layer;
        adapters::attach_adapter(layer, adapters::init_giva(layer, grads[0], acfg));
        randomize_trainables(f.model, mix_seed(s, 24));
        const linalg::SvdFactors sv = linalg::svd_full(adapters::delta_w(*layer.adapter));
        return sv.S.size() > 4 ? sv.S[4] : 0.0;
    });

    index_t failed = 0;
    nlohmann::json report = nlohmann::json::array();
    for (const Check& c : checks) {
        if (!c.pass) ++failed;
        std::cout << (c.pass ? "PASS" : "FAIL") << "  " << c.name
                  << "  measured=" << fmt(c.measured) << " tolerance=" << fmt(c.tolerance);
        if (!c.note.empty()) std::cout << "  (" << c.note << ")";
        std::cout << "\n";
        nlohmann::json entry = {{"name", c.name},
                                {"tolerance", c.tolerance},
                                {"measured", c.measured},
                                {"pass", c.pass}};
        if (!c.note.empty()) entry["note"] = c.note;
        report.push_back(std::move(entry));
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    nlohmann::json doc = {{"checks", report},
                          {"passed", checks.size() - failed},
                          {"failed", failed}};
    write_text(out_dir / "verify.json", doc.dump(2) + "\n");
    std::cout << (checks.size() - failed) << "/" << checks.size() << " checks passed\n";
    return failed == 0 ? 0 : 1;
}

int cmd_inspect(const std::filesystem::path& manifest_path,
                const std::filesystem::path& out_dir) {
    const ckpt::LoadedCheckpoint loaded = ckpt::read_checkpoint(manifest_path);
    const std::filesystem::path blob_path =
        manifest_path.parent_path() / loaded.manifest.at("blob").get<std::string>();
    const auto blob_bytes = std::filesystem::file_size(blob_path);

    std::cout << "manifest: " << manifest_path.string() << "\n";
    std::cout << "kind: " << loaded.manifest.value("kind", "?") << "  method: "
              << loaded.manifest.value("method", "?") << "  format_version: "
              << loaded.manifest.at("format_version").get<int>() << "\n";
    std::cout << "blob: " << blob_path.filename().string() << " (" << blob_bytes << " bytes)\n";
    std::cout << "content_hash: " << loaded.manifest.at("content_hash").get<std::string>()
              << "\n";
    std::cout << "tensors:\n";
    for (const ckpt::LoadedTensor& t : loaded.tensors) {
        std::cout << "  " << t.name << "  " << t.rows << " x " << t.cols << "\n";
    }

    nlohmann::json residuals = nlohmann::json::object();
    if (loaded.manifest.value("kind", "") == "bases") {
        std::cout << "orthonormality residuals:\n";
        for (const ckpt::LoadedTensor& t : loaded.tensors) {
            double res = -1.0;
            if (t.name.size() > 2 && t.name.ends_with(".A")) {
                res = row_gram_residual(Matrix::from_data(t.rows, t.cols, t.data));
            } else if (t.name.size() > 2 && t.name.ends_with(".B")) {
                res = col_gram_residual(Matrix::from_data(t.rows, t.cols, t.data));
            }
            if (res >= 0.0) {
                std::cout << "  " << t.name << ": " << fmt(res) << "\n";
                residuals[t.name] = res;
            }
        }
    }

    if (!out_dir.empty()) {
        nlohmann::json tensors = nlohmann::json::array();
        for (const ckpt::LoadedTensor& t : loaded.tensors) {
            tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
        }
        nlohmann::json doc = {{"manifest", loaded.manifest},
                              {"blob_bytes", blob_bytes},
                              {"tensors", tensors},
                              {"orthonormality_residuals", residuals}};
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        write_text(out_dir / "inspect.json", doc.dump(2) + "\n");
    }
    return 0;
}

} // namespace giva::runner
