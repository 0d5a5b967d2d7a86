#include "giva/runconfig.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "giva/error.hpp"

namespace giva::runcfg {

namespace {

/// Typed accessor over one JSON object that records which keys were read and
/// rejects the rest, reporting dotted field paths.
class Section {
public:
    Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError(path_ + ": expected an object");
        }
    }

    std::string at(const char* key) const {
        return path_.empty() ? std::string(key) : path_ + "." + key;
    }

    bool has(const char* key) {
        if (j_.contains(key)) {
            seen_.insert(key);
            return true;
        }
        return false;
    }

    const nlohmann::json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void number(const char* key, double& out) {
        if (!has(key)) return;
        const nlohmann::json& v = j_.at(key);
        if (!v.is_number()) {
            throw ConfigError(at(key) + ": expected a number");
        }
        out = v.get<double>();
        if (!std::isfinite(out)) {
            throw ConfigError(at(key) + ": must be finite");
        }
    }

    void count(const char* key, index_t& out) {
        if (!has(key)) return;
        const nlohmann::json& v = j_.at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0)) {
            throw ConfigError(at(key) + ": expected a non-negative integer");
        }
        out = v.get<index_t>();
    }

    void seed(const char* key, std::uint64_t& out) {
        if (!has(key)) return;
        const nlohmann::json& v = j_.at(key);
        if (!v.is_number_integer() || v.get<long long>() < 0) {
            throw ConfigError(at(key) + ": expected a non-negative integer");
        }
        out = v.get<std::uint64_t>();
    }

    void boolean(const char* key, bool& out) {
        if (!has(key)) return;
        const nlohmann::json& v = j_.at(key);
        if (!v.is_boolean()) {
            throw ConfigError(at(key) + ": expected true or false");
        }
        out = v.get<bool>();
    }

    void text(const char* key, std::string& out) {
        if (!has(key)) return;
        const nlohmann::json& v = j_.at(key);
        if (!v.is_string()) {
            throw ConfigError(at(key) + ": expected a string");
        }
        out = v.get<std::string>();
    }

    void vocab(const char* key, std::string& out, std::initializer_list<const char*> allowed) {
        std::string value = out;
        text(key, value);
        for (const char* a : allowed) {
            if (value == a) {
                out = value;
                return;
            }
        }
        std::string opts;
        for (const char* a : allowed) {
            if (!opts.empty()) opts += " | ";
            opts += a;
        }
        throw ConfigError(at(key) + ": '" + value + "' is not one of " + opts);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                throw ConfigError((path_.empty() ? it.key() : path_ + "." + it.key()) +
                                  ": unknown key");
            }
        }
    }

private:
    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename T, typename Elem>
void read_array(Section& s, const char* key, std::vector<T>& out, Elem&& elem) {
    if (!s.has(key)) return;
    const nlohmann::json& v = s.raw(key);
    if (!v.is_array()) {
        throw ConfigError(s.at(key) + ": expected an array");
    }
    out.clear();
    index_t i = 0;
    for (const nlohmann::json& e : v) {
        out.push_back(elem(s.at(key) + "[" + std::to_string(i) + "]", e));
        ++i;
    }
}

double positive_number(const std::string& path, const nlohmann::json& e) {
    if (!e.is_number() || !(e.get<double>() > 0.0)) {
        throw ConfigError(path + ": expected a positive number");
    }
    return e.get<double>();
}

index_t positive_count(const std::string& path, const nlohmann::json& e) {
    if (!e.is_number_integer() || e.get<long long>() < 1) {
        throw ConfigError(path + ": expected a positive integer");
    }
    return e.get<index_t>();
}

std::uint64_t seed_value(const std::string& path, const nlohmann::json& e) {
    if (!e.is_number_integer() || e.get<long long>() < 0) {
        throw ConfigError(path + ": expected a non-negative integer");
    }
    return e.get<std::uint64_t>();
}

DatasetConfig parse_dataset(const nlohmann::json& j) {
    DatasetConfig out;
    Section s(j, "dataset");
    s.vocab("kind", out.kind, {"teacher_student", "blobs", "csv"});
    s.count("m", out.m);
    s.count("d", out.d);
    s.count("k", out.k);
    s.count("n", out.n);
    s.number("noise", out.noise);
    s.seed("seed", out.seed);
    s.number("split", out.split);
    s.count("classes", out.classes);
    s.number("separation", out.separation);
    s.text("path", out.path);
    s.text("target_column", out.target_column);
    s.vocab("task", out.task, {"regression", "classification"});
    s.finish();
    return out;
}

StageConfig parse_stage(const nlohmann::json& j, const std::string& path) {
    StageConfig out;
    Section s(j, path);
    s.vocab("kind", out.kind, {"dense", "attention"});
    s.count("width", out.width);
    s.vocab("activation", out.activation, {"identity", "relu", "tanh", "softmax_output"});
    s.boolean("bias", out.bias);
    s.count("proj_dim", out.proj_dim);
    s.finish();
    return out;
}

ModelConfig parse_model(const nlohmann::json& j) {
    ModelConfig out;
    Section s(j, "model");
    s.vocab("loss", out.loss, {"auto", "mse", "cross_entropy"});
    s.seed("init_seed", out.init_seed);
    if (s.has("stages")) {
        const nlohmann::json& stages = s.raw("stages");
        if (!stages.is_array()) {
            throw ConfigError("model.stages: expected an array");
        }
        index_t i = 0;
        for (const nlohmann::json& e : stages) {
            out.stages.push_back(parse_stage(e, "model.stages[" + std::to_string(i) + "]"));
            ++i;
        }
    }
    s.finish();
    return out;
}

adapters::AdapterConfig parse_adapter(const nlohmann::json& j) {
    adapters::AdapterConfig out;
    Section s(j, "adapter");
    std::string method = adapters::method_name(out.method);
    s.vocab("method", method, {"lora", "vera", "osora", "giva"});
    out.method = adapters::method_from_name(method);
    s.count("rank", out.rank);
    if (out.rank < 1) {
        throw ConfigError("adapter.rank: must be at least 1");
    }
    std::string init = adapters::basis_name(out.basis);
    s.vocab("init", init, {"v_r_u_r", "v_r_u_2r", "v_r_q"});
    out.basis = adapters::basis_from_name(init);
    std::string route = svd_route_name(out.svd_route);
    s.vocab("svd_route", route, {"exact", "randomized", "automatic"});
    out.svd_route = svd_route_from_name(route);
    s.seed("seed", out.seed);
    s.number("d_initial", out.vera_d_initial);
    s.number("alpha", out.lora_alpha);
    if (out.lora_alpha < 0.0) {
        throw ConfigError("adapter.alpha: must be non-negative (0 selects the 2*rank default)");
    }
    s.boolean("shared_bases", out.vera_shared);
    s.finish();
    return out;
}

ProbeConfig parse_probe(const nlohmann::json& j) {
    ProbeConfig out;
    Section s(j, "probe");
    s.count("num_batches", out.num_batches);
    if (out.num_batches < 1) {
        throw ConfigError("probe.num_batches: must be at least 1");
    }
    s.count("batch_size", out.batch_size);
    s.seed("seed", out.seed);
    s.finish();
    return out;
}

trainer::TrainConfig parse_train(const nlohmann::json& j) {
    trainer::TrainConfig out;
    Section s(j, "train");
    std::string opt = optimizer_name(out.optimizer);
    s.vocab("optimizer", opt, {"sgd", "adamw"});
    out.optimizer = optimizer_from_name(opt);
    s.number("learning_rate", out.learning_rate);
    s.number("weight_decay", out.weight_decay);
    std::string sched = schedule_name(out.schedule);
    s.vocab("schedule", sched, {"constant", "linear", "cosine"});
    out.schedule = schedule_from_name(sched);
    s.number("warmup", out.warmup_fraction);
    s.count("warmup_steps", out.warmup_steps);
    s.count("steps", out.steps);
    s.count("batch_size", out.batch_size);
    s.number("clip_norm", out.clip_norm);
    s.count("evals_per_epoch", out.evals_per_epoch);
    s.seed("seed", out.seed);
    s.number("beta1", out.beta1);
    s.number("beta2", out.beta2);
    s.number("eps", out.eps);
    s.number("divergence_threshold", out.divergence_threshold);
    s.finish();
    try {
        out.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("train.") + e.what());
    }
    return out;
}

SweepConfig parse_sweep(const nlohmann::json& j) {
    SweepConfig out;
    Section s(j, "sweep");
    read_array(s, "methods", out.methods, [](const std::string& path, const nlohmann::json& e) {
        if (!e.is_string()) {
            throw ConfigError(path + ": expected a string");
        }
        const std::string v = e.get<std::string>();
        if (v != "lora" && v != "vera" && v != "osora" && v != "giva") {
            throw ConfigError(path + ": '" + v + "' is not one of lora | vera | osora | giva");
        }
        return v;
    });
    read_array(s, "ranks", out.ranks, positive_count);
    read_array(s, "learning_rates", out.learning_rates, positive_number);
    read_array(s, "seeds", out.seeds, seed_value);
    s.finish();
    return out;
}

VerifyConfig parse_verify(const nlohmann::json& j) {
    VerifyConfig out;
    Section s(j, "verify");
    s.number("inject_perturbation", out.inject_perturbation);
    if (out.inject_perturbation < 0.0) {
        throw ConfigError("verify.inject_perturbation: must be non-negative");
    }
    s.finish();
    return out;
}

} // namespace

void RunConfig::validate() const {
    if (dataset.n < 2) {
        throw ConfigError("dataset.n: need at least 2 examples");
    }
    if (!(dataset.split > 0.0 && dataset.split < 1.0)) {
        throw ConfigError("dataset.split: must lie strictly between 0 and 1");
    }
    if (dataset.noise < 0.0) {
        throw ConfigError("dataset.noise: must be non-negative");
    }
    if (dataset.kind == "teacher_student") {
        if (dataset.m < 1 || dataset.d < 1) {
            throw ConfigError("dataset.m: teacher-student dimensions must be positive");
        }
        if (dataset.k > std::min(dataset.m, dataset.d)) {
            throw ConfigError("dataset.k: hidden rank exceeds min(m, d)");
        }
    } else if (dataset.kind == "blobs") {
        if (dataset.classes < 2) {
            throw ConfigError("dataset.classes: need at least 2 classes");
        }
        if (dataset.d < 1) {
            throw ConfigError("dataset.d: feature dimension must be positive");
        }
    } else if (dataset.kind == "csv") {
        if (dataset.path.empty()) {
            throw ConfigError("dataset.path: required for csv datasets");
        }
        if (dataset.target_column.empty()) {
            throw ConfigError("dataset.target_column: required for csv datasets");
        }
    }
    for (index_t i = 0; i < model.stages.size(); ++i) {
        const StageConfig& st = model.stages[i];
        const std::string path = "model.stages[" + std::to_string(i) + "]";
        if (st.kind == "attention" && st.width != 0) {
            throw ConfigError(path + ".width: attention stages preserve their input width");
        }
        if (st.kind == "dense" && st.proj_dim != 0) {
            throw ConfigError(path + ".proj_dim: only attention stages project");
        }
        if (st.activation == "softmax_output" && i + 1 != model.stages.size()) {
            throw ConfigError(path + ".activation: softmax_output is only valid on the last stage");
        }
    }
    if (model.loss == "cross_entropy" && dataset.kind == "teacher_student") {
        throw ConfigError("model.loss: teacher-student targets are continuous; use mse");
    }
    if (output_dir.empty()) {
        throw ConfigError("output_dir: must not be empty");
    }
}

RunConfig parse_run_config(const nlohmann::json& doc) {
    RunConfig out;
    Section s(doc, "");
    if (s.has("dataset")) out.dataset = parse_dataset(s.raw("dataset"));
    if (s.has("model")) out.model = parse_model(s.raw("model"));
    if (s.has("adapter")) out.adapter = parse_adapter(s.raw("adapter"));
    if (s.has("probe")) out.probe = parse_probe(s.raw("probe"));
    if (s.has("train")) out.train = parse_train(s.raw("train"));
    if (s.has("sweep")) out.sweep = parse_sweep(s.raw("sweep"));
    if (s.has("verify")) out.verify = parse_verify(s.raw("verify"));
    s.text("output_dir", out.output_dir);
    s.finish();
    out.validate();
    return out;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open config file '" + path.string() + "'");
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_run_config(doc);
}

nlohmann::json to_json(const RunConfig& cfg) {
    nlohmann::json stages = nlohmann::json::array();
    for (const StageConfig& st : cfg.model.stages) {
        stages.push_back({{"kind", st.kind},
                          {"width", st.width},
                          {"activation", st.activation},
                          {"bias", st.bias},
                          {"proj_dim", st.proj_dim}});
    }
    nlohmann::json dataset = {{"kind", cfg.dataset.kind}, {"n", cfg.dataset.n},
                              {"noise", cfg.dataset.noise}, {"seed", cfg.dataset.seed},
                              {"split", cfg.dataset.split}};
    if (cfg.dataset.kind == "teacher_student") {
        dataset["m"] = cfg.dataset.m;
        dataset["d"] = cfg.dataset.d;
        dataset["k"] = cfg.dataset.k;
    } else if (cfg.dataset.kind == "blobs") {
        dataset["d"] = cfg.dataset.d;
        dataset["classes"] = cfg.dataset.classes;
        dataset["separation"] = cfg.dataset.separation;
    } else {
        dataset["path"] = cfg.dataset.path;
        dataset["target_column"] = cfg.dataset.target_column;
        dataset["task"] = cfg.dataset.task;
    }
    return {{"dataset", dataset},
            {"model",
             {{"loss", cfg.model.loss}, {"init_seed", cfg.model.init_seed}, {"stages", stages}}},
            {"adapter",
             {{"method", adapters::method_name(cfg.adapter.method)},
              {"rank", cfg.adapter.rank},
              {"init", adapters::basis_name(cfg.adapter.basis)},
              {"svd_route", svd_route_name(cfg.adapter.svd_route)},
              {"seed", cfg.adapter.seed},
              {"d_initial", cfg.adapter.vera_d_initial},
              {"alpha", cfg.adapter.lora_alpha},
              {"shared_bases", cfg.adapter.vera_shared}}},
            {"probe",
             {{"num_batches", cfg.probe.num_batches},
              {"batch_size", cfg.probe.batch_size},
              {"seed", cfg.probe.seed}}},
            {"train",
             {{"optimizer", optimizer_name(cfg.train.optimizer)},
              {"learning_rate", cfg.train.learning_rate},
              {"weight_decay", cfg.train.weight_decay},
              {"schedule", schedule_name(cfg.train.schedule)},
              {"warmup", cfg.train.warmup_fraction},
              {"warmup_steps", cfg.train.warmup_steps},
              {"steps", cfg.train.steps},
              {"batch_size", cfg.train.batch_size},
              {"clip_norm", cfg.train.clip_norm},
              {"evals_per_epoch", cfg.train.evals_per_epoch},
              {"seed", cfg.train.seed},
              {"beta1", cfg.train.beta1},
              {"beta2", cfg.train.beta2},
              {"eps", cfg.train.eps},
              {"divergence_threshold", cfg.train.divergence_threshold}}},
            {"sweep",
             {{"methods", cfg.sweep.methods},
              {"ranks", cfg.sweep.ranks},
              {"learning_rates", cfg.sweep.learning_rates},
              {"seeds", cfg.sweep.seeds}}},
            {"verify", {{"inject_perturbation", cfg.verify.inject_perturbation}}},
            {"output_dir", cfg.output_dir}};
}

std::string optimizer_name(trainer::Optimizer o) {
    return o == trainer::Optimizer::sgd ? "sgd" : "adamw";
}

trainer::Optimizer optimizer_from_name(const std::string& name) {
    if (name == "sgd") return trainer::Optimizer::sgd;
    if (name == "adamw") return trainer::Optimizer::adamw;
    throw ConfigError("unknown optimizer '" + name + "'");
}

std::string schedule_name(trainer::Schedule s) {
    switch (s) {
    case trainer::Schedule::constant: return "constant";
    case trainer::Schedule::linear: return "linear";
    case trainer::Schedule::cosine: return "cosine";
    }
    throw ConfigError("unknown schedule value");
}

trainer::Schedule schedule_from_name(const std::string& name) {
    if (name == "constant") return trainer::Schedule::constant;
    if (name == "linear") return trainer::Schedule::linear;
    if (name == "cosine") return trainer::Schedule::cosine;
    throw ConfigError("unknown schedule '" + name + "'");
}

std::string svd_route_name(adapters::SvdRoute r) {
    switch (r) {
    case adapters::SvdRoute::exact: return "exact";
    case adapters::SvdRoute::randomized: return "randomized";
    case adapters::SvdRoute::automatic: return "automatic";
    }
    throw ConfigError("unknown svd route value");
}

adapters::SvdRoute svd_route_from_name(const std::string& name) {
    if (name == "exact") return adapters::SvdRoute::exact;
    if (name == "randomized") return adapters::SvdRoute::randomized;
    if (name == "automatic") return adapters::SvdRoute::automatic;
    throw ConfigError("unknown svd route '" + name + "'");
}

} // namespace giva::runcfg
