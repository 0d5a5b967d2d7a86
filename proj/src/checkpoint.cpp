#include "giva/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

#include "giva/adapters.hpp"
#include "giva/error.hpp"
#include "giva/sha256.hpp"

namespace giva::ckpt {

namespace {

constexpr char kMagic[4] = {'G', 'I', 'V', 'A'};

void append_u32_le(std::vector<unsigned char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
}

void append_f64_le(std::vector<unsigned char>& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) {
        buf.push_back(static_cast<unsigned char>(bits >> (8 * i)));
    }
}

double read_f64_le(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= std::uint64_t(p[i]) << (8 * i);
    }
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& p,
                                           const char* what_for) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw IntegrityError(std::string(what_for) + ": cannot open '" + p.string() + "'");
    }
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

} // namespace

WrittenFiles write_checkpoint(const std::filesystem::path& dir, const std::string& stem,
                              const nlohmann::json& header,
                              const std::vector<TensorIn>& tensors) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);

    std::vector<unsigned char> blob;
    blob.insert(blob.end(), kMagic, kMagic + 4);
    append_u32_le(blob, kFormatVersion);

    nlohmann::json index = nlohmann::json::array();
    std::map<const double*, std::size_t> seen;
    for (const TensorIn& t : tensors) {
        if (t.data.size() != t.rows * t.cols) {
            throw DimensionError("write_checkpoint: tensor '" + t.name + "' has " +
                                 std::to_string(t.data.size()) + " values for " +
                                 std::to_string(t.rows) + "x" + std::to_string(t.cols));
        }
        std::size_t offset;
        auto it = seen.find(t.data.data());
        if (it != seen.end()) {
            offset = it->second;
        } else {
            offset = blob.size();
            for (double v : t.data) {
                append_f64_le(blob, v);
            }
            seen.emplace(t.data.data(), offset);
        }
        index.push_back({{"name", t.name},
                         {"rows", t.rows},
                         {"cols", t.cols},
                         {"offset", offset},
                         {"dtype", "f64"}});
    }

    WrittenFiles files;
    files.blob = dir / (stem + ".bin");
    files.manifest = dir / (stem + ".json");
    {
        std::ofstream out(files.blob, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("write_checkpoint: cannot write '" + files.blob.string() + "'");
        }
        out.write(reinterpret_cast<const char*>(blob.data()),
                  static_cast<std::streamsize>(blob.size()));
    }

    nlohmann::json manifest = header;
    manifest["format_version"] = kFormatVersion;
    manifest["blob"] = files.blob.filename().string();
    manifest["content_hash"] = sha256_hex(blob);
    manifest["tensors"] = std::move(index);
    {
        std::ofstream out(files.manifest, std::ios::trunc);
        if (!out) {
            throw DataError("write_checkpoint: cannot write '" + files.manifest.string() + "'");
        }
        out << manifest.dump(2) << "\n";
    }
    return files;
}

const LoadedTensor& LoadedCheckpoint::tensor(const std::string& name) const {
    for (const LoadedTensor& t : tensors) {
        if (t.name == name) {
            return t;
        }
    }
    throw IntegrityError("checkpoint is missing tensor '" + name + "'");
}

bool LoadedCheckpoint::has_tensor(const std::string& name) const {
    return std::any_of(tensors.begin(), tensors.end(),
                       [&](const LoadedTensor& t) { return t.name == name; });
}

LoadedCheckpoint read_checkpoint(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw DataError("read_checkpoint: cannot open '" + manifest_path.string() + "'");
    }
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("read_checkpoint: '" + manifest_path.string() + "' is not valid JSON: " +
                         e.what());
    }

    auto require = [&](const char* key) -> const nlohmann::json& {
        if (!manifest.contains(key)) {
            throw IntegrityError("manifest '" + manifest_path.string() + "' lacks '" + key + "'");
        }
        return manifest.at(key);
    };
    if (require("format_version").get<std::uint32_t>() != kFormatVersion) {
        throw IntegrityError("unsupported checkpoint format version " +
                             require("format_version").dump());
    }

    const std::filesystem::path blob_path =
        manifest_path.parent_path() / require("blob").get<std::string>();
    const std::vector<unsigned char> blob = read_file_bytes(blob_path, "read_checkpoint");
    if (blob.size() < 8 || std::memcmp(blob.data(), kMagic, 4) != 0) {
        throw IntegrityError("blob '" + blob_path.string() + "' lacks the expected magic bytes");
    }
    std::uint32_t version = 0;
    for (int i = 0; i < 4; ++i) {
        version |= std::uint32_t(blob[4 + i]) << (8 * i);
    }
    if (version != kFormatVersion) {
        throw IntegrityError("blob format version " + std::to_string(version) +
                             " does not match supported version " +
                             std::to_string(kFormatVersion));
    }
    const std::string expected = require("content_hash").get<std::string>();
    const std::string actual = sha256_hex(blob);
    if (expected != actual) {
        throw IntegrityError("content hash mismatch for '" + blob_path.string() +
                             "': manifest says " + expected + ", blob hashes to " + actual);
    }

    LoadedCheckpoint out;
    out.manifest = manifest;
    for (const nlohmann::json& entry : require("tensors")) {
        LoadedTensor t;
        t.name = entry.at("name").get<std::string>();
        t.rows = entry.at("rows").get<index_t>();
        t.cols = entry.at("cols").get<index_t>();
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        const std::size_t bytes = t.rows * t.cols * 8;
        if (offset < 8 || offset + bytes > blob.size()) {
            throw IntegrityError("tensor '" + t.name + "' extends past the end of the blob");
        }
        t.data.resize(t.rows * t.cols);
        for (index_t i = 0; i < t.data.size(); ++i) {
            t.data[i] = read_f64_le(blob.data() + offset + 8 * i);
            if (!std::isfinite(t.data[i])) {
                throw IntegrityError("tensor '" + t.name + "' contains non-finite values");
            }
        }
        out.tensors.push_back(std::move(t));
    }
    return out;
}

namespace {

nlohmann::json layer_entry(const std::string& name, const adapters::AdapterState& st) {
    return {{"layer", name},
            {"method", adapters::method_name(st.method)},
            {"rank", st.rank()},
            {"out_dim", st.out_dim()},
            {"in_dim", st.in_dim()}};
}

} // namespace

WrittenFiles save_adapter_bases(const nn::Model& model, const std::filesystem::path& dir,
                                const std::string& stem, nlohmann::json header) {
    std::vector<TensorIn> tensors;
    nlohmann::json layers = nlohmann::json::array();
    for (const nn::ConstLayerRef& ref : nn::linear_layers(model)) {
        if (!ref.layer->adapter) {
            continue;
        }
        const auto& st = *ref.layer->adapter;
        layers.push_back(layer_entry(ref.name, st));
        if (const auto* v = std::get_if<adapters::VectorAdapterState>(&st.value)) {
            tensors.push_back({ref.name + ".A", v->a->rows(), v->a->cols(), v->a->data()});
            tensors.push_back({ref.name + ".B", v->b->rows(), v->b->cols(), v->b->data()});
            if (st.method == adapters::Method::osora) {
                // The residual weight and the subtracted singular values are
                // both derived at init time and frozen afterwards.
                tensors.push_back({ref.name + ".residual", ref.layer->weight.rows(),
                                   ref.layer->weight.cols(), ref.layer->weight.data()});
                tensors.push_back(
                    {ref.name + ".sigma", v->lambda.size(), 1,
                     std::span<const double>(v->lambda)});
            }
        }
        // The low-rank matrix adapter has no frozen tensors; its layer entry
        // still records shape and method for reconstruction.
    }
    header["kind"] = "bases";
    header["layers"] = std::move(layers);
    return write_checkpoint(dir, stem, header, tensors);
}

WrittenFiles save_adapter_light(const nn::Model& model, const std::filesystem::path& dir,
                                const std::string& stem, nlohmann::json header) {
    std::vector<TensorIn> tensors;
    nlohmann::json layers = nlohmann::json::array();
    for (const nn::ConstLayerRef& ref : nn::linear_layers(model)) {
        if (!ref.layer->adapter) {
            continue;
        }
        const auto& st = *ref.layer->adapter;
        layers.push_back(layer_entry(ref.name, st));
        if (const auto* v = std::get_if<adapters::VectorAdapterState>(&st.value)) {
            tensors.push_back(
                {ref.name + ".gamma", v->gamma.size(), 1, std::span<const double>(v->gamma)});
            tensors.push_back(
                {ref.name + ".lambda", v->lambda.size(), 1, std::span<const double>(v->lambda)});
        } else {
            const auto& l = std::get<adapters::LoraState>(st.value);
            tensors.push_back({ref.name + ".A", l.a.rows(), l.a.cols(), l.a.data()});
            tensors.push_back({ref.name + ".B", l.b.rows(), l.b.cols(), l.b.data()});
        }
    }
    header["kind"] = "light";
    header["layers"] = std::move(layers);
    return write_checkpoint(dir, stem, header, tensors);
}

void load_adapter_light(nn::Model& model, const LoadedCheckpoint& ckpt) {
    if (ckpt.manifest.value("kind", "") != "light") {
        throw ContractError("load_adapter_light: checkpoint kind is '" +
                            ckpt.manifest.value("kind", "") + "', expected 'light'");
    }
    for (nn::LayerRef& ref : nn::linear_layers(model)) {
        if (!ref.layer->adapter) {
            continue;
        }
        auto& st = *ref.layer->adapter;
        if (auto* v = std::get_if<adapters::VectorAdapterState>(&st.value)) {
            const LoadedTensor& g = ckpt.tensor(ref.name + ".gamma");
            const LoadedTensor& l = ckpt.tensor(ref.name + ".lambda");
            if (g.data.size() != v->gamma.size() || l.data.size() != v->lambda.size()) {
                throw ContractError("load_adapter_light: vector sizes for '" + ref.name +
                                    "' do not match the attached adapter");
            }
            v->gamma = g.data;
            v->lambda = l.data;
        } else {
            auto& lora = std::get<adapters::LoraState>(st.value);
            const LoadedTensor& a = ckpt.tensor(ref.name + ".A");
            const LoadedTensor& b = ckpt.tensor(ref.name + ".B");
            if (a.rows != lora.a.rows() || a.cols != lora.a.cols() || b.rows != lora.b.rows() ||
                b.cols != lora.b.cols()) {
                throw ContractError("load_adapter_light: factor shapes for '" + ref.name +
                                    "' do not match the attached adapter");
            }
            lora.a = Matrix::from_data(a.rows, a.cols, a.data);
            lora.b = Matrix::from_data(b.rows, b.cols, b.data);
        }
    }
}

void load_adapter_bases(nn::Model& model, const LoadedCheckpoint& ckpt) {
    if (ckpt.manifest.value("kind", "") != "bases") {
        throw ContractError("load_adapter_bases: checkpoint kind is '" +
                            ckpt.manifest.value("kind", "") + "', expected 'bases'");
    }
    const double d_initial = ckpt.manifest.value("d_initial", 1.0);
    const double alpha = ckpt.manifest.value("alpha", 0.0);
    std::map<std::string, nlohmann::json> by_layer;
    for (const nlohmann::json& entry : ckpt.manifest.at("layers")) {
        by_layer[entry.at("layer").get<std::string>()] = entry;
    }
    for (nn::LayerRef& ref : nn::linear_layers(model)) {
        auto it = by_layer.find(ref.name);
        if (it == by_layer.end()) {
            continue;
        }
        const auto method = adapters::method_from_name(it->second.at("method").get<std::string>());
        const index_t r = it->second.at("rank").get<index_t>();
        const index_t m = ref.layer->out_dim();
        const index_t d = ref.layer->in_dim();
        auto state = std::make_shared<adapters::AdapterState>();
        state->method = method;
        if (method == adapters::Method::lora) {
            adapters::LoraState lora;
            lora.a = Matrix(r, d);
            lora.b = Matrix(m, r);
            lora.alpha = alpha > 0.0 ? alpha : 2.0 * static_cast<double>(r);
            state->value = std::move(lora);
        } else {
            const LoadedTensor& a = ckpt.tensor(ref.name + ".A");
            const LoadedTensor& b = ckpt.tensor(ref.name + ".B");
            if (a.rows != r || a.cols != d || b.rows != m || b.cols != r) {
                throw ContractError("load_adapter_bases: stored factors for '" + ref.name +
                                    "' do not match the layer shape");
            }
            adapters::VectorAdapterState v;
            v.a = std::make_shared<const Matrix>(Matrix::from_data(a.rows, a.cols, a.data));
            v.b = std::make_shared<const Matrix>(Matrix::from_data(b.rows, b.cols, b.data));
            if (method == adapters::Method::osora) {
                const LoadedTensor& res = ckpt.tensor(ref.name + ".residual");
                if (res.rows != m || res.cols != d) {
                    throw ContractError("load_adapter_bases: residual shape for '" + ref.name +
                                        "' does not match the layer");
                }
                ref.layer->weight = Matrix::from_data(res.rows, res.cols, res.data);
                v.gamma.assign(m, 1.0);
                v.lambda = ckpt.tensor(ref.name + ".sigma").data;
            } else {
                v.gamma.assign(m, 0.0);
                v.lambda.assign(r, method == adapters::Method::vera ? d_initial : 1.0);
            }
            state->value = std::move(v);
        }
        adapters::attach_adapter(*ref.layer, std::move(state));
    }
}

} // namespace giva::ckpt
