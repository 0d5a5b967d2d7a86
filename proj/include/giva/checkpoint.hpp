#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "giva/matrix.hpp"
#include "giva/nn.hpp"

namespace giva::ckpt {

inline constexpr std::uint32_t kFormatVersion = 1;

/// Checkpoints are a JSON manifest plus one binary blob. Blob layout:
/// magic "GIVA", format version (u32 LE), then the tensors back to back as
/// little-endian 64-bit floats, row-major, at manifest-declared offsets.
struct TensorIn {
    std::string name;
    index_t rows = 0;
    index_t cols = 0;
    std::span<const double> data;
};

struct WrittenFiles {
    std::filesystem::path manifest;
    std::filesystem::path blob;
};

/// Writes <stem>.json and <stem>.bin under dir. `header` fields are merged
/// into the manifest. Tensors sharing a data pointer are stored once and
/// indexed at the same offset.
WrittenFiles write_checkpoint(const std::filesystem::path& dir, const std::string& stem,
                              const nlohmann::json& header,
                              const std::vector<TensorIn>& tensors);

struct LoadedTensor {
    std::string name;
    index_t rows = 0;
    index_t cols = 0;
    std::vector<double> data;
};

struct LoadedCheckpoint {
    nlohmann::json manifest;
    std::vector<LoadedTensor> tensors;

    const LoadedTensor& tensor(const std::string& name) const;
    bool has_tensor(const std::string& name) const;
};

/// Reads and fully verifies a checkpoint: magic, version, content hash,
/// offsets in bounds, finite values. Any inconsistency throws
/// IntegrityError.
LoadedCheckpoint read_checkpoint(const std::filesystem::path& manifest_path);

/// Frozen state: bases (and, for the SVD-of-weights method, the residual
/// weight and initial singular values) of every adapted layer. Stored once
/// per task.
WrittenFiles save_adapter_bases(const nn::Model& model, const std::filesystem::path& dir,
                                const std::string& stem, nlohmann::json header = {});

/// Trainable state only: gamma/lambda per layer for vector adapters, A/B for
/// the low-rank adapter. This is the per-checkpoint lightweight payload.
WrittenFiles save_adapter_light(const nn::Model& model, const std::filesystem::path& dir,
                                const std::string& stem, nlohmann::json header = {});

/// Restores trainable vectors into already-attached adapters. Shape or
/// method mismatches throw ContractError.
void load_adapter_light(nn::Model& model, const LoadedCheckpoint& ckpt);

/// Reconstructs and attaches adapters from a bases checkpoint (trainable
/// vectors at their initialization values; follow with load_adapter_light to
/// restore trained state).
void load_adapter_bases(nn::Model& model, const LoadedCheckpoint& ckpt);

} // namespace giva::ckpt
