#pragma once

// Single-file model checkpoint:
//   "FCCKPT01" | u64 header length | JSON header | u64 tensor count |
//   per tensor: name, rank, dims, f64 values | CRC-32 of everything before it
// All integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "flowcast/dataset.hpp"
#include "flowcast/models.hpp"

namespace flowcast {

struct TrainingMetadata {
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    double validation_loss = 0.0;
};

struct ModelCheckpoint {
    static constexpr std::uint32_t kFormatVersion = 1;

    std::uint32_t format_version = kFormatVersion;
    ModelKind kind = ModelKind::StreamGConvGru;
    nlohmann::json hyperparameters;
    std::vector<NamedParameter> parameters;  // independent copies
    NormalizationConstants normalization;
    std::uint64_t graph_fingerprint = 0;
    std::size_t nodes = 0;
    std::size_t outlet_index = 0;
    TrainingMetadata training;
};

/// Snapshot of a model's current parameters.
ModelCheckpoint make_checkpoint(const Forecaster& model, const NormalizationConstants& normalization,
                                std::size_t nodes, std::size_t outlet_index, const TrainingMetadata& training);

std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& checkpoint);
void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);

/// Throws IntegrityError on a corrupt file or unsupported version, and
/// FingerprintMismatch when `expected_fingerprint` is given and differs.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path,
                                std::optional<std::uint64_t> expected_fingerprint = std::nullopt);

/// Rebuilds the model the checkpoint describes with its stored parameters.
std::unique_ptr<Forecaster> restore_model(const ModelCheckpoint& checkpoint);

}  // namespace flowcast
