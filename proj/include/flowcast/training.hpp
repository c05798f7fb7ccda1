#pragma once

// RMSprop over L1 loss on the outlet hydrograph, with best-on-validation
// checkpointing.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "flowcast/checkpoint.hpp"
#include "flowcast/dataset.hpp"
#include "flowcast/graph.hpp"
#include "flowcast/models.hpp"

namespace flowcast {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double alpha = 0.99;
    double epsilon = 1e-8;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 20;
    std::uint64_t seed = 0;
    std::optional<double> clip_norm;  // global L2 norm of the averaged batch gradient
    std::optional<std::filesystem::path> checkpoint_path;

    void validate() const;
};

struct OptimizerState {
    std::vector<std::vector<double>> mean_square;  // one accumulator per parameter
    std::size_t step = 0;

    static OptimizerState for_parameters(std::span<const NamedParameter> params);
};

/// v <- alpha v + (1 - alpha) g^2;  p <- p - lr g / (sqrt(v) + eps)
void rmsprop_step(std::span<const NamedParameter> params, std::span<const std::vector<double>> grads,
                  OptimizerState& state, const TrainConfig& config);

/// L1 over the outlet row of [N x T] predictions; other rows get zero gradient.
Tensor masked_outlet_loss(const Tensor& pred, const Tensor& target, std::size_t outlet);

/// Training objective for one snapshot: masked outlet L1 for all-node models,
/// plain L1 against the outlet target otherwise.
Tensor snapshot_loss(const Forecaster& model, const Snapshot& snapshot, const ScaledLaplacian& laplacian,
                     std::size_t outlet);

struct BatchGradient {
    double loss = 0.0;                      // mean over the batch
    std::vector<std::vector<double>> grads;  // mean over the batch, parameter order
};

/// Per-snapshot backward passes on fresh tapes, reduced in batch order.
BatchGradient batch_gradient(const Forecaster& model, std::span<const Snapshot* const> batch,
                             const ScaledLaplacian& laplacian, std::size_t outlet);

/// Mean snapshot loss; records nothing and never touches parameters.
double evaluate_loss(const Forecaster& model, std::span<const Snapshot> snapshots, const ScaledLaplacian& laplacian,
                     std::size_t outlet);

/// Epoch-k visiting order, a pure function of (seed, k).
std::vector<std::size_t> epoch_permutation(std::size_t count, std::uint64_t seed, std::size_t epoch);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double validation_loss = 0.0;
    bool saved = false;
};

struct TrainResult {
    ModelCheckpoint best;
    std::size_t best_epoch = 0;
    std::vector<EpochRecord> history;
};

/// Builds an untrained model of `kind`; `hyperparameters` overrides the defaults.
std::unique_ptr<Forecaster> create_model(ModelKind kind, const nlohmann::json& hyperparameters,
                                         const SensorGraph& graph, std::size_t t_in, std::size_t t_out,
                                         std::uint64_t seed);

/// Trains `model` in place. Log lines: epoch,<n>,train_loss,<v>,val_loss,<v>,saved,<bool>
TrainResult train(Forecaster& model, std::span<const Snapshot> train_set, std::span<const Snapshot> validation_set,
                  const ScaledLaplacian& laplacian, std::size_t outlet, const NormalizationConstants& normalization,
                  const TrainConfig& config, std::ostream* log = nullptr);

}  // namespace flowcast
