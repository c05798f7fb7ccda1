#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flowcast/cells.hpp"
#include "flowcast/dataset.hpp"
#include "flowcast/graph.hpp"

namespace flowcast {

enum class ModelKind { StreamGConvGru, ConvBiGru, Persistence };

std::string_view model_kind_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

class FingerprintMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Common surface the training loop and evaluator work against.
class Forecaster {
public:
    virtual ~Forecaster() = default;

    virtual ModelKind kind() const = 0;
    virtual std::vector<NamedParameter> parameters() const = 0;
    virtual nlohmann::json hyperparameters() const = 0;
    virtual std::unique_ptr<Forecaster> clone() const = 0;
    virtual std::uint64_t graph_fingerprint() const = 0;
    virtual std::size_t horizon() const = 0;

    /// [N x t_out] when predicts_all_nodes(), otherwise [1 x t_out] for the outlet.
    virtual Tensor forward(const Snapshot& snapshot, const ScaledLaplacian& laplacian) const = 0;
    virtual bool predicts_all_nodes() const = 0;

    /// Normalized outlet hydrograph, evaluated without recording a tape.
    std::vector<double> predict_outlet(const Snapshot& snapshot, const ScaledLaplacian& laplacian,
                                       std::size_t outlet) const;
};

void check_fingerprint(std::uint64_t expected, std::uint64_t actual, std::string_view what);

// ---------------------------------------------------------------------------

struct StreamGConvGruConfig {
    std::size_t hidden = 32;
    int cheb_order = 2;
    std::size_t layers = 1;  // stacked GConvGRU layers per subnetwork
    bool bias = true;
    std::size_t t_in = 36;
    std::size_t t_out = 36;

    nlohmann::json to_json() const;
    static StreamGConvGruConfig from_json(const nlohmann::json& j);
};

/// Sums the subnetworks' final hidden states. Kept separate so the
/// combination rule can be swapped in one place.
Tensor combine_subnetwork_states(std::span<const Tensor> states);

/// Three GConvGRU subnetworks (past discharge, past precipitation, future
/// precipitation) whose summed final states feed one linear head shared by
/// every node.
class StreamGConvGru final : public Forecaster {
public:
    static constexpr std::size_t kSubnetworks = 3;

    static StreamGConvGru create(const StreamGConvGruConfig& config, std::size_t nodes, std::uint64_t fingerprint,
                                 std::uint64_t seed);
    static StreamGConvGru zeros(const StreamGConvGruConfig& config, std::size_t nodes, std::uint64_t fingerprint);

    /// input: [N x 3 x t_in] -> [N x t_out]
    Tensor forward(const Tensor& input, const ScaledLaplacian& laplacian) const;
    /// Final hidden state of each subnetwork, [N x H] each.
    std::array<Tensor, kSubnetworks> subnetwork_states(const Tensor& input, const ScaledLaplacian& laplacian) const;
    Tensor apply_head(const Tensor& combined) const { return linear(head_, combined); }

    ModelKind kind() const override { return ModelKind::StreamGConvGru; }
    std::vector<NamedParameter> parameters() const override;
    nlohmann::json hyperparameters() const override;
    std::unique_ptr<Forecaster> clone() const override;
    std::uint64_t graph_fingerprint() const override { return fingerprint_; }
    std::size_t horizon() const override { return config_.t_out; }
    Tensor forward(const Snapshot& snapshot, const ScaledLaplacian& laplacian) const override;
    bool predicts_all_nodes() const override { return true; }

    const StreamGConvGruConfig& config() const { return config_; }
    std::size_t nodes() const { return nodes_; }

private:
    StreamGConvGruConfig config_;
    std::size_t nodes_ = 0;
    std::uint64_t fingerprint_ = 0;
    std::array<std::vector<GConvGruCell>, kSubnetworks> subnets_;
    Linear head_;
};

// ---------------------------------------------------------------------------

struct ConvBiGruConfig {
    std::size_t channels_in = 24;
    std::size_t conv_channels = 32;
    std::size_t kernel_size = 3;
    std::size_t hidden = 64;
    bool bias = true;
    std::size_t t_in = 36;
    std::size_t t_out = 36;

    nlohmann::json to_json() const;
    static ConvBiGruConfig from_json(const nlohmann::json& j);
};

/// Temporal conv over the stacked [3N x t_in] matrix, bidirectional GRU, then a
/// linear head on the concatenated final forward/backward states.
class ConvBiGru final : public Forecaster {
public:
    static ConvBiGru create(const ConvBiGruConfig& config, std::uint64_t fingerprint, std::uint64_t seed);

    /// flat_input: [channels_in x t_in] -> [t_out]
    Tensor forward(const Tensor& flat_input) const;

    ModelKind kind() const override { return ModelKind::ConvBiGru; }
    std::vector<NamedParameter> parameters() const override;
    nlohmann::json hyperparameters() const override;
    std::unique_ptr<Forecaster> clone() const override;
    std::uint64_t graph_fingerprint() const override { return fingerprint_; }
    std::size_t horizon() const override { return config_.t_out; }
    Tensor forward(const Snapshot& snapshot, const ScaledLaplacian& laplacian) const override;
    bool predicts_all_nodes() const override { return false; }

    const ConvBiGruConfig& config() const { return config_; }

private:
    ConvBiGruConfig config_;
    std::uint64_t fingerprint_ = 0;
    TemporalConv conv_;
    BidirectionalGru gru_;
    Linear head_;
};

// ---------------------------------------------------------------------------

/// Repeats the last observed value `horizon` times.
std::vector<double> persistence_forecast(std::span<const double> history, std::size_t horizon);

class PersistenceModel final : public Forecaster {
public:
    PersistenceModel(std::size_t outlet_index, std::size_t horizon, std::uint64_t fingerprint)
        : outlet_(outlet_index), horizon_(horizon), fingerprint_(fingerprint) {}

    ModelKind kind() const override { return ModelKind::Persistence; }
    std::vector<NamedParameter> parameters() const override { return {}; }
    nlohmann::json hyperparameters() const override;
    std::unique_ptr<Forecaster> clone() const override { return std::make_unique<PersistenceModel>(*this); }
    std::uint64_t graph_fingerprint() const override { return fingerprint_; }
    std::size_t horizon() const override { return horizon_; }
    Tensor forward(const Snapshot& snapshot, const ScaledLaplacian& laplacian) const override;
    bool predicts_all_nodes() const override { return false; }

private:
    std::size_t outlet_;
    std::size_t horizon_;
    std::uint64_t fingerprint_;
};

}  // namespace flowcast
