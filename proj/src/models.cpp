#include "flowcast/models.hpp"

#include <sstream>

namespace flowcast {

std::string_view model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::StreamGConvGru: return "stream_gconvgru";
        case ModelKind::ConvBiGru: return "conv_bigru";
        case ModelKind::Persistence: return "persistence";
    }
    return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
    if (name == "stream_gconvgru") return ModelKind::StreamGConvGru;
    if (name == "conv_bigru") return ModelKind::ConvBiGru;
    if (name == "persistence") return ModelKind::Persistence;
    throw std::invalid_argument("unknown model kind '" + std::string(name) +
                                "' (expected stream_gconvgru, conv_bigru or persistence)");
}

void check_fingerprint(std::uint64_t expected, std::uint64_t actual, std::string_view what) {
    if (expected != actual) {
        std::ostringstream os;
        os << what << ": graph fingerprint mismatch (expected " << std::hex << expected << ", got " << actual << ")";
        throw FingerprintMismatch(os.str());
    }
}

std::vector<double> Forecaster::predict_outlet(const Snapshot& snapshot, const ScaledLaplacian& laplacian,
                                               std::size_t outlet) const {
    NoTapeScope inference;
    const Tensor pred = forward(snapshot, laplacian);
    const std::size_t row = predicts_all_nodes() ? outlet : 0;
    const std::size_t width = pred.dim(1);
    const auto v = pred.values();
    return {v.begin() + static_cast<std::ptrdiff_t>(row * width),
            v.begin() + static_cast<std::ptrdiff_t>((row + 1) * width)};
}

// ---------------------------------------------------------------------------
// StreamGConvGRU
// ---------------------------------------------------------------------------

nlohmann::json StreamGConvGruConfig::to_json() const {
    return {{"hidden", hidden}, {"cheb_order", cheb_order}, {"layers", layers},
            {"bias", bias},     {"t_in", t_in},             {"t_out", t_out}};
}

StreamGConvGruConfig StreamGConvGruConfig::from_json(const nlohmann::json& j) {
    StreamGConvGruConfig c;
    c.hidden = j.value("hidden", c.hidden);
    c.cheb_order = j.value("cheb_order", c.cheb_order);
    c.layers = j.value("layers", c.layers);
    c.bias = j.value("bias", c.bias);
    c.t_in = j.value("t_in", c.t_in);
    c.t_out = j.value("t_out", c.t_out);
    return c;
}

Tensor combine_subnetwork_states(std::span<const Tensor> states) {
    if (states.empty()) throw std::invalid_argument("combine_subnetwork_states: no states");
    Tensor total = states[0];
    for (std::size_t i = 1; i < states.size(); ++i) total = add(total, states[i]);
    return total;
}

namespace {

void check_stream_config(const StreamGConvGruConfig& c, std::size_t nodes) {
    if (nodes == 0) throw std::invalid_argument("StreamGConvGru: graph has no nodes");
    if (c.hidden == 0 || c.layers == 0 || c.t_in == 0 || c.t_out == 0 || c.cheb_order < 1) {
        throw std::invalid_argument("StreamGConvGru: hidden, layers, t_in, t_out and cheb_order must be positive");
    }
}

}  // namespace

StreamGConvGru StreamGConvGru::create(const StreamGConvGruConfig& config, std::size_t nodes,
                                      std::uint64_t fingerprint, std::uint64_t seed) {
    check_stream_config(config, nodes);
    StreamGConvGru m;
    m.config_ = config;
    m.nodes_ = nodes;
    m.fingerprint_ = fingerprint;
    Rng rng(seed);
    for (auto& subnet : m.subnets_) {
        for (std::size_t layer = 0; layer < config.layers; ++layer) {
            const std::size_t in = layer == 0 ? 1 : config.hidden;
            subnet.push_back(GConvGruCell::create(in, config.hidden, config.cheb_order, config.bias, rng));
        }
    }
    m.head_ = Linear::create(config.hidden, config.t_out, rng);
    return m;
}

StreamGConvGru StreamGConvGru::zeros(const StreamGConvGruConfig& config, std::size_t nodes,
                                     std::uint64_t fingerprint) {
    check_stream_config(config, nodes);
    StreamGConvGru m;
    m.config_ = config;
    m.nodes_ = nodes;
    m.fingerprint_ = fingerprint;
    for (auto& subnet : m.subnets_) {
        for (std::size_t layer = 0; layer < config.layers; ++layer) {
            const std::size_t in = layer == 0 ? 1 : config.hidden;
            subnet.push_back(GConvGruCell::zeros(in, config.hidden, config.cheb_order, config.bias));
        }
    }
    m.head_.in_features = config.hidden;
    m.head_.out_features = config.t_out;
    m.head_.weight = Tensor::zeros({config.hidden, config.t_out}, true);
    m.head_.bias = Tensor::zeros({config.t_out}, true);
    return m;
}

std::array<Tensor, StreamGConvGru::kSubnetworks> StreamGConvGru::subnetwork_states(
    const Tensor& input, const ScaledLaplacian& laplacian) const {
    check_fingerprint(fingerprint_, laplacian.graph_fingerprint, "StreamGConvGru");
    const std::size_t t_in = config_.t_in;
    if (input.shape() != Shape{nodes_, kSubnetworks, t_in}) {
        throw ShapeError("StreamGConvGru: input must be " + shape_to_string({nodes_, kSubnetworks, t_in}) + ", got " +
                         shape_to_string(input.shape()));
    }
    const Tensor flat = reshape(input, {nodes_, kSubnetworks * t_in});
    std::array<Tensor, kSubnetworks> finals;
    for (std::size_t s = 0; s < kSubnetworks; ++s) {
        std::vector<Tensor> steps;
        steps.reserve(t_in);
        for (std::size_t t = 0; t < t_in; ++t) steps.push_back(slice(flat, 1, s * t_in + t, s * t_in + t + 1));
        const auto& layers = subnets_[s];
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const bool last = l + 1 == layers.size();
            auto out = gconv_gru_unroll(layers[l], steps, laplacian, std::nullopt, !last);
            if (last) {
                finals[s] = out.final_state;
            } else {
                steps.clear();
                for (std::size_t t = 0; t < t_in; ++t) {
                    steps.push_back(reshape(slice(out.hidden_states, 0, t, t + 1), {nodes_, config_.hidden}));
                }
            }
        }
    }
    return finals;
}

Tensor StreamGConvGru::forward(const Tensor& input, const ScaledLaplacian& laplacian) const {
    const auto states = subnetwork_states(input, laplacian);
    return apply_head(combine_subnetwork_states(states));
}

Tensor StreamGConvGru::forward(const Snapshot& snapshot, const ScaledLaplacian& laplacian) const {
    return forward(snapshot.input_tensor(), laplacian);
}

std::vector<NamedParameter> StreamGConvGru::parameters() const {
    static constexpr const char* kNames[kSubnetworks] = {"past_discharge", "past_precip", "future_precip"};
    std::vector<NamedParameter> out;
    for (std::size_t s = 0; s < kSubnetworks; ++s) {
        for (std::size_t l = 0; l < subnets_[s].size(); ++l) {
            subnets_[s][l].collect(out, std::string(kNames[s]) + ".layer" + std::to_string(l) + ".");
        }
    }
    head_.collect(out, "head.");
    return out;
}

nlohmann::json StreamGConvGru::hyperparameters() const {
    auto j = config_.to_json();
    j["nodes"] = nodes_;
    return j;
}

std::unique_ptr<Forecaster> StreamGConvGru::clone() const {
    auto m = std::make_unique<StreamGConvGru>(*this);
    for (auto& subnet : m->subnets_)
        for (auto& cell : subnet) cell = cell.cloned();
    m->head_ = head_.cloned();
    return m;
}

// ---------------------------------------------------------------------------
// ConvBiGRU
// ---------------------------------------------------------------------------

nlohmann::json ConvBiGruConfig::to_json() const {
    return {{"channels_in", channels_in}, {"conv_channels", conv_channels}, {"kernel_size", kernel_size},
            {"hidden", hidden},           {"bias", bias},                   {"t_in", t_in},
            {"t_out", t_out}};
}

ConvBiGruConfig ConvBiGruConfig::from_json(const nlohmann::json& j) {
    ConvBiGruConfig c;
    c.channels_in = j.value("channels_in", c.channels_in);
    c.conv_channels = j.value("conv_channels", c.conv_channels);
    c.kernel_size = j.value("kernel_size", c.kernel_size);
    c.hidden = j.value("hidden", c.hidden);
    c.bias = j.value("bias", c.bias);
    c.t_in = j.value("t_in", c.t_in);
    c.t_out = j.value("t_out", c.t_out);
    return c;
}

ConvBiGru ConvBiGru::create(const ConvBiGruConfig& config, std::uint64_t fingerprint, std::uint64_t seed) {
    if (config.channels_in == 0 || config.conv_channels == 0 || config.hidden == 0 || config.t_in == 0 ||
        config.t_out == 0) {
        throw std::invalid_argument("ConvBiGru: dimensions must be positive");
    }
    ConvBiGru m;
    m.config_ = config;
    m.fingerprint_ = fingerprint;
    Rng rng(seed);
    m.conv_ = TemporalConv::create(config.channels_in, config.conv_channels, config.kernel_size, rng);
    m.gru_ = BidirectionalGru::create(config.conv_channels, config.hidden, config.bias, rng);
    m.head_ = Linear::create(2 * config.hidden, config.t_out, rng);
    return m;
}

Tensor ConvBiGru::forward(const Tensor& flat_input) const {
    if (flat_input.shape() != Shape{config_.channels_in, config_.t_in}) {
        throw ShapeError("ConvBiGru: input must be " + shape_to_string({config_.channels_in, config_.t_in}) +
                         ", got " + shape_to_string(flat_input.shape()));
    }
    const Tensor features = transpose(temporal_conv(conv_, flat_input));  // [T x C]
    const auto bi = bidirectional_unroll(gru_, features);
    const Tensor out = linear(head_, concat({bi.final_forward, bi.final_backward}, 1));
    return reshape(out, {config_.t_out});
}

Tensor ConvBiGru::forward(const Snapshot& snapshot, const ScaledLaplacian& laplacian) const {
    check_fingerprint(fingerprint_, laplacian.graph_fingerprint, "ConvBiGru");
    return reshape(forward(snapshot.flat_input_tensor()), {1, config_.t_out});
}

std::vector<NamedParameter> ConvBiGru::parameters() const {
    std::vector<NamedParameter> out;
    conv_.collect(out, "conv.");
    gru_.collect(out, "bigru.");
    head_.collect(out, "head.");
    return out;
}

nlohmann::json ConvBiGru::hyperparameters() const { return config_.to_json(); }

std::unique_ptr<Forecaster> ConvBiGru::clone() const {
    auto m = std::make_unique<ConvBiGru>(*this);
    m->conv_ = conv_.cloned();
    m->gru_ = gru_.cloned();
    m->head_ = head_.cloned();
    return m;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

std::vector<double> persistence_forecast(std::span<const double> history, std::size_t horizon) {
    if (history.empty()) throw std::invalid_argument("persistence_forecast: empty history");
    if (horizon == 0) throw std::invalid_argument("persistence_forecast: horizon must be positive");
    return std::vector<double>(horizon, history.back());
}

nlohmann::json PersistenceModel::hyperparameters() const { return {{"t_out", horizon_}, {"outlet", outlet_}}; }

Tensor PersistenceModel::forward(const Snapshot& snapshot, const ScaledLaplacian& laplacian) const {
    check_fingerprint(fingerprint_, laplacian.graph_fingerprint, "Persistence");
    if (outlet_ >= snapshot.nodes) throw std::invalid_argument("Persistence: outlet index outside snapshot");
    const double* past = snapshot.input.data() + outlet_ * kSeriesPerNode * snapshot.t_in;
    return Tensor({1, horizon_}, persistence_forecast({past, snapshot.t_in}, horizon_));
}

}  // namespace flowcast
