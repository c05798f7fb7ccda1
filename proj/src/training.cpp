#include "flowcast/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "flowcast/random.hpp"

namespace flowcast {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
    if (clip_norm && !(*clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be > 0");
}

OptimizerState OptimizerState::for_parameters(std::span<const NamedParameter> params) {
    OptimizerState s;
    for (const auto& p : params) s.mean_square.emplace_back(p.tensor.numel(), 0.0);
    return s;
}

void rmsprop_step(std::span<const NamedParameter> params, std::span<const std::vector<double>> grads,
                  OptimizerState& state, const TrainConfig& config) {
    if (params.size() != grads.size() || params.size() != state.mean_square.size()) {
        throw std::invalid_argument("rmsprop_step: " + std::to_string(params.size()) + " parameters, " +
                                    std::to_string(grads.size()) + " gradients, " +
                                    std::to_string(state.mean_square.size()) + " accumulators");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i].tensor;
        const auto& g = grads[i];
        auto& v = state.mean_square[i];
        if (g.size() != p.numel() || v.size() != p.numel()) {
            throw std::invalid_argument("rmsprop_step: size mismatch for " + params[i].name);
        }
        auto w = p.mutable_values();
        for (std::size_t j = 0; j < w.size(); ++j) {
            v[j] = config.alpha * v[j] + (1.0 - config.alpha) * g[j] * g[j];
            w[j] -= config.learning_rate * g[j] / (std::sqrt(v[j]) + config.epsilon);
        }
    }
    ++state.step;
}

Tensor masked_outlet_loss(const Tensor& pred, const Tensor& target, std::size_t outlet) {
    if (pred.shape() != target.shape() || pred.rank() != 2) {
        throw ShapeError("masked_outlet_loss: expected matching [N x T] tensors, got " +
                         shape_to_string(pred.shape()) + " and " + shape_to_string(target.shape()));
    }
    if (outlet >= pred.dim(0)) {
        throw std::invalid_argument("masked_outlet_loss: outlet " + std::to_string(outlet) + " outside " +
                                    std::to_string(pred.dim(0)) + " rows");
    }
    return l1_loss(slice(pred, 0, outlet, outlet + 1), slice(target, 0, outlet, outlet + 1));
}

Tensor snapshot_loss(const Forecaster& model, const Snapshot& snapshot, const ScaledLaplacian& laplacian,
                     std::size_t outlet) {
    const Tensor pred = model.forward(snapshot, laplacian);
    if (model.predicts_all_nodes()) return masked_outlet_loss(pred, snapshot.target_tensor(), outlet);
    return l1_loss(pred, Tensor({1, snapshot.t_out}, snapshot.outlet_target(outlet)));
}

BatchGradient batch_gradient(const Forecaster& model, std::span<const Snapshot* const> batch,
                             const ScaledLaplacian& laplacian, std::size_t outlet) {
    if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
    const auto params = model.parameters();
    BatchGradient out;
    for (const auto& p : params) out.grads.emplace_back(p.tensor.numel(), 0.0);
    for (const Snapshot* s : batch) {
        for (auto p : params) p.tensor.zero_grad();
        Tape tape;
        Tape::Scope scope(tape);
        const Tensor loss = snapshot_loss(model, *s, laplacian, outlet);
        tape.backward(loss);
        out.loss += loss.item();
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto g = params[i].tensor.grad_span();
            if (g.empty()) continue;
            auto& acc = out.grads[i];
            for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g[j];
        }
    }
    for (auto p : params) p.tensor.zero_grad();
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.loss *= inv;
    for (auto& g : out.grads)
        for (auto& x : g) x *= inv;
    return out;
}

double evaluate_loss(const Forecaster& model, std::span<const Snapshot> snapshots, const ScaledLaplacian& laplacian,
                     std::size_t outlet) {
    if (snapshots.empty()) throw std::invalid_argument("evaluate_loss: no snapshots");
    NoTapeScope inference;
    double total = 0.0;
    for (const auto& s : snapshots) total += snapshot_loss(model, s, laplacian, outlet).item();
    return total / static_cast<double>(snapshots.size());
}

std::vector<std::size_t> epoch_permutation(std::size_t count, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(seed, epoch));
    rng.shuffle(order);
    return order;
}

std::unique_ptr<Forecaster> create_model(ModelKind kind, const nlohmann::json& hyperparameters,
                                         const SensorGraph& graph, std::size_t t_in, std::size_t t_out,
                                         std::uint64_t seed) {
    const nlohmann::json hp = hyperparameters.is_object() ? hyperparameters : nlohmann::json::object();
    switch (kind) {
        case ModelKind::StreamGConvGru: {
            auto c = StreamGConvGruConfig::from_json(hp);
            c.t_in = t_in;
            c.t_out = t_out;
            return std::make_unique<StreamGConvGru>(
                StreamGConvGru::create(c, graph.size(), graph.fingerprint(), seed));
        }
        case ModelKind::ConvBiGru: {
            auto c = ConvBiGruConfig::from_json(hp);
            c.channels_in = kSeriesPerNode * graph.size();
            c.t_in = t_in;
            c.t_out = t_out;
            return std::make_unique<ConvBiGru>(ConvBiGru::create(c, graph.fingerprint(), seed));
        }
        case ModelKind::Persistence:
            return std::make_unique<PersistenceModel>(graph.outlet_index(), t_out, graph.fingerprint());
    }
    throw std::invalid_argument("create_model: unknown model kind");
}

namespace {

void clip_gradients(std::vector<std::vector<double>>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads)
        for (double x : g) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double factor = max_norm / norm;
    for (auto& g : grads)
        for (auto& x : g) x *= factor;
}

std::string format_loss(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

TrainResult train(Forecaster& model, std::span<const Snapshot> train_set, std::span<const Snapshot> validation_set,
                  const ScaledLaplacian& laplacian, std::size_t outlet, const NormalizationConstants& normalization,
                  const TrainConfig& config, std::ostream* log) {
    config.validate();
    if (train_set.empty()) throw TrainingError("train: training split is empty");
    if (validation_set.empty()) throw TrainingError("train: validation split is empty");
    const auto params = model.parameters();
    if (params.empty()) throw TrainingError("train: model " + std::string(model_kind_name(model.kind())) +
                                            " has no trainable parameters");
    const std::size_t nodes = train_set.front().nodes;

    OptimizerState state = OptimizerState::for_parameters(params);
    TrainResult result;
    std::optional<double> best_loss;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto order = epoch_permutation(train_set.size(), config.seed, epoch);
        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<const Snapshot*> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
            auto bg = batch_gradient(model, batch, laplacian, outlet);
            if (!std::isfinite(bg.loss)) {
                throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch_index));
            }
            if (config.clip_norm) clip_gradients(bg.grads, *config.clip_norm);
            rmsprop_step(params, bg.grads, state, config);
            epoch_loss += bg.loss * static_cast<double>(batch.size());
        }
        epoch_loss /= static_cast<double>(train_set.size());

        const double val = evaluate_loss(model, validation_set, laplacian, outlet);
        if (!std::isfinite(val)) throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
        EpochRecord rec{epoch, epoch_loss, val, !best_loss || val < *best_loss};
        if (rec.saved) {
            best_loss = val;
            result.best_epoch = epoch;
            result.best = make_checkpoint(model, normalization, nodes, outlet, {config.seed, epoch, val});
            if (config.checkpoint_path) save_checkpoint(result.best, *config.checkpoint_path);
        }
        result.history.push_back(rec);
        if (log) {
            *log << "epoch," << epoch << ",train_loss," << format_loss(epoch_loss) << ",val_loss," << format_loss(val)
                 << ",saved," << (rec.saved ? "true" : "false") << '\n';
            log->flush();
        }
    }
    if (!best_loss) throw TrainingError("train: max_epochs is 0, nothing was trained");
    return result;
}

}  // namespace flowcast
