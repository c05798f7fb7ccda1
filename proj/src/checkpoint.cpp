#include "flowcast/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "flowcast/binary_io.hpp"

namespace flowcast {

namespace {

constexpr char kMagic[] = "FCCKPT01";

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used, 16);
    if (used != s.size()) throw IntegrityError("malformed hex value '" + s + "' in checkpoint header");
    return v;
}

}  // namespace

ModelCheckpoint make_checkpoint(const Forecaster& model, const NormalizationConstants& normalization,
                                std::size_t nodes, std::size_t outlet_index, const TrainingMetadata& training) {
    ModelCheckpoint c;
    c.kind = model.kind();
    c.hyperparameters = model.hyperparameters();
    for (const auto& p : model.parameters()) c.parameters.push_back({p.name, p.tensor.clone()});
    c.normalization = normalization;
    c.graph_fingerprint = model.graph_fingerprint();
    c.nodes = nodes;
    c.outlet_index = outlet_index;
    c.training = training;
    return c;
}

std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& c) {
    nlohmann::json header;
    header["format_version"] = c.format_version;
    header["model_kind"] = model_kind_name(c.kind);
    header["hyperparameters"] = c.hyperparameters;
    header["normalization"] = {{"q_min", c.normalization.q_min},
                               {"q_max", c.normalization.q_max},
                               {"p_min", c.normalization.p_min},
                               {"p_max", c.normalization.p_max}};
    header["graph_fingerprint"] = hex64(c.graph_fingerprint);
    header["nodes"] = c.nodes;
    header["outlet_index"] = c.outlet_index;
    header["training"] = {{"seed", hex64(c.training.seed)},
                          {"epoch", c.training.epoch},
                          {"validation_loss", c.training.validation_loss}};
    auto& plist = header["parameters"] = nlohmann::json::array();
    for (const auto& p : c.parameters) plist.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});

    const std::string text = header.dump(2);
    ByteWriter w;
    w.raw({reinterpret_cast<const std::uint8_t*>(kMagic), 8});
    w.str(text);
    w.u64(c.parameters.size());
    for (const auto& p : c.parameters) {
        w.str(p.name);
        w.u64(p.tensor.rank());
        for (auto d : p.tensor.shape()) w.u64(d);
        w.f64s(p.tensor.values());
    }
    return w.bytes();
}

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path) {
    write_checksummed(path, encode_checkpoint(checkpoint));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_fingerprint) {
    const auto bytes = read_checksummed(path);
    ByteReader r(bytes);
    const auto magic = r.raw(8);
    if (!std::equal(magic.begin(), magic.end(), kMagic)) throw IntegrityError(path.string() + ": not a checkpoint");

    ModelCheckpoint c;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.str());
        c.format_version = header.at("format_version").get<std::uint32_t>();
        if (c.format_version != ModelCheckpoint::kFormatVersion) {
            throw IntegrityError(path.string() + ": unsupported checkpoint format version " +
                                 std::to_string(c.format_version));
        }
        c.kind = parse_model_kind(header.at("model_kind").get<std::string>());
        c.hyperparameters = header.at("hyperparameters");
        const auto& nj = header.at("normalization");
        c.normalization = {nj.at("q_min").get<double>(), nj.at("q_max").get<double>(), nj.at("p_min").get<double>(),
                           nj.at("p_max").get<double>()};
        c.graph_fingerprint = parse_hex64(header.at("graph_fingerprint").get<std::string>());
        c.nodes = header.at("nodes").get<std::size_t>();
        c.outlet_index = header.at("outlet_index").get<std::size_t>();
        const auto& tj = header.at("training");
        c.training.seed = parse_hex64(tj.at("seed").get<std::string>());
        c.training.epoch = tj.at("epoch").get<std::size_t>();
        c.training.validation_loss = tj.at("validation_loss").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(path.string() + ": malformed checkpoint header: " + e.what());
    }

    const auto count = r.u64();
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const auto rank = r.u64();
        if (rank > 8) throw IntegrityError(path.string() + ": implausible tensor rank for " + name);
        Shape shape(rank);
        for (auto& d : shape) d = r.u64();
        auto values = r.f64s(shape_numel(shape));
        c.parameters.push_back({std::move(name), Tensor(std::move(shape), std::move(values), true)});
    }
    if (!r.at_end()) throw IntegrityError(path.string() + ": trailing bytes after parameters");
    if (expected_fingerprint) check_fingerprint(*expected_fingerprint, c.graph_fingerprint, path.string());
    return c;
}

std::unique_ptr<Forecaster> restore_model(const ModelCheckpoint& c) {
    std::unique_ptr<Forecaster> model;
    switch (c.kind) {
        case ModelKind::StreamGConvGru:
            model = std::make_unique<StreamGConvGru>(StreamGConvGru::zeros(
                StreamGConvGruConfig::from_json(c.hyperparameters), c.nodes, c.graph_fingerprint));
            break;
        case ModelKind::ConvBiGru:
            model = std::make_unique<ConvBiGru>(
                ConvBiGru::create(ConvBiGruConfig::from_json(c.hyperparameters), c.graph_fingerprint, 0));
            break;
        case ModelKind::Persistence:
            model = std::make_unique<PersistenceModel>(c.outlet_index, c.hyperparameters.value("t_out", 36),
                                                       c.graph_fingerprint);
            break;
    }
    std::map<std::string, const Tensor*> stored;
    for (const auto& p : c.parameters) stored[p.name] = &p.tensor;
    const auto params = model->parameters();
    if (params.size() != stored.size()) {
        throw IntegrityError("checkpoint holds " + std::to_string(stored.size()) + " tensors, model expects " +
                             std::to_string(params.size()));
    }
    for (auto p : params) {
        auto it = stored.find(p.name);
        if (it == stored.end()) throw IntegrityError("checkpoint is missing parameter " + p.name);
        if (it->second->shape() != p.tensor.shape()) {
            throw IntegrityError("parameter " + p.name + " has shape " + shape_to_string(it->second->shape()) +
                                 ", model expects " + shape_to_string(p.tensor.shape()));
        }
        auto dst = p.tensor.mutable_values();
        std::copy(it->second->values().begin(), it->second->values().end(), dst.begin());
    }
    return model;
}

}  // namespace flowcast
