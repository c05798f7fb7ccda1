#include "flowcast/cli.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>

#include <CLI11.hpp>

#include "flowcast/checkpoint.hpp"
#include "flowcast/dataset.hpp"
#include "flowcast/evaluation.hpp"
#include "flowcast/synthetic.hpp"
#include "flowcast/training.hpp"

namespace flowcast {

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j = {{"series", series},
                        {"graph", graph},
                        {"cache", cache},
                        {"checkpoint", checkpoint},
                        {"report", report},
                        {"reports", reports},
                        {"svg", svg},
                        {"output", output},
                        {"log", log},
                        {"sub_hourly", sub_hourly},
                        {"inverse_distance", inverse_distance},
                        {"t_in", t_in},
                        {"t_out", t_out},
                        {"train_start", train_start},
                        {"validation_start", validation_start},
                        {"test_start", test_start},
                        {"test_end", test_end},
                        {"model", model},
                        {"hyperparameters", hyperparameters},
                        {"seed", seed},
                        {"learning_rate", learning_rate},
                        {"alpha", alpha},
                        {"epsilon", epsilon},
                        {"batch_size", batch_size},
                        {"max_epochs", max_epochs},
                        {"split", split},
                        {"anchor", anchor},
                        {"title", title},
                        {"synthetic", synthetic}};
    j["clip_norm"] = clip_norm ? nlohmann::json(*clip_norm) : nlohmann::json(nullptr);
    return j;
}

void RunConfig::merge_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    const auto known = to_json();
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw std::invalid_argument("unknown config key '" + key + "'");
    }
    auto take = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    take("series", series);
    take("graph", graph);
    take("cache", cache);
    take("checkpoint", checkpoint);
    take("report", report);
    take("reports", reports);
    take("svg", svg);
    take("output", output);
    take("log", log);
    take("sub_hourly", sub_hourly);
    take("inverse_distance", inverse_distance);
    take("t_in", t_in);
    take("t_out", t_out);
    take("train_start", train_start);
    take("validation_start", validation_start);
    take("test_start", test_start);
    take("test_end", test_end);
    take("model", model);
    take("seed", seed);
    take("learning_rate", learning_rate);
    take("alpha", alpha);
    take("epsilon", epsilon);
    take("batch_size", batch_size);
    take("max_epochs", max_epochs);
    take("split", split);
    take("anchor", anchor);
    take("title", title);
    if (j.contains("hyperparameters")) hyperparameters = j.at("hyperparameters");
    if (j.contains("synthetic")) synthetic = j.at("synthetic");
    if (j.contains("clip_norm")) {
        const auto& c = j.at("clip_norm");
        clip_norm = c.is_null() ? std::nullopt : std::optional<double>(c.get<double>());
    }
}

namespace {

class CliError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void require(const std::string& value, const char* flag, const char* command) {
    if (value.empty()) throw CliError(std::string(command) + ": " + flag + " is required");
}

void require_file(const std::string& path, const char* what) {
    if (!std::filesystem::exists(path)) throw CliError(std::string(what) + " not found: " + path);
}

SyntheticConfig synthetic_config(const nlohmann::json& j) {
    SyntheticConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "nodes") c.nodes = value.get<std::size_t>();
        else if (key == "topology_seed") c.topology_seed = value.get<std::uint64_t>();
        else if (key == "event_probability") c.event_probability = value.get<double>();
        else if (key == "intensity_min") c.intensity_min = value.get<double>();
        else if (key == "intensity_max") c.intensity_max = value.get<double>();
        else if (key == "storm_min_hours") c.storm_min_hours = value.get<std::size_t>();
        else if (key == "storm_max_hours") c.storm_max_hours = value.get<std::size_t>();
        else if (key == "storage_min") c.storage_min = value.get<double>();
        else if (key == "storage_max") c.storage_max = value.get<double>();
        else if (key == "delay_min") c.delay_min = value.get<std::size_t>();
        else if (key == "delay_max") c.delay_max = value.get<std::size_t>();
        else if (key == "km_per_hour") c.km_per_hour = value.get<double>();
        else if (key == "hours") c.hours = value.get<std::size_t>();
        else if (key == "noise") c.noise = value.get<double>();
        else if (key == "start") c.start = parse_timestamp(value.get<std::string>());
        else throw std::invalid_argument("unknown synthetic config key '" + key + "'");
    }
    return c;
}

struct LoadedData {
    SensorGraph graph;
    ScaledLaplacian laplacian;
    SnapshotCache cache;
};

LoadedData load_dataset(const RunConfig& cfg, const char* command) {
    require(cfg.cache, "--cache", command);
    require(cfg.graph, "--graph", command);
    require_file(cfg.cache, "snapshot cache");
    require_file(cfg.graph, "graph file");
    LoadedData d;
    d.graph = load_graph(cfg.graph, {cfg.inverse_distance});
    d.cache = read_snapshot_cache(cfg.cache);
    check_fingerprint(d.cache.graph_fingerprint, d.graph.fingerprint(), "graph " + cfg.graph + " vs cache " + cfg.cache);
    d.laplacian = scaled_laplacian(d.graph);
    return d;
}

std::unique_ptr<Forecaster> load_model(const RunConfig& cfg, const LoadedData& d, const char* command) {
    const ModelKind kind = parse_model_kind(cfg.model);
    if (kind == ModelKind::Persistence) {
        return std::make_unique<PersistenceModel>(d.cache.outlet_index, d.cache.t_out, d.graph.fingerprint());
    }
    require(cfg.checkpoint, "--checkpoint", command);
    require_file(cfg.checkpoint, "checkpoint");
    const auto ckpt = load_checkpoint(cfg.checkpoint, d.graph.fingerprint());
    if (ckpt.kind != kind) {
        throw CliError(std::string(command) + ": checkpoint holds a " + std::string(model_kind_name(ckpt.kind)) +
                       " model, --model asked for " + cfg.model);
    }
    if (!(ckpt.normalization == d.cache.normalization)) {
        throw CliError(std::string(command) + ": checkpoint normalization constants differ from the cache's");
    }
    auto model = restore_model(ckpt);
    if (model->horizon() != d.cache.t_out) throw CliError(std::string(command) + ": checkpoint horizon differs from cache");
    return model;
}

int cmd_generate(const RunConfig& cfg, std::ostream& out) {
    require(cfg.series, "--series", "generate-synthetic");
    require(cfg.graph, "--graph", "generate-synthetic");
    const auto sc = synthetic_config(cfg.synthetic);
    const auto ds = generate(sc, cfg.seed);
    ds.write(cfg.series, cfg.graph);
    out << "nodes," << ds.graph.size() << "\nhours," << sc.hours << "\noutlet," << ds.graph.nodes()[ds.graph.outlet_index()].sensor_id
        << '\n';
    return 0;
}

int cmd_build(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    require(cfg.series, "--series", "build-dataset");
    require(cfg.graph, "--graph", "build-dataset");
    require(cfg.cache, "--cache", "build-dataset");
    require_file(cfg.series, "series file");
    require_file(cfg.graph, "graph file");
    const SensorGraph graph = load_graph(cfg.graph, {cfg.inverse_distance});
    std::map<std::string, SensorSeries> series;
    if (cfg.sub_hourly) {
        for (const auto& [id, raw] : load_raw_series_file(cfg.series)) series[id] = aggregate_hourly(raw);
    } else {
        series = load_series_file(cfg.series);
    }
    const auto& outlet_id = graph.nodes()[graph.outlet_index()].sensor_id;
    auto it = series.find(outlet_id);
    if (it == series.end() || it->second.size() == 0) throw DataError("no observations for outlet sensor " + outlet_id);
    const auto& outlet = it->second;

    SplitBoundaries b;
    const bool explicit_split =
        !cfg.train_start.empty() || !cfg.validation_start.empty() || !cfg.test_start.empty() || !cfg.test_end.empty();
    if (explicit_split) {
        if (cfg.train_start.empty() || cfg.validation_start.empty() || cfg.test_start.empty() || cfg.test_end.empty()) {
            throw CliError("build-dataset: give all four split boundaries or none");
        }
        b = {parse_timestamp(cfg.train_start), parse_timestamp(cfg.validation_start), parse_timestamp(cfg.test_start),
             parse_timestamp(cfg.test_end)};
    } else {
        b = fractional_boundaries(outlet.timestamps.front(), outlet.timestamps.back() + kHour);
    }
    b.validate();

    SnapshotCache cache;
    cache.graph_fingerprint = graph.fingerprint();
    cache.nodes = graph.size();
    cache.outlet_index = graph.outlet_index();
    cache.t_in = cfg.t_in;
    cache.t_out = cfg.t_out;
    cache.normalization = compute_normalization(outlet, b.train());
    cache.boundaries = b;
    cache.splits = split_snapshots(build_snapshots(series, graph, cfg.t_in, cfg.t_out, cache.normalization), b);
    write_snapshot_cache(cfg.cache, cache);
    if (cache.splits.dropped > 0) err << "warning: " << cache.splits.dropped << " snapshots fell outside every split\n";
    out << "train," << cache.splits.train.snapshots.size() << "\nvalidation," << cache.splits.validation.snapshots.size()
        << "\ntest," << cache.splits.test.snapshots.size() << "\ndropped," << cache.splits.dropped << '\n';
    return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
    require(cfg.checkpoint, "--checkpoint", "train");
    const auto d = load_dataset(cfg, "train");
    const ModelKind kind = parse_model_kind(cfg.model);
    if (kind == ModelKind::Persistence) throw CliError("train: persistence has no parameters to train");
    auto model = create_model(kind, cfg.hyperparameters, d.graph, d.cache.t_in, d.cache.t_out, cfg.seed);

    TrainConfig tc;
    tc.learning_rate = cfg.learning_rate;
    tc.alpha = cfg.alpha;
    tc.epsilon = cfg.epsilon;
    tc.batch_size = cfg.batch_size;
    tc.max_epochs = cfg.max_epochs;
    tc.seed = cfg.seed;
    tc.clip_norm = cfg.clip_norm;
    tc.checkpoint_path = cfg.checkpoint;

    std::ofstream log_file;
    std::ostream* log = &out;
    if (!cfg.log.empty()) {
        log_file.open(cfg.log, std::ios::trunc);
        if (!log_file) throw CliError("train: cannot write log " + cfg.log);
        log = &log_file;
    }
    const auto result = train(*model, d.cache.splits.train.snapshots, d.cache.splits.validation.snapshots, d.laplacian,
                              d.cache.outlet_index, d.cache.normalization, tc, log);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", result.best.training.validation_loss);
    out << "best_epoch," << result.best_epoch << ",val_loss," << buf << ",checkpoint," << cfg.checkpoint << '\n';
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
    const auto d = load_dataset(cfg, "evaluate");
    const auto model = load_model(cfg, d, "evaluate");
    const auto& split = d.cache.splits.by_name(cfg.split);
    auto report = per_lead_evaluation(*model, split, d.laplacian, d.cache.outlet_index, d.cache.normalization);
    if (cfg.report.empty()) {
        out << report_csv(report);
    } else {
        write_report_csv(report, cfg.report);
        const auto head = report.mean_nse(1, 5), tail = report.mean_nse(6, report.leads.size());
        out << "model," << report.model << ",split," << report.split << ",samples,"
            << (report.leads.empty() ? 0 : report.leads.front().samples);
        out << ",mean_nse_1_5," << (head ? std::to_string(*head) : "") << ",mean_nse_6_" << report.leads.size() << ','
            << (tail ? std::to_string(*tail) : "") << '\n';
    }
    return 0;
}

int cmd_predict(const RunConfig& cfg, std::ostream& out) {
    require(cfg.anchor, "--anchor", "predict");
    const auto d = load_dataset(cfg, "predict");
    const auto model = load_model(cfg, d, "predict");
    const Timestamp anchor = parse_timestamp(cfg.anchor);
    const Snapshot* s = d.cache.find(anchor);
    if (!s) throw CliError("predict: no valid snapshot at anchor " + format_timestamp(anchor));
    const auto pred = model->predict_outlet(*s, d.laplacian, d.cache.outlet_index);

    std::ofstream file;
    std::ostream* dst = &out;
    if (!cfg.output.empty()) {
        file.open(cfg.output, std::ios::trunc);
        if (!file) throw CliError("predict: cannot write " + cfg.output);
        dst = &file;
    }
    *dst << "timestamp,lead_hour,streamflow_cfs\n";
    char buf[40];
    for (std::size_t k = 0; k < pred.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.10g",
                      denormalize(pred[k], d.cache.normalization.q_min, d.cache.normalization.q_max));
        *dst << format_timestamp(anchor + static_cast<Timestamp>(k + 1) * kHour) << ',' << k + 1 << ',' << buf << '\n';
    }
    return 0;
}

int cmd_plot(const RunConfig& cfg, std::ostream& out) {
    if (cfg.reports.empty()) throw CliError("plot: at least one --report is required");
    require(cfg.svg, "--svg", "plot");
    std::vector<NseReport> reports;
    for (const auto& entry : cfg.reports) {
        // "name=path" labels a series; a bare path uses the file stem.
        const auto eq = entry.find('=');
        const std::string path = eq == std::string::npos ? entry : entry.substr(eq + 1);
        require_file(path, "report");
        reports.push_back(read_report_csv(path, eq == std::string::npos ? "" : entry.substr(0, eq)));
    }
    write_svg(reports, cfg.svg, cfg.title);
    out << "svg," << cfg.svg << ",series," << reports.size() << '\n';
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, out, err);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"flowcast: graph-temporal streamflow forecasting"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    // Flag values land in a JSON overlay so only flags actually given
    // override the config file.
    nlohmann::json overlay = nlohmann::json::object();
    std::string config_path;
    std::vector<std::pair<CLI::Option*, std::function<void()>>> given;

    struct Holders {
        std::string s_series, s_graph, s_cache, s_model, s_checkpoint, s_report, s_svg, s_anchor, s_output, s_log,
            s_split, s_title, s_train_start, s_validation_start, s_test_start, s_test_end;
        std::vector<std::string> v_reports;
        std::uint64_t seed = 0;
        std::size_t t_in = 0, t_out = 0, batch = 0, epochs = 0, hidden = 0, nodes = 0, hours = 0;
        int cheb = 0;
        double lr = 0, clip = 0, noise = 0;
        bool sub_hourly = false, raw_distance = false;
    } h;

    auto add_common = [&](CLI::App* sub) { sub->add_option("--config", config_path, "JSON config file"); };
    auto opt = [&](CLI::App* sub, const std::string& flag, auto& holder, const std::string& key,
                   const std::string& help) {
        given.emplace_back(sub->add_option(flag, holder, help), [&overlay, &holder, key] { overlay[key] = holder; });
    };
    auto syn = [&](CLI::App* sub, const std::string& flag, auto& holder, const std::string& key,
                   const std::string& help) {
        given.emplace_back(sub->add_option(flag, holder, help),
                           [&overlay, &holder, key] { overlay["synthetic"][key] = holder; });
    };
    auto hyper = [&](CLI::App* sub, const std::string& flag, auto& holder, const std::string& key,
                     const std::string& help) {
        given.emplace_back(sub->add_option(flag, holder, help),
                           [&overlay, &holder, key] { overlay["hyperparameters"][key] = holder; });
    };

    auto* gen = app.add_subcommand("generate-synthetic", "write a synthetic series file and graph file");
    add_common(gen);
    opt(gen, "--series", h.s_series, "series", "output series CSV");
    opt(gen, "--graph", h.s_graph, "graph", "output graph CSV");
    opt(gen, "--seed", h.seed, "seed", "rain and noise seed");
    syn(gen, "--nodes", h.nodes, "nodes", "gauge count");
    syn(gen, "--hours", h.hours, "hours", "series length in hours");
    syn(gen, "--noise", h.noise, "noise", "multiplicative discharge noise");

    auto* build = app.add_subcommand("build-dataset", "build and split snapshots into a cache file");
    add_common(build);
    opt(build, "--series", h.s_series, "series", "hourly (or, with --sub-hourly, 15-minute) series CSV");
    opt(build, "--graph", h.s_graph, "graph", "graph CSV");
    opt(build, "--cache", h.s_cache, "cache", "output snapshot cache");
    opt(build, "--t-in", h.t_in, "t_in", "input window in hours");
    opt(build, "--t-out", h.t_out, "t_out", "forecast horizon in hours");
    opt(build, "--train-start", h.s_train_start, "train_start", "ISO-8601");
    opt(build, "--validation-start", h.s_validation_start, "validation_start", "ISO-8601");
    opt(build, "--test-start", h.s_test_start, "test_start", "ISO-8601");
    opt(build, "--test-end", h.s_test_end, "test_end", "ISO-8601, exclusive");
    given.emplace_back(build->add_flag("--sub-hourly", h.sub_hourly, "average sub-hourly readings to hours first"),
                       [&] { overlay["sub_hourly"] = true; });
    given.emplace_back(build->add_flag("--raw-distance", h.raw_distance, "use distance_km as the edge weight"),
                       [&] { overlay["inverse_distance"] = false; });

    auto add_data = [&](CLI::App* sub) {
        opt(sub, "--cache", h.s_cache, "cache", "snapshot cache");
        opt(sub, "--graph", h.s_graph, "graph", "graph CSV");
        given.emplace_back(sub->add_flag("--raw-distance", h.raw_distance, "graph uses distance_km as the edge weight"),
                           [&] { overlay["inverse_distance"] = false; });
    };

    auto* tr = app.add_subcommand("train", "train a model and keep the best validation checkpoint");
    add_common(tr);
    add_data(tr);
    opt(tr, "--model", h.s_model, "model", "stream_gconvgru or conv_bigru");
    opt(tr, "--checkpoint", h.s_checkpoint, "checkpoint", "output checkpoint");
    opt(tr, "--seed", h.seed, "seed", "initialization and shuffling seed");
    opt(tr, "--epochs", h.epochs, "max_epochs", "epochs");
    opt(tr, "--lr", h.lr, "learning_rate", "RMSprop learning rate");
    opt(tr, "--batch-size", h.batch, "batch_size", "snapshots per update");
    opt(tr, "--clip-norm", h.clip, "clip_norm", "clip the batch gradient to this global L2 norm");
    opt(tr, "--log", h.s_log, "log", "per-epoch log file (default stdout)");
    hyper(tr, "--hidden", h.hidden, "hidden", "hidden width");
    hyper(tr, "--cheb-order", h.cheb, "cheb_order", "Chebyshev order K");

    auto* ev = app.add_subcommand("evaluate", "per-lead NSE report");
    add_common(ev);
    add_data(ev);
    opt(ev, "--model", h.s_model, "model", "stream_gconvgru, conv_bigru or persistence");
    opt(ev, "--checkpoint", h.s_checkpoint, "checkpoint", "trained checkpoint (not needed for persistence)");
    opt(ev, "--split", h.s_split, "split", "train, validation or test");
    opt(ev, "--report", h.s_report, "report", "output CSV (default stdout)");

    auto* pr = app.add_subcommand("predict", "outlet hydrograph for one anchor hour");
    add_common(pr);
    add_data(pr);
    opt(pr, "--model", h.s_model, "model", "stream_gconvgru, conv_bigru or persistence");
    opt(pr, "--checkpoint", h.s_checkpoint, "checkpoint", "trained checkpoint");
    opt(pr, "--anchor", h.s_anchor, "anchor", "ISO-8601 anchor hour");
    opt(pr, "--output", h.s_output, "output", "output CSV (default stdout)");

    auto* pl = app.add_subcommand("plot", "merge NSE reports into one SVG chart");
    add_common(pl);
    opt(pl, "--report", h.v_reports, "reports", "report CSV, optionally name=path; repeatable");
    opt(pl, "--svg", h.s_svg, "svg", "output SVG");
    opt(pl, "--title", h.s_title, "title", "chart title");

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }
    for (auto& [option, apply] : given)
        if (option->count() > 0) apply();

    try {
        RunConfig cfg;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw CliError("config file not found: " + config_path);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(in);
            } catch (const nlohmann::json::parse_error& e) {
                throw CliError("config " + config_path + ": " + e.what());
            }
            cfg.merge_json(j);
        }
        // Nested objects merge key by key so a single flag does not wipe the file's values.
        for (const char* nested : {"hyperparameters", "synthetic"}) {
            if (!overlay.contains(nested)) continue;
            nlohmann::json merged = nested == std::string("hyperparameters") ? cfg.hyperparameters : cfg.synthetic;
            merged.update(overlay[nested]);
            overlay[nested] = merged;
        }
        cfg.merge_json(overlay);

        CLI::App* sub = app.get_subcommands().front();
        err << "resolved config (" << sub->get_name() << "): " << cfg.to_json().dump() << '\n';

        if (sub == gen) return cmd_generate(cfg, out);
        if (sub == build) return cmd_build(cfg, out, err);
        if (sub == tr) return cmd_train(cfg, out);
        if (sub == ev) return cmd_evaluate(cfg, out);
        if (sub == pr) return cmd_predict(cfg, out);
        if (sub == pl) return cmd_plot(cfg, out);
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace flowcast
