#include "flowcast/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "flowcast/binary_io.hpp"

namespace flowcast {

namespace {

constexpr char kSeriesHeader[] = "timestamp,sensor_id,streamflow_cfs,precip_mm";
constexpr char kNodeHeader[] = "node_index,sensor_id,is_outlet";
constexpr char kEdgeHeader[] = "src_index,dst_index,distance_km";
constexpr char kCacheMagic[] = "FCSNAP01";
constexpr std::uint32_t kCacheVersion = 1;

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line) + ": ";
}

template <class Int>
bool parse_int(std::string_view s, Int& out) {
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

bool parse_double(std::string_view s, double& out) {
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::optional<double> parse_measurement(std::string_view field, const std::filesystem::path& path,
                                        std::size_t line, const char* column) {
    if (field.empty()) return std::nullopt;
    double v = 0.0;
    if (!parse_double(field, v)) {
        throw DataError(where(path, line) + "malformed " + column + " value '" + std::string(field) + "'");
    }
    if (v < 0.0) throw DataError(where(path, line) + column + " must be non-negative, got " + std::string(field));
    return v;
}

std::ifstream open_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

std::string format_value(const std::optional<double>& v) {
    if (!v) return {};
    std::ostringstream os;
    os << std::setprecision(17) << *v;
    return os.str();
}

struct ParsedRow {
    Timestamp ts;
    std::string sensor;
    std::optional<double> q, p;
    std::size_t line;
};

std::vector<ParsedRow> read_series_rows(const std::filesystem::path& path) {
    auto in = open_text(path);
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    std::vector<ParsedRow> rows;
    while (std::getline(in, line)) {
        ++lineno;
        const auto text = trim(line);
        if (text.empty() || text.front() == '#') continue;
        if (!header_seen) {
            if (text != kSeriesHeader) {
                throw DataError(where(path, lineno) + "expected header '" + kSeriesHeader + "'");
            }
            header_seen = true;
            continue;
        }
        const auto f = split_fields(text);
        if (f.size() != 4) {
            throw DataError(where(path, lineno) + "expected 4 fields, found " + std::to_string(f.size()));
        }
        if (f[1].empty()) throw DataError(where(path, lineno) + "empty sensor_id");
        ParsedRow row;
        try {
            row.ts = parse_timestamp(f[0]);
        } catch (const std::exception& e) {
            throw DataError(where(path, lineno) + e.what());
        }
        row.sensor = std::string(f[1]);
        row.q = parse_measurement(f[2], path, lineno, "streamflow_cfs");
        row.p = parse_measurement(f[3], path, lineno, "precip_mm");
        row.line = lineno;
        rows.push_back(std::move(row));
    }
    if (!header_seen) throw DataError(path.string() + ": empty series file");
    return rows;
}

}  // namespace

// ---------------------------------------------------------------------------
// Timestamps
// ---------------------------------------------------------------------------

Timestamp parse_timestamp(std::string_view text) {
    using namespace std::chrono;
    const auto s = trim(text);
    auto fail = [&]() -> Timestamp {
        throw std::invalid_argument("invalid ISO-8601 timestamp '" + std::string(s) + "'");
    };
    auto num = [&](std::size_t pos, std::size_t len, int& out) {
        if (pos + len > s.size() || !parse_int(s.substr(pos, len), out)) fail();
    };
    int y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
    if (s.size() < 10 || s[4] != '-' || s[7] != '-') fail();
    num(0, 4, y);
    num(5, 2, mo);
    num(8, 2, d);
    std::size_t pos = 10;
    if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
        num(pos + 1, 2, hh);
        if (pos + 3 >= s.size() || s[pos + 3] != ':') fail();
        num(pos + 4, 2, mm);
        pos += 6;
        if (pos < s.size() && s[pos] == ':') {
            num(pos + 1, 2, ss);
            pos += 3;
        }
    }
    int offset_seconds = 0;
    if (pos < s.size()) {
        if (s[pos] == 'Z' && pos + 1 == s.size()) {
            ++pos;
        } else if ((s[pos] == '+' || s[pos] == '-') && pos + 6 == s.size() && s[pos + 3] == ':') {
            int oh = 0, om = 0;
            num(pos + 1, 2, oh);
            num(pos + 4, 2, om);
            offset_seconds = (oh * 3600 + om * 60) * (s[pos] == '-' ? -1 : 1);
            pos = s.size();
        } else {
            fail();
        }
    }
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || hh > 23 || mm > 59 || ss > 59) fail();
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<Timestamp>(days) * 86400 + hh * 3600 + mm * 60 + ss - offset_seconds;
}

std::string format_timestamp(Timestamp ts) {
    using namespace std::chrono;
    auto days = ts / 86400;
    auto rem = ts % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    const year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                  static_cast<int>(rem % 3600 / 60), static_cast<int>(rem % 60));
    return buf;
}

// ---------------------------------------------------------------------------
// Series files
// ---------------------------------------------------------------------------

std::map<std::string, SensorSeries> load_series_file(const std::filesystem::path& path) {
    auto rows = read_series_rows(path);
    for (const auto& r : rows) {
        if (r.ts % kHour != 0) {
            throw DataError(where(path, r.line) + "timestamp " + format_timestamp(r.ts) +
                            " is not aligned to an exact hour");
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const ParsedRow& a, const ParsedRow& b) {
        return a.sensor != b.sensor ? a.sensor < b.sensor : a.ts < b.ts;
    });
    std::map<std::string, SensorSeries> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (i > 0 && rows[i - 1].sensor == r.sensor && rows[i - 1].ts == r.ts) {
            throw DataError(where(path, r.line) + "duplicate timestamp " + format_timestamp(r.ts) + " for sensor " +
                            r.sensor + " (first seen on line " + std::to_string(rows[i - 1].line) + ")");
        }
        auto& s = out[r.sensor];
        s.sensor_id = r.sensor;
        s.timestamps.push_back(r.ts);
        s.streamflow.push_back(r.q);
        s.precipitation.push_back(r.p);
    }
    return out;
}

SensorSeries load_series(const std::filesystem::path& path) {
    auto all = load_series_file(path);
    if (all.size() != 1) {
        throw DataError(path.string() + ": expected exactly one sensor, found " + std::to_string(all.size()));
    }
    return std::move(all.begin()->second);
}

void write_series_file(const std::filesystem::path& path, const std::vector<SensorSeries>& series) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << kSeriesHeader << '\n';
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            out << format_timestamp(s.timestamps[i]) << ',' << s.sensor_id << ',' << format_value(s.streamflow[i])
                << ',' << format_value(s.precipitation[i]) << '\n';
        }
    }
    if (!out) throw DataError("write failed for " + path.string());
}

std::map<std::string, RawSeries> load_raw_series_file(const std::filesystem::path& path) {
    auto rows = read_series_rows(path);
    std::stable_sort(rows.begin(), rows.end(), [](const ParsedRow& a, const ParsedRow& b) {
        return a.sensor != b.sensor ? a.sensor < b.sensor : a.ts < b.ts;
    });
    std::map<std::string, RawSeries> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (i > 0 && rows[i - 1].sensor == r.sensor && rows[i - 1].ts == r.ts) {
            throw DataError(where(path, r.line) + "duplicate timestamp " + format_timestamp(r.ts) + " for sensor " +
                            r.sensor);
        }
        auto& s = out[r.sensor];
        s.sensor_id = r.sensor;
        s.readings.push_back({r.ts, r.q, r.p});
    }
    return out;
}

SensorSeries aggregate_hourly(const RawSeries& raw) {
    struct Acc {
        double q = 0.0, p = 0.0;
        std::size_t nq = 0, np = 0;
    };
    std::map<Timestamp, Acc> hours;
    for (const auto& r : raw.readings) {
        Timestamp h = r.timestamp - ((r.timestamp % kHour) + kHour) % kHour;
        auto& a = hours[h];
        if (r.streamflow) {
            a.q += *r.streamflow;
            ++a.nq;
        }
        if (r.precipitation) {
            a.p += *r.precipitation;
            ++a.np;
        }
    }
    SensorSeries s;
    s.sensor_id = raw.sensor_id;
    if (hours.empty()) return s;
    // Hours with no readings at all stay in the series as missing so the
    // hourly grid is explicit.
    const Timestamp first = hours.begin()->first, last = hours.rbegin()->first;
    for (Timestamp h = first; h <= last; h += kHour) {
        s.timestamps.push_back(h);
        auto it = hours.find(h);
        if (it == hours.end()) {
            s.streamflow.push_back(std::nullopt);
            s.precipitation.push_back(std::nullopt);
            continue;
        }
        const auto& a = it->second;
        s.streamflow.push_back(a.nq ? std::optional<double>(a.q / static_cast<double>(a.nq)) : std::nullopt);
        s.precipitation.push_back(a.np ? std::optional<double>(a.p / static_cast<double>(a.np)) : std::nullopt);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Graph files
// ---------------------------------------------------------------------------

SensorGraph load_graph(const std::filesystem::path& path, const GraphLoadOptions& options) {
    auto in = open_text(path);
    enum class Section { Start, Nodes, Edges } section = Section::Start;
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;
    std::optional<std::size_t> outlet;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto text = trim(line);
        if (text.empty() || text.front() == '#') continue;
        if (text == kNodeHeader) {
            if (section != Section::Start) throw DataError(where(path, lineno) + "node header must come first");
            section = Section::Nodes;
            continue;
        }
        if (text == kEdgeHeader) {
            if (section != Section::Nodes) throw DataError(where(path, lineno) + "edge header before node section");
            section = Section::Edges;
            continue;
        }
        const auto f = split_fields(text);
        if (section == Section::Start) {
            throw DataError(where(path, lineno) + "expected header '" + kNodeHeader + "'");
        }
        if (f.size() != 3) {
            throw DataError(where(path, lineno) + "expected 3 fields, found " + std::to_string(f.size()));
        }
        if (section == Section::Nodes) {
            std::size_t idx = 0;
            if (!parse_int(f[0], idx)) throw DataError(where(path, lineno) + "malformed node_index");
            if (idx != nodes.size()) {
                throw DataError(where(path, lineno) + "node indices must be consecutive from 0; expected " +
                                std::to_string(nodes.size()) + ", got " + std::to_string(idx));
            }
            if (f[1].empty()) throw DataError(where(path, lineno) + "empty sensor_id");
            for (const auto& n : nodes) {
                if (n.sensor_id == f[1]) throw DataError(where(path, lineno) + "duplicate sensor " + std::string(f[1]));
            }
            const bool is_outlet = f[2] == "1" || f[2] == "true";
            if (!is_outlet && f[2] != "0" && f[2] != "false") {
                throw DataError(where(path, lineno) + "is_outlet must be 0/1/true/false");
            }
            if (is_outlet) {
                if (outlet) throw DataError(where(path, lineno) + "more than one outlet node");
                outlet = idx;
            }
            nodes.push_back({idx, std::string(f[1])});
        } else {
            std::size_t src = 0, dst = 0;
            double km = 0.0;
            if (!parse_int(f[0], src) || !parse_int(f[1], dst)) {
                throw DataError(where(path, lineno) + "malformed edge endpoints");
            }
            if (src >= nodes.size() || dst >= nodes.size()) {
                throw DataError(where(path, lineno) + "edge references unknown node " +
                                std::to_string(src >= nodes.size() ? src : dst));
            }
            if (src == dst) throw DataError(where(path, lineno) + "self-loop edge");
            if (!parse_double(f[2], km)) throw DataError(where(path, lineno) + "malformed distance_km");
            if (!(km > 0.0)) throw DataError(where(path, lineno) + "distance_km must be positive");
            edges.push_back({src, dst, options.inverse_distance ? 1.0 / km : km});
        }
    }
    if (nodes.empty()) throw DataError(path.string() + ": no nodes");
    if (!outlet) throw DataError(path.string() + ": no outlet node");
    return SensorGraph(std::move(nodes), std::move(edges), *outlet);
}

void write_graph_file(const std::filesystem::path& path, const SensorGraph& graph,
                      const std::vector<double>& distances_km) {
    if (distances_km.size() != graph.edges().size()) {
        throw std::invalid_argument("write_graph_file: one distance per edge required");
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << kNodeHeader << '\n';
    for (const auto& n : graph.nodes()) {
        out << n.index << ',' << n.sensor_id << ',' << (n.index == graph.outlet_index() ? 1 : 0) << '\n';
    }
    out << kEdgeHeader << '\n';
    out << std::setprecision(17);
    for (std::size_t i = 0; i < distances_km.size(); ++i) {
        const auto& e = graph.edges()[i];
        out << e.src << ',' << e.dst << ',' << distances_km[i] << '\n';
    }
    if (!out) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

double normalize(double x, double lo, double hi) {
    if (!(hi > lo)) throw std::invalid_argument("normalize: need hi > lo");
    return kNormalizedRange * (x - lo) / (hi - lo);
}

double denormalize(double y, double lo, double hi) {
    if (!(hi > lo)) throw std::invalid_argument("denormalize: need hi > lo");
    return lo + y * (hi - lo) / kNormalizedRange;
}

NormalizationConstants compute_normalization(const SensorSeries& outlet, const TimeWindow& train) {
    double qlo = std::numeric_limits<double>::infinity(), qhi = -qlo;
    double plo = qlo, phi = -qlo;
    for (std::size_t i = 0; i < outlet.size(); ++i) {
        if (!train.contains(outlet.timestamps[i])) continue;
        if (const auto& q = outlet.streamflow[i]) {
            qlo = std::min(qlo, *q);
            qhi = std::max(qhi, *q);
        }
        if (const auto& p = outlet.precipitation[i]) {
            plo = std::min(plo, *p);
            phi = std::max(phi, *p);
        }
    }
    if (!(qhi > qlo)) {
        throw DataError("outlet " + outlet.sensor_id +
                        ": streamflow in the training window has fewer than two distinct values");
    }
    if (!(phi > plo)) {
        throw DataError("outlet " + outlet.sensor_id +
                        ": precipitation in the training window has fewer than two distinct values");
    }
    return {qlo, qhi, plo, phi};
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

Tensor Snapshot::input_tensor() const { return Tensor({nodes, kSeriesPerNode, t_in}, input); }

Tensor Snapshot::flat_input_tensor() const { return Tensor({nodes * kSeriesPerNode, t_in}, input); }

Tensor Snapshot::target_tensor() const { return Tensor({nodes, t_out}, target); }

std::vector<double> Snapshot::outlet_target(std::size_t outlet) const {
    return {target.begin() + static_cast<std::ptrdiff_t>(outlet * t_out),
            target.begin() + static_cast<std::ptrdiff_t>((outlet + 1) * t_out)};
}

std::vector<Snapshot> build_snapshots(const std::map<std::string, SensorSeries>& series, const SensorGraph& graph,
                                      std::size_t t_in, std::size_t t_out, const NormalizationConstants& norm) {
    if (t_in == 0 || t_out == 0) throw std::invalid_argument("build_snapshots: window lengths must be positive");
    const std::size_t n = graph.size();
    std::vector<const SensorSeries*> per_node(n);
    for (const auto& node : graph.nodes()) {
        auto it = series.find(node.sensor_id);
        if (it == series.end()) {
            throw DataError("no series for sensor " + node.sensor_id + " (graph node " + std::to_string(node.index) +
                            ")");
        }
        per_node[node.index] = &it->second;
    }
    const auto& outlet = *per_node[graph.outlet_index()];
    if (outlet.size() == 0) return {};

    const Timestamp grid_start = outlet.timestamps.front();
    const auto hours = static_cast<std::size_t>((outlet.timestamps.back() - grid_start) / kHour + 1);
    const double nan = std::numeric_limits<double>::quiet_NaN();

    // Dense normalized grids; NaN marks a missing hour.
    std::vector<std::vector<double>> q(n, std::vector<double>(hours, nan)), p(n, std::vector<double>(hours, nan));
    for (std::size_t node = 0; node < n; ++node) {
        const auto& s = *per_node[node];
        for (std::size_t i = 0; i < s.size(); ++i) {
            const Timestamp off = s.timestamps[i] - grid_start;
            if (off < 0 || off % kHour != 0) continue;
            const auto h = static_cast<std::size_t>(off / kHour);
            if (h >= hours) continue;
            if (s.streamflow[i]) q[node][h] = normalize(*s.streamflow[i], norm.q_min, norm.q_max);
            if (s.precipitation[i]) p[node][h] = normalize(*s.precipitation[i], norm.p_min, norm.p_max);
        }
    }
    const std::size_t o = graph.outlet_index();
    std::vector<std::size_t> missing_prefix(hours + 1, 0);
    for (std::size_t h = 0; h < hours; ++h) missing_prefix[h + 1] = missing_prefix[h] + (std::isnan(q[o][h]) ? 1 : 0);

    auto value = [](const std::vector<double>& v, std::size_t h) {
        return h < v.size() && !std::isnan(v[h]) ? v[h] : 0.0;
    };

    std::vector<Snapshot> out;
    if (hours < t_in + t_out) return out;
    for (std::size_t a = t_in - 1; a + t_out < hours; ++a) {
        const std::size_t first = a + 1 - t_in, last = a + t_out;
        if (missing_prefix[last + 1] - missing_prefix[first] != 0) continue;
        Snapshot s;
        s.anchor = grid_start + static_cast<Timestamp>(a) * kHour;
        s.nodes = n;
        s.t_in = t_in;
        s.t_out = t_out;
        s.input.resize(n * kSeriesPerNode * t_in);
        s.target.resize(n * t_out);
        s.target_mask.resize(n * t_out);
        for (std::size_t node = 0; node < n; ++node) {
            double* base = s.input.data() + node * kSeriesPerNode * t_in;
            for (std::size_t k = 0; k < t_in; ++k) {
                base[k] = value(q[node], first + k);
                base[t_in + k] = value(p[node], first + k);
                base[2 * t_in + k] = value(p[node], a + 1 + k);
            }
            for (std::size_t k = 0; k < t_out; ++k) {
                const double v = q[node][a + 1 + k];
                const bool seen = !std::isnan(v);
                s.target[node * t_out + k] = seen ? v : 0.0;
                s.target_mask[node * t_out + k] = seen ? 1 : 0;
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

void SplitBoundaries::validate() const {
    if (!(train_start < validation_start && validation_start < test_start && test_start < test_end)) {
        throw std::invalid_argument("split boundaries must be strictly increasing: " + format_timestamp(train_start) +
                                    ", " + format_timestamp(validation_start) + ", " + format_timestamp(test_start) +
                                    ", " + format_timestamp(test_end));
    }
}

SplitBoundaries fractional_boundaries(Timestamp first, Timestamp end, double train_fraction,
                                      double validation_fraction) {
    const double span = static_cast<double>(end - first);
    auto at = [&](double frac) {
        const auto t = first + static_cast<Timestamp>(std::floor(span * frac));
        return t - ((t - first) % kHour);
    };
    SplitBoundaries b{first, at(train_fraction), at(train_fraction + validation_fraction), end};
    b.validate();
    return b;
}

const DatasetSplit& SplitResult::by_name(std::string_view name) const {
    if (name == "train") return train;
    if (name == "validation") return validation;
    if (name == "test") return test;
    throw std::invalid_argument("unknown split '" + std::string(name) + "' (expected train, validation or test)");
}

SplitResult split_snapshots(std::vector<Snapshot> snapshots, const SplitBoundaries& boundaries) {
    boundaries.validate();
    SplitResult r;
    r.train = {"train", boundaries.train(), {}};
    r.validation = {"validation", boundaries.validation(), {}};
    r.test = {"test", boundaries.test(), {}};
    for (auto& s : snapshots) {
        if (r.train.window.contains(s.anchor)) {
            r.train.snapshots.push_back(std::move(s));
        } else if (r.validation.window.contains(s.anchor)) {
            r.validation.snapshots.push_back(std::move(s));
        } else if (r.test.window.contains(s.anchor)) {
            r.test.snapshots.push_back(std::move(s));
        } else {
            ++r.dropped;
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Snapshot cache
// ---------------------------------------------------------------------------

const Snapshot* SnapshotCache::find(Timestamp anchor) const {
    for (const auto* split : {&splits.train, &splits.validation, &splits.test}) {
        auto it = std::lower_bound(split->snapshots.begin(), split->snapshots.end(), anchor,
                                   [](const Snapshot& s, Timestamp t) { return s.anchor < t; });
        if (it != split->snapshots.end() && it->anchor == anchor) return &*it;
    }
    return nullptr;
}

void write_snapshot_cache(const std::filesystem::path& path, const SnapshotCache& cache) {
    ByteWriter w;
    w.raw({reinterpret_cast<const std::uint8_t*>(kCacheMagic), 8});
    w.u32(kCacheVersion);
    w.u64(cache.graph_fingerprint);
    w.u64(cache.nodes);
    w.u64(cache.outlet_index);
    w.u64(cache.t_in);
    w.u64(cache.t_out);
    const auto& nc = cache.normalization;
    for (double v : {nc.q_min, nc.q_max, nc.p_min, nc.p_max}) w.f64(v);
    const auto& b = cache.boundaries;
    for (Timestamp t : {b.train_start, b.validation_start, b.test_start, b.test_end}) w.i64(t);
    w.u64(cache.splits.dropped);
    for (const auto* split : {&cache.splits.train, &cache.splits.validation, &cache.splits.test}) {
        w.str(split->name);
        w.i64(split->window.start);
        w.i64(split->window.end);
        w.u64(split->snapshots.size());
        for (const auto& s : split->snapshots) {
            if (s.nodes != cache.nodes || s.t_in != cache.t_in || s.t_out != cache.t_out) {
                throw std::invalid_argument("snapshot shape does not match cache header");
            }
            w.i64(s.anchor);
            w.f64s(s.input);
            w.f64s(s.target);
            w.raw(s.target_mask);
        }
    }
    write_checksummed(path, w.bytes());
}

SnapshotCache read_snapshot_cache(const std::filesystem::path& path) {
    const auto bytes = read_checksummed(path);
    ByteReader r(bytes);
    const auto magic = r.raw(8);
    if (!std::equal(magic.begin(), magic.end(), kCacheMagic)) {
        throw IntegrityError(path.string() + ": not a snapshot cache");
    }
    if (const auto v = r.u32(); v != kCacheVersion) {
        throw IntegrityError(path.string() + ": unsupported cache version " + std::to_string(v));
    }
    SnapshotCache c;
    c.graph_fingerprint = r.u64();
    c.nodes = r.u64();
    c.outlet_index = r.u64();
    c.t_in = r.u64();
    c.t_out = r.u64();
    c.normalization = {r.f64(), r.f64(), r.f64(), r.f64()};
    c.boundaries.train_start = r.i64();
    c.boundaries.validation_start = r.i64();
    c.boundaries.test_start = r.i64();
    c.boundaries.test_end = r.i64();
    c.splits.dropped = r.u64();
    for (auto* split : {&c.splits.train, &c.splits.validation, &c.splits.test}) {
        split->name = r.str();
        split->window.start = r.i64();
        split->window.end = r.i64();
        const auto count = r.u64();
        split->snapshots.reserve(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            Snapshot s;
            s.anchor = r.i64();
            s.nodes = c.nodes;
            s.t_in = c.t_in;
            s.t_out = c.t_out;
            s.input = r.f64s(c.nodes * kSeriesPerNode * c.t_in);
            s.target = r.f64s(c.nodes * c.t_out);
            const auto mask = r.raw(c.nodes * c.t_out);
            s.target_mask.assign(mask.begin(), mask.end());
            split->snapshots.push_back(std::move(s));
        }
    }
    if (!r.at_end()) throw IntegrityError(path.string() + ": trailing bytes after snapshot data");
    return c;
}

}  // namespace flowcast
