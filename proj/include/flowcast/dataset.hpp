#pragma once

// Sensor series ingestion, snapshot construction and time-based splits.
//
// File formats
//   series CSV : timestamp,sensor_id,streamflow_cfs,precip_mm  (ISO-8601 UTC, empty = missing)
//   graph CSV  : node_index,sensor_id,is_outlet  rows, then
//                src_index,dst_index,distance_km rows
//   cache      : binary, little-endian, CRC-32 trailer (see write_snapshot_cache)

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "flowcast/graph.hpp"
#include "flowcast/tensor.hpp"

namespace flowcast {

/// Seconds since 1970-01-01T00:00:00Z.
using Timestamp = std::int64_t;
inline constexpr Timestamp kHour = 3600;

Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SensorSeries {
    std::string sensor_id;
    std::vector<Timestamp> timestamps;  // strictly increasing, hour-aligned
    std::vector<std::optional<double>> streamflow;
    std::vector<std::optional<double>> precipitation;

    std::size_t size() const { return timestamps.size(); }
};

struct RawReading {
    Timestamp timestamp = 0;
    std::optional<double> streamflow;
    std::optional<double> precipitation;
};

struct RawSeries {
    std::string sensor_id;
    std::vector<RawReading> readings;
};

/// Every sensor in an hourly series file, keyed by sensor id.
std::map<std::string, SensorSeries> load_series_file(const std::filesystem::path& path);
/// A file that holds exactly one sensor.
SensorSeries load_series(const std::filesystem::path& path);
void write_series_file(const std::filesystem::path& path, const std::vector<SensorSeries>& series);

std::map<std::string, RawSeries> load_raw_series_file(const std::filesystem::path& path);
/// Hour value = mean of the available sub-hourly values in [hour, hour + 1h).
SensorSeries aggregate_hourly(const RawSeries& raw);

struct GraphLoadOptions {
    /// Weight = 1 / distance_km when set, distance_km verbatim otherwise.
    bool inverse_distance = true;
};

SensorGraph load_graph(const std::filesystem::path& path, const GraphLoadOptions& options = {});
void write_graph_file(const std::filesystem::path& path, const SensorGraph& graph,
                      const std::vector<double>& distances_km);

struct NormalizationConstants {
    double q_min = 0.0, q_max = 1.0;  // streamflow, outlet sensor, training window
    double p_min = 0.0, p_max = 1.0;  // aggregated precipitation, outlet watershed, training window

    bool operator==(const NormalizationConstants&) const = default;
};

inline constexpr double kNormalizedRange = 4.0;

/// 4 (x - lo) / (hi - lo); no clipping.
double normalize(double x, double lo, double hi);
double denormalize(double y, double lo, double hi);

/// Half-open [start, end).
struct TimeWindow {
    Timestamp start = 0;
    Timestamp end = 0;
    bool contains(Timestamp t) const { return t >= start && t < end; }
};

NormalizationConstants compute_normalization(const SensorSeries& outlet, const TimeWindow& train);

inline constexpr std::size_t kSeriesPerNode = 3;  // past discharge, past precipitation, future precipitation

struct Snapshot {
    Timestamp anchor = 0;
    std::size_t nodes = 0;
    std::size_t t_in = 0;
    std::size_t t_out = 0;
    std::vector<double> input;         // [nodes x 3 x t_in]
    std::vector<double> target;        // [nodes x t_out]
    std::vector<std::uint8_t> target_mask;  // 1 where the target was observed

    double input_at(std::size_t node, std::size_t series, std::size_t k) const {
        return input[(node * kSeriesPerNode + series) * t_in + k];
    }
    double target_at(std::size_t node, std::size_t k) const { return target[node * t_out + k]; }

    Tensor input_tensor() const;
    /// Input as [3N x t_in], node-major and series-minor (row = node * 3 + series).
    Tensor flat_input_tensor() const;
    Tensor target_tensor() const;
    std::vector<double> outlet_target(std::size_t outlet) const;
    /// Most recent observed (normalized) discharge at a node.
    double last_discharge(std::size_t node) const { return input_at(node, 0, t_in - 1); }
};

/// Snapshots for every anchor hour whose outlet discharge is observed over the
/// whole past window (t - t_in, t] and future window (t, t + t_out]. Missing
/// upstream discharge and precipitation are stored as normalized 0. Future
/// precipitation covers (t, t + t_in] so all three input sequences share a length.
std::vector<Snapshot> build_snapshots(const std::map<std::string, SensorSeries>& series, const SensorGraph& graph,
                                      std::size_t t_in, std::size_t t_out, const NormalizationConstants& norm);

struct SplitBoundaries {
    Timestamp train_start = 0;
    Timestamp validation_start = 0;
    Timestamp test_start = 0;
    Timestamp test_end = 0;

    void validate() const;
    TimeWindow train() const { return {train_start, validation_start}; }
    TimeWindow validation() const { return {validation_start, test_start}; }
    TimeWindow test() const { return {test_start, test_end}; }
    bool operator==(const SplitBoundaries&) const = default;
};

/// Hour-aligned 75 / 12.5 / 12.5 (by default) partition of [first, end).
SplitBoundaries fractional_boundaries(Timestamp first, Timestamp end, double train_fraction = 0.75,
                                      double validation_fraction = 0.125);

struct DatasetSplit {
    std::string name;
    TimeWindow window;
    std::vector<Snapshot> snapshots;
};

struct SplitResult {
    DatasetSplit train, validation, test;
    std::size_t dropped = 0;  // anchors outside every window

    const DatasetSplit& by_name(std::string_view name) const;
};

SplitResult split_snapshots(std::vector<Snapshot> snapshots, const SplitBoundaries& boundaries);

struct SnapshotCache {
    std::uint64_t graph_fingerprint = 0;
    std::size_t nodes = 0;
    std::size_t outlet_index = 0;
    std::size_t t_in = 0;
    std::size_t t_out = 0;
    NormalizationConstants normalization;
    SplitBoundaries boundaries;
    SplitResult splits;

    const Snapshot* find(Timestamp anchor) const;
};

void write_snapshot_cache(const std::filesystem::path& path, const SnapshotCache& cache);
SnapshotCache read_snapshot_cache(const std::filesystem::path& path);

}  // namespace flowcast
