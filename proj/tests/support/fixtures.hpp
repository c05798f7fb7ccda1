#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>

#include "flowcast/dataset.hpp"
#include "flowcast/synthetic.hpp"

namespace fixture {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("flowcast_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

struct Bench {
    flowcast::SyntheticDataset data;
    std::map<std::string, flowcast::SensorSeries> series;
    flowcast::SplitBoundaries boundaries;
    flowcast::NormalizationConstants normalization;
    flowcast::SplitResult splits;
    flowcast::ScaledLaplacian laplacian;
    std::size_t outlet = 0;
};

inline Bench make_bench(const flowcast::SyntheticConfig& config, std::uint64_t seed, std::size_t t_in = 36,
                        std::size_t t_out = 36) {
    using namespace flowcast;
    Bench b;
    b.data = generate(config, seed);
    for (const auto& s : b.data.series) b.series[s.sensor_id] = s;
    b.outlet = b.data.graph.outlet_index();
    b.boundaries = fractional_boundaries(config.start, config.start + static_cast<Timestamp>(config.hours) * kHour);
    b.normalization =
        compute_normalization(b.series.at(b.data.graph.nodes()[b.outlet].sensor_id), b.boundaries.train());
    b.splits = split_snapshots(build_snapshots(b.series, b.data.graph, t_in, t_out, b.normalization), b.boundaries);
    b.laplacian = scaled_laplacian(b.data.graph);
    return b;
}

inline flowcast::SyntheticConfig small_config(std::size_t hours = 400) {
    flowcast::SyntheticConfig c;
    c.hours = hours;
    c.event_probability = 0.06;
    return c;
}

}  // namespace fixture
