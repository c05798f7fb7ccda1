#pragma once

// Synthetic river networks with linear-reservoir runoff and delayed routing.
//
// Per node n and hour t:
//   s_n(t+1) = k_n s_n(t) + rain_n(t),   local_n(t) = (1 - k_n) s_n(t)
//   Q_n(t)   = local_n(t) + sum over children c of Q_c(t - delay_c)
// where delay_c is the travel time of the edge leaving c. Reported
// precipitation is the rain summed over each gauge's whole watershed.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "flowcast/dataset.hpp"
#include "flowcast/graph.hpp"

namespace flowcast {

struct SyntheticConfig {
    std::size_t nodes = 8;
    std::uint64_t topology_seed = 7;
    double event_probability = 0.03;  // chance a storm starts in a given hour
    double intensity_min = 0.5;        // mm/h at the storm core
    double intensity_max = 6.0;
    std::size_t storm_min_hours = 2;
    std::size_t storm_max_hours = 8;
    double storage_min = 0.80;  // k range, within (0, 1)
    double storage_max = 0.95;
    std::size_t delay_min = 1;  // hours per edge, >= 1
    std::size_t delay_max = 6;
    double km_per_hour = 4.0;  // distance_km = delay * km_per_hour
    std::size_t hours = 4000;
    double noise = 0.02;  // multiplicative discharge noise (std dev); 0 = off
    Timestamp start = 1317427200;  // 2011-10-01T00:00:00Z

    void validate() const;
};

/// Tree routing: parent[n] is the downstream neighbour (outlet has none).
struct RiverNetwork {
    std::vector<std::ptrdiff_t> parent;  // -1 for the outlet
    std::vector<std::size_t> delay;      // hours on the edge n -> parent[n]; 0 for the outlet
    std::vector<double> storage;         // k_n
    std::size_t outlet = 0;

    std::size_t size() const { return parent.size(); }
    /// Children before parents (the outlet last).
    std::vector<std::size_t> upstream_order() const;
    /// Sum of edge delays from `node` to the outlet.
    std::size_t path_delay(std::size_t node) const;
    /// Throws std::invalid_argument on cycles, multiple outlets or bad constants.
    void validate() const;
};

RiverNetwork random_network(const SyntheticConfig& config);

/// rain[n][t] -> noise-free discharge[n][t].
std::vector<std::vector<double>> simulate(const RiverNetwork& network, const std::vector<std::vector<double>>& rain);

/// rain[n][t] summed over every node draining into n (n included).
std::vector<std::vector<double>> watershed_precipitation(const RiverNetwork& network,
                                                         const std::vector<std::vector<double>>& rain);

std::vector<std::vector<double>> generate_rain(const SyntheticConfig& config, std::uint64_t seed);

struct SyntheticDataset {
    RiverNetwork network;
    SensorGraph graph;
    std::vector<double> distances_km;  // per graph edge
    std::vector<std::vector<double>> rain;
    std::vector<std::vector<double>> clean_discharge;
    std::vector<SensorSeries> series;

    void write(const std::filesystem::path& series_path, const std::filesystem::path& graph_path) const;
};

SyntheticDataset generate(const SyntheticConfig& config, std::uint64_t seed);

}  // namespace flowcast
