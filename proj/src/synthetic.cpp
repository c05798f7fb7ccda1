#include "flowcast/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "flowcast/random.hpp"

namespace flowcast {

void SyntheticConfig::validate() const {
    if (nodes == 0) throw std::invalid_argument("synthetic: nodes must be positive");
    if (!(event_probability >= 0.0 && event_probability <= 1.0)) {
        throw std::invalid_argument("synthetic: event_probability must lie in [0, 1]");
    }
    if (!(intensity_min >= 0.0 && intensity_max >= intensity_min)) {
        throw std::invalid_argument("synthetic: need 0 <= intensity_min <= intensity_max");
    }
    if (storm_min_hours == 0 || storm_max_hours < storm_min_hours) {
        throw std::invalid_argument("synthetic: need 1 <= storm_min_hours <= storm_max_hours");
    }
    if (!(storage_min > 0.0 && storage_max < 1.0 && storage_min <= storage_max)) {
        throw std::invalid_argument("synthetic: storage coefficients must lie in (0, 1)");
    }
    if (delay_min == 0 || delay_max < delay_min) throw std::invalid_argument("synthetic: need 1 <= delay_min <= delay_max");
    if (!(km_per_hour > 0.0)) throw std::invalid_argument("synthetic: km_per_hour must be positive");
    if (hours == 0) throw std::invalid_argument("synthetic: hours must be positive");
    if (!(noise >= 0.0)) throw std::invalid_argument("synthetic: noise must be non-negative");
    if (start % kHour != 0) throw std::invalid_argument("synthetic: start must be hour-aligned");
}

std::vector<std::size_t> RiverNetwork::upstream_order() const {
    // Kahn's algorithm on child -> parent edges.
    const std::size_t n = size();
    std::vector<std::size_t> pending(n, 0), order;
    for (std::size_t i = 0; i < n; ++i)
        if (parent[i] >= 0) ++pending[static_cast<std::size_t>(parent[i])];
    std::vector<std::size_t> ready;
    for (std::size_t i = n; i-- > 0;)
        if (pending[i] == 0) ready.push_back(i);
    while (!ready.empty()) {
        const std::size_t i = ready.back();
        ready.pop_back();
        order.push_back(i);
        if (parent[i] >= 0) {
            const auto p = static_cast<std::size_t>(parent[i]);
            if (--pending[p] == 0) ready.push_back(p);
        }
    }
    if (order.size() != n) throw std::invalid_argument("river network contains a cycle");
    return order;
}

std::size_t RiverNetwork::path_delay(std::size_t node) const {
    std::size_t total = 0, steps = 0;
    for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(node); parent[static_cast<std::size_t>(i)] >= 0;
         i = parent[static_cast<std::size_t>(i)]) {
        total += delay[static_cast<std::size_t>(i)];
        if (++steps > size()) throw std::invalid_argument("river network contains a cycle");
    }
    return total;
}

void RiverNetwork::validate() const {
    const std::size_t n = size();
    if (n == 0) throw std::invalid_argument("river network is empty");
    if (delay.size() != n || storage.size() != n) throw std::invalid_argument("river network arrays differ in length");
    std::size_t roots = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (parent[i] < 0) {
            ++roots;
            if (i != outlet) throw std::invalid_argument("node " + std::to_string(i) + " has no downstream neighbour");
            continue;
        }
        if (static_cast<std::size_t>(parent[i]) >= n || static_cast<std::size_t>(parent[i]) == i) {
            throw std::invalid_argument("node " + std::to_string(i) + " has an invalid parent");
        }
        if (delay[i] < 1) throw std::invalid_argument("edge delays must be at least 1 hour");
    }
    if (roots != 1) throw std::invalid_argument("river network must have exactly one outlet");
    for (double k : storage) {
        if (!(k > 0.0 && k < 1.0)) throw std::invalid_argument("storage coefficients must lie in (0, 1)");
    }
    (void)upstream_order();
}

RiverNetwork random_network(const SyntheticConfig& config) {
    config.validate();
    Rng rng(config.topology_seed);
    RiverNetwork net;
    const std::size_t n = config.nodes;
    net.outlet = n - 1;
    net.parent.assign(n, -1);
    net.delay.assign(n, 0);
    net.storage.assign(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        // Parent drawn from the higher-indexed nodes: always a tree rooted at n - 1.
        net.parent[i] = static_cast<std::ptrdiff_t>(i + 1 + rng.below(n - 1 - i));
        net.delay[i] = config.delay_min + rng.below(config.delay_max - config.delay_min + 1);
    }
    for (auto& k : net.storage) k = rng.uniform(config.storage_min, config.storage_max);
    net.validate();
    return net;
}

std::vector<std::vector<double>> simulate(const RiverNetwork& network, const std::vector<std::vector<double>>& rain) {
    network.validate();
    const std::size_t n = network.size();
    if (rain.size() != n) throw std::invalid_argument("simulate: rain must have one row per node");
    const std::size_t hours = rain.front().size();
    for (const auto& r : rain)
        if (r.size() != hours) throw std::invalid_argument("simulate: rain rows differ in length");

    std::vector<std::vector<double>> q(n, std::vector<double>(hours, 0.0));
    for (std::size_t node : network.upstream_order()) {
        const double k = network.storage[node];
        double s = 0.0;
        for (std::size_t t = 0; t < hours; ++t) {
            q[node][t] += (1.0 - k) * s;
            s = k * s + rain[node][t];
        }
        if (network.parent[node] >= 0) {
            auto& down = q[static_cast<std::size_t>(network.parent[node])];
            const std::size_t d = network.delay[node];
            for (std::size_t t = d; t < hours; ++t) down[t] += q[node][t - d];
        }
    }
    return q;
}

std::vector<std::vector<double>> watershed_precipitation(const RiverNetwork& network,
                                                         const std::vector<std::vector<double>>& rain) {
    std::vector<std::vector<double>> total = rain;
    for (std::size_t node : network.upstream_order()) {
        if (network.parent[node] < 0) continue;
        auto& down = total[static_cast<std::size_t>(network.parent[node])];
        for (std::size_t t = 0; t < down.size(); ++t) down[t] += total[node][t];
    }
    return total;
}

std::vector<std::vector<double>> generate_rain(const SyntheticConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(mix_seed(seed, 1));
    std::vector<std::vector<double>> rain(config.nodes, std::vector<double>(config.hours, 0.0));
    std::vector<double> footprint(config.nodes);
    for (std::size_t t = 0; t < config.hours; ++t) {
        if (rng.uniform() >= config.event_probability) continue;
        const std::size_t duration =
            config.storm_min_hours + rng.below(config.storm_max_hours - config.storm_min_hours + 1);
        const double intensity = rng.uniform(config.intensity_min, config.intensity_max);
        for (auto& f : footprint) f = rng.uniform() < 0.7 ? rng.uniform(0.2, 1.3) : 0.0;
        for (std::size_t h = t; h < std::min(config.hours, t + duration); ++h)
            for (std::size_t n = 0; n < config.nodes; ++n) rain[n][h] += intensity * footprint[n];
    }
    return rain;
}

SyntheticDataset generate(const SyntheticConfig& config, std::uint64_t seed) {
    config.validate();
    SyntheticDataset ds;
    ds.network = random_network(config);
    ds.rain = generate_rain(config, seed);
    ds.clean_discharge = simulate(ds.network, ds.rain);
    const auto precip = watershed_precipitation(ds.network, ds.rain);

    const std::size_t n = config.nodes;
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "syn-%02zu", i);
        nodes.push_back({i, id});
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (ds.network.parent[i] < 0) continue;
        const double km = config.km_per_hour * static_cast<double>(ds.network.delay[i]);
        edges.push_back({i, static_cast<std::size_t>(ds.network.parent[i]), 1.0 / km});
        ds.distances_km.push_back(km);
    }
    ds.graph = SensorGraph(nodes, edges, ds.network.outlet);

    Rng noise(mix_seed(seed, 2));
    for (std::size_t i = 0; i < n; ++i) {
        SensorSeries s;
        s.sensor_id = nodes[i].sensor_id;
        s.timestamps.resize(config.hours);
        s.streamflow.resize(config.hours);
        s.precipitation.resize(config.hours);
        for (std::size_t t = 0; t < config.hours; ++t) {
            s.timestamps[t] = config.start + static_cast<Timestamp>(t) * kHour;
            double q = ds.clean_discharge[i][t];
            if (config.noise > 0.0) q = std::max(0.0, q * (1.0 + config.noise * noise.normal()));
            s.streamflow[t] = q;
            s.precipitation[t] = precip[i][t];
        }
        ds.series.push_back(std::move(s));
    }
    return ds;
}

void SyntheticDataset::write(const std::filesystem::path& series_path, const std::filesystem::path& graph_path) const {
    write_series_file(series_path, series);
    write_graph_file(graph_path, graph, distances_km);
}

}  // namespace flowcast
