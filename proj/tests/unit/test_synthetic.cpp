#include <doctest.h>

#include <Eigen/Dense>
#include <numeric>

#include "fixtures.hpp"
#include "flowcast/binary_io.hpp"
#include "flowcast/synthetic.hpp"
#include "oracles.hpp"

using namespace flowcast;

namespace {

using Grid = std::vector<std::vector<double>>;

Grid zeros(std::size_t n, std::size_t t) { return Grid(n, std::vector<double>(t, 0.0)); }

RiverNetwork chain() {
    // 0 -> 1 -> 2 (outlet), with 3 also joining 2.
    RiverNetwork net;
    net.parent = {1, 2, -1, 2};
    net.delay = {2, 3, 0, 1};
    net.storage = {0.9, 0.8, 0.85, 0.7};
    net.outlet = 2;
    return net;
}

}  // namespace

TEST_SUITE("synthetic") {

TEST_CASE("default network is an 8-node tree draining to the outlet") {
    const SyntheticConfig c;
    const auto net = random_network(c);
    CHECK(net.size() == 8);
    CHECK(net.outlet == 7);
    CHECK_NOTHROW(net.validate());
    for (std::size_t n = 0; n < 8; ++n) {
        if (n == net.outlet) continue;
        CHECK(net.delay[n] >= c.delay_min);
        CHECK(net.delay[n] <= c.delay_max);
        CHECK(net.storage[n] > 0.0);
        CHECK(net.storage[n] < 1.0);
    }
    const auto order = net.upstream_order();
    CHECK(order.back() == net.outlet);
    std::vector<std::size_t> position(8);
    for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = i;
    for (std::size_t n = 0; n < 8; ++n)
        if (net.parent[n] >= 0) CHECK(position[n] < position[static_cast<std::size_t>(net.parent[n])]);
}

TEST_CASE("invalid networks are rejected") {
    auto cyc = chain();
    cyc.parent = {1, 0, -1, 2};
    CHECK_THROWS(cyc.validate());
    auto two_roots = chain();
    two_roots.parent[3] = -1;
    CHECK_THROWS(two_roots.validate());
    auto bad_k = chain();
    bad_k.storage[0] = 1.0;
    CHECK_THROWS(bad_k.validate());
    auto bad_delay = chain();
    bad_delay.delay[0] = 0;
    CHECK_THROWS(bad_delay.validate());
    SyntheticConfig c;
    c.storage_max = 1.2;
    CHECK_THROWS(c.validate());
    c = {};
    c.delay_min = 0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("zero rain gives zero discharge; rain scales linearly") {
    const auto net = chain();
    for (const auto& row : simulate(net, zeros(4, 100)))
        for (double q : row) CHECK(q == 0.0);

    SyntheticConfig c;
    c.nodes = 4;
    c.hours = 300;
    c.event_probability = 0.1;
    const auto rain = generate_rain(c, 3);
    auto doubled = rain;
    for (auto& row : doubled)
        for (auto& x : row) x *= 2;
    const auto a = simulate(net, rain), b = simulate(net, doubled);
    for (std::size_t n = 0; n < 4; ++n)
        for (std::size_t t = 0; t < 300; ++t) CHECK(std::abs(b[n][t] - 2 * a[n][t]) <= 1e-12 * (1 + a[n][t]));
}

TEST_CASE("leaf impulse reaches the outlet delayed by the path and attenuated by its reservoir") {
    const auto net = chain();
    CHECK(net.path_delay(0) == 5);
    auto rain = zeros(4, 80);
    rain[0][0] = 1.0;
    const auto q = simulate(net, rain);
    const double k = 0.9;
    for (std::size_t t = 0; t < 80; ++t) {
        const double expect = t >= 6 ? (1 - k) * std::pow(k, double(t - 6)) : 0.0;
        CHECK(std::abs(q[2][t] - expect) < 1e-15);
        const double local = t >= 1 ? (1 - k) * std::pow(k, double(t - 1)) : 0.0;
        CHECK(std::abs(q[0][t] - local) < 1e-15);
    }
}

TEST_CASE("mass is conserved with noise off") {
    const auto net = chain();
    SyntheticConfig c;
    c.nodes = 4;
    c.hours = 400;
    c.event_probability = 0.1;
    auto rain = generate_rain(c, 9);
    double injected = 0.0;
    for (auto& row : rain) {
        injected += std::accumulate(row.begin(), row.end(), 0.0);
        row.resize(2000, 0.0);  // long dry tail drains the reservoirs
    }
    REQUIRE(injected > 0);
    const auto q = simulate(net, rain);
    const double out = std::accumulate(q[net.outlet].begin(), q[net.outlet].end(), 0.0);
    CHECK(std::abs(out - injected) < 1e-6 * injected);
}

TEST_CASE("watershed precipitation sums upstream rain") {
    const auto net = chain();
    auto rain = zeros(4, 3);
    rain[0][1] = 1;
    rain[1][1] = 2;
    rain[3][1] = 4;
    rain[2][2] = 8;
    const auto p = watershed_precipitation(net, rain);
    CHECK(p[0][1] == 1);
    CHECK(p[1][1] == 3);
    CHECK(p[2][1] == 7);
    CHECK(p[3][1] == 4);
    CHECK(p[2][2] == 8);
    CHECK(p[1][2] == 0);
}

TEST_CASE("generation is deterministic and round-trips through the file formats") {
    fixture::TempDir dir("syn");
    auto c = fixture::small_config(300);
    const auto a = generate(c, 5), b = generate(c, 5), other = generate(c, 6);
    a.write(dir / "a_series.csv", dir / "a_graph.csv");
    b.write(dir / "b_series.csv", dir / "b_graph.csv");
    other.write(dir / "c_series.csv", dir / "c_graph.csv");
    CHECK(read_file_bytes(dir / "a_series.csv") == read_file_bytes(dir / "b_series.csv"));
    CHECK(read_file_bytes(dir / "a_graph.csv") == read_file_bytes(dir / "b_graph.csv"));
    CHECK(read_file_bytes(dir / "a_series.csv") != read_file_bytes(dir / "c_series.csv"));

    const auto series = load_series_file(dir / "a_series.csv");
    const auto graph = load_graph(dir / "a_graph.csv");
    CHECK(series.size() == 8);
    CHECK(graph.fingerprint() == a.graph.fingerprint());
    CHECK(graph.nodes()[graph.outlet_index()].sensor_id == "syn-07");
    for (const auto& s : a.series) {
        const auto& back = series.at(s.sensor_id);
        REQUIRE(back.size() == 300);
        for (std::size_t t = 0; t < 300; ++t) {
            CHECK(*back.streamflow[t] == doctest::Approx(*s.streamflow[t]).epsilon(1e-12));
            CHECK(*back.streamflow[t] >= 0.0);
        }
    }
    for (std::size_t e = 0; e < graph.edges().size(); ++e) CHECK(graph.edges()[e].weight == 1.0 / a.distances_km[e]);

    c.noise = 0;
    const auto clean = generate(c, 5);
    for (std::size_t n = 0; n < 8; ++n)
        for (std::size_t t = 0; t < 300; ++t) CHECK(*clean.series[n].streamflow[t] == clean.clean_discharge[n][t]);
}

TEST_CASE("the outlet is linearly predictable from upstream gauges at lead 6") {
    const auto data = generate(SyntheticConfig{}, 1);
    const std::size_t n = data.series.size(), hours = data.series[0].size(), lead = 6, lags = 12;
    const std::size_t outlet = data.network.outlet;
    auto q = [&](std::size_t node, std::size_t t) { return *data.series[node].streamflow[t]; };
    auto p = [&](std::size_t node, std::size_t t) { return *data.series[node].precipitation[t]; };

    const std::size_t features = n * lags + n * lead + 1;
    std::vector<std::size_t> anchors;
    for (std::size_t t = lags; t + lead < hours; ++t) anchors.push_back(t);
    Eigen::MatrixXd x(anchors.size(), features);
    Eigen::VectorXd y(anchors.size());
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        const std::size_t t = anchors[i];
        std::size_t f = 0;
        for (std::size_t node = 0; node < n; ++node)
            for (std::size_t j = 0; j < lags; ++j) x(i, f++) = q(node, t - j);
        for (std::size_t node = 0; node < n; ++node)
            for (std::size_t j = 1; j <= lead; ++j) x(i, f++) = p(node, t + j);
        x(i, f++) = 1.0;
        y(i) = q(outlet, t + lead);
    }
    const auto fit_rows = static_cast<Eigen::Index>(anchors.size() * 3 / 4);
    const Eigen::VectorXd w =
        x.topRows(fit_rows).colPivHouseholderQr().solve(y.head(fit_rows));
    const Eigen::VectorXd pred = x.bottomRows(x.rows() - fit_rows) * w;
    const Eigen::VectorXd obs = y.tail(y.size() - fit_rows);
    const double score = oracle::nse(std::vector<double>(pred.data(), pred.data() + pred.size()),
                                     std::vector<double>(obs.data(), obs.data() + obs.size()));
    MESSAGE("linear predictor NSE at lead 6: " << score);
    CHECK(score > 0.95);
}

}  // TEST_SUITE
