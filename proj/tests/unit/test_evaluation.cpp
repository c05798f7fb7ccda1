#include <doctest.h>

#include <fstream>
#include <regex>

#include "fixtures.hpp"
#include "flowcast/evaluation.hpp"
#include "oracles.hpp"

using namespace flowcast;

namespace {

/// Returns the snapshot's own targets: a perfect forecaster.
class TargetEcho final : public Forecaster {
public:
    explicit TargetEcho(std::size_t horizon) : horizon_(horizon) {}
    ModelKind kind() const override { return ModelKind::StreamGConvGru; }
    std::vector<NamedParameter> parameters() const override { return {}; }
    nlohmann::json hyperparameters() const override { return nlohmann::json::object(); }
    std::unique_ptr<Forecaster> clone() const override { return std::make_unique<TargetEcho>(*this); }
    std::uint64_t graph_fingerprint() const override { return 0; }
    std::size_t horizon() const override { return horizon_; }
    Tensor forward(const Snapshot& s, const ScaledLaplacian&) const override { return s.target_tensor(); }
    bool predicts_all_nodes() const override { return true; }

private:
    std::size_t horizon_;
};

const fixture::Bench& bench() {
    static const fixture::Bench b = fixture::make_bench(fixture::small_config(500), 4);
    return b;
}

std::size_t count_of(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
    return n;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("nse hand examples") {
    const std::vector<double> obs{1, 2, 3};
    CHECK(*nse(obs, obs) == 1.0);
    CHECK(*nse(std::vector<double>{2, 2, 2}, obs) == 0.0);
    CHECK(*nse(std::vector<double>{1, 1, 1}, obs) == -1.5);
    CHECK(!nse(obs, std::vector<double>{4, 4, 4}).has_value());
    CHECK_THROWS(nse(obs, std::vector<double>{1, 2}));
    CHECK_THROWS(nse(std::vector<double>{}, std::vector<double>{}));
}

TEST_CASE("nse matches brute force and is affine invariant") {
    Rng rng(21);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.below(60);
        std::vector<double> m(n), o(n);
        for (std::size_t i = 0; i < n; ++i) {
            o[i] = rng.uniform(0, 500);
            m[i] = o[i] + rng.uniform(-80, 80);
        }
        const double got = *nse(m, o);
        CHECK(std::abs(got - oracle::nse(m, o)) < 1e-12);
        CHECK(got <= 1.0);
        const double a = rng.uniform(0.1, 10) * (rng.uniform() < 0.5 ? -1 : 1), b = rng.uniform(-100, 100);
        std::vector<double> ms(n), os(n);
        for (std::size_t i = 0; i < n; ++i) {
            ms[i] = a * m[i] + b;
            os[i] = a * o[i] + b;
        }
        CHECK(std::abs(*nse(ms, os) - got) < 1e-9);
    }
}

TEST_CASE("per-lead evaluation equals a snapshot-by-snapshot oracle") {
    const auto& b = bench();
    const PersistenceModel model(b.outlet, 36, b.data.graph.fingerprint());
    const auto report = per_lead_evaluation(model, b.splits.test, b.laplacian, b.outlet, b.normalization);
    CHECK(report.model == "persistence");
    CHECK(report.split == "test");
    REQUIRE(report.leads.size() == 36);

    const auto& snaps = b.splits.test.snapshots;
    const auto& n = b.normalization;
    for (std::size_t lead = 1; lead <= 36; ++lead) {
        std::vector<double> m, o;
        for (const auto& s : snaps) {
            const double last = s.input_at(b.outlet, 0, s.t_in - 1);
            m.push_back(denormalize(last, n.q_min, n.q_max));
            o.push_back(denormalize(s.target_at(b.outlet, lead - 1), n.q_min, n.q_max));
        }
        const auto& score = report.leads[lead - 1];
        CHECK(score.lead_hour == lead);
        CHECK(score.samples == snaps.size());
        REQUIRE(score.nse.has_value());
        CHECK(std::abs(*score.nse - oracle::nse(m, o)) < 1e-12);
    }
    CHECK(*report.leads[0].nse > *report.leads[35].nse);
}

TEST_CASE("perfect model scores 1 everywhere") {
    const auto& b = bench();
    const auto report = per_lead_evaluation(TargetEcho(36), b.splits.test, b.laplacian, b.outlet, b.normalization);
    for (const auto& l : report.leads) CHECK(*l.nse == 1.0);
    CHECK(*report.mean_nse(1, 36) == 1.0);
}

TEST_CASE("constant discharge is degenerate at every lead") {
    SensorGraph g({{0, "a"}, {1, "b"}}, {{0, 1, 1.0}}, 1);
    std::map<std::string, SensorSeries> m;
    for (const char* id : {"a", "b"}) {
        SensorSeries s;
        s.sensor_id = id;
        for (int h = 0; h < 120; ++h) {
            s.timestamps.push_back(1317427200 + h * kHour);
            s.streamflow.push_back(42.0);
            s.precipitation.push_back(0.0);
        }
        m[id] = s;
    }
    const NormalizationConstants norm{0.0, 100.0, 0.0, 1.0};
    DatasetSplit split{"test", {}, build_snapshots(m, g, 36, 36, norm)};
    REQUIRE(!split.snapshots.empty());
    const PersistenceModel model(1, 36, g.fingerprint());
    const auto report = per_lead_evaluation(model, split, scaled_laplacian(g), 1, norm);
    for (const auto& l : report.leads) CHECK(!l.nse.has_value());
    CHECK(!report.mean_nse(1, 36).has_value());
    const auto csv = report_csv(report);
    CHECK(csv.find("\n1,,") != std::string::npos);
}

TEST_CASE("report csv round trip") {
    fixture::TempDir dir("report");
    NseReport r{"demo", "test", {}};
    for (std::size_t l = 1; l <= 36; ++l) {
        r.leads.push_back({l, l == 7 ? std::nullopt : std::optional<double>(1.0 / double(l) - 0.3), 50});
    }
    write_report_csv(r, dir / "demo.csv");
    std::ifstream in(dir / "demo.csv");
    std::string line;
    std::size_t lines = 0;
    std::getline(in, line);
    CHECK(line == "lead_hour,nse,samples");
    ++lines;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 37);

    const auto back = read_report_csv(dir / "demo.csv");
    CHECK(back.model == "demo");
    REQUIRE(back.leads.size() == 36);
    for (std::size_t i = 0; i < 36; ++i) {
        CHECK(back.leads[i].nse == r.leads[i].nse);
        CHECK(back.leads[i].samples == 50);
    }
    CHECK(read_report_csv(dir / "demo.csv", "other").model == "other");
    CHECK(*r.mean_nse(6, 8) == doctest::Approx((1.0 / 6 + 1.0 / 8) / 2 - 0.3));
}

TEST_CASE("svg has one polyline run per model plus a legend") {
    std::vector<NseReport> reports;
    for (const char* name : {"stream_gconvgru", "persistence", "conv_bigru"}) {
        NseReport r{name, "test", {}};
        for (std::size_t l = 1; l <= 36; ++l) r.leads.push_back({l, 0.9 - 0.01 * double(l), 10});
        reports.push_back(r);
    }
    const auto svg = render_svg(reports, "demo");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(count_of(svg, "<g class=\"series\"") == 3);
    CHECK(count_of(svg, "<polyline") == 3);
    CHECK(svg.find("id=\"legend\"") != std::string::npos);
    for (const auto& r : reports) CHECK(svg.find(">" + r.model + "<") != std::string::npos);

    reports[1].leads[10].nse.reset();
    CHECK(count_of(render_svg(reports), "<polyline") == 4);
    fixture::TempDir dir("svg");
    write_svg(reports, dir / "c.svg");
    CHECK(std::filesystem::file_size(dir / "c.svg") > 0);
    CHECK_THROWS(write_svg(reports, dir / "missing" / "c.svg"));
}

}  // TEST_SUITE
