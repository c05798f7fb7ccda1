#pragma once

// Subcommand front end: generate-synthetic, build-dataset, train, evaluate,
// predict, plot. Values come from an optional JSON config (--config) with
// command-line flags taking precedence.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

namespace flowcast {

struct RunConfig {
    // Paths
    std::string series;
    std::string graph;
    std::string cache;
    std::string checkpoint;
    std::string report;
    std::vector<std::string> reports;  // plot inputs
    std::string svg;
    std::string output;  // predict CSV (empty = stdout)
    std::string log;     // training log (empty = stdout)

    // Dataset
    bool sub_hourly = false;
    bool inverse_distance = true;
    std::size_t t_in = 36;
    std::size_t t_out = 36;
    std::string train_start, validation_start, test_start, test_end;  // ISO-8601, empty = fractional split

    // Model and training
    std::string model = "stream_gconvgru";
    nlohmann::json hyperparameters = nlohmann::json::object();
    std::uint64_t seed = 0;
    double learning_rate = 1e-3;
    double alpha = 0.99;
    double epsilon = 1e-8;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 20;
    std::optional<double> clip_norm;

    // Evaluate / predict
    std::string split = "test";
    std::string anchor;
    std::string title = "NSE by lead hour";

    // Synthetic generator
    nlohmann::json synthetic = nlohmann::json::object();

    nlohmann::json to_json() const;
    /// Overlays the keys present in `j`; unknown keys are rejected.
    void merge_json(const nlohmann::json& j);
};

/// Runs one invocation; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flowcast
