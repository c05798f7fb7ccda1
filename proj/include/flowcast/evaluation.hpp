#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowcast/dataset.hpp"
#include "flowcast/graph.hpp"
#include "flowcast/models.hpp"

namespace flowcast {

/// 1 - sum (m - o)^2 / sum (o - mean(o))^2. nullopt when the observations have
/// zero variance (NSE undefined).
std::optional<double> nse(std::span<const double> modeled, std::span<const double> observed);

struct LeadScore {
    std::size_t lead_hour = 0;  // 1-based
    std::optional<double> nse;  // nullopt = degenerate
    std::size_t samples = 0;
};

struct NseReport {
    std::string model;
    std::string split;
    std::vector<LeadScore> leads;

    /// Mean NSE over leads [first, last] (1-based, inclusive), skipping
    /// degenerate leads; nullopt if none remain.
    std::optional<double> mean_nse(std::size_t first, std::size_t last) const;
};

/// modeled[s][l], observed[s][l] in physical units; one NSE per lead l.
NseReport nse_by_lead(const std::vector<std::vector<double>>& modeled,
                      const std::vector<std::vector<double>>& observed, std::string model, std::string split);

/// Outlet forecasts for every snapshot, denormalized to cfs, with the matching
/// observed outlet hydrographs.
struct OutletForecasts {
    std::vector<std::vector<double>> modeled;
    std::vector<std::vector<double>> observed;
};

OutletForecasts collect_outlet_forecasts(const Forecaster& model, std::span<const Snapshot> snapshots,
                                         const ScaledLaplacian& laplacian, std::size_t outlet,
                                         const NormalizationConstants& normalization);

NseReport per_lead_evaluation(const Forecaster& model, const DatasetSplit& split, const ScaledLaplacian& laplacian,
                              std::size_t outlet, const NormalizationConstants& normalization);

/// `lead_hour,nse,samples`, empty nse cell for degenerate leads.
std::string report_csv(const NseReport& report);
void write_report_csv(const NseReport& report, const std::filesystem::path& path);
NseReport read_report_csv(const std::filesystem::path& path, std::string model_name = {});

/// Line chart of NSE against lead hour, one polyline run per model (degenerate
/// leads break the line) plus a legend.
std::string render_svg(std::span<const NseReport> reports, const std::string& title = "NSE by lead hour");
void write_svg(std::span<const NseReport> reports, const std::filesystem::path& path,
               const std::string& title = "NSE by lead hour");

}  // namespace flowcast
