#include "flowcast/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace flowcast {

std::optional<double> nse(std::span<const double> modeled, std::span<const double> observed) {
    if (modeled.size() != observed.size()) {
        throw std::invalid_argument("nse: " + std::to_string(modeled.size()) + " modeled vs " +
                                    std::to_string(observed.size()) + " observed values");
    }
    if (observed.empty()) throw std::invalid_argument("nse: empty sequences");
    double mean = 0.0;
    for (double o : observed) mean += o;
    mean /= static_cast<double>(observed.size());
    double err = 0.0, var = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        err += (modeled[i] - observed[i]) * (modeled[i] - observed[i]);
        var += (observed[i] - mean) * (observed[i] - mean);
    }
    if (var == 0.0) return std::nullopt;
    return 1.0 - err / var;
}

std::optional<double> NseReport::mean_nse(std::size_t first, std::size_t last) const {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& l : leads) {
        if (l.lead_hour < first || l.lead_hour > last || !l.nse) continue;
        total += *l.nse;
        ++count;
    }
    if (count == 0) return std::nullopt;
    return total / static_cast<double>(count);
}

NseReport nse_by_lead(const std::vector<std::vector<double>>& modeled,
                      const std::vector<std::vector<double>>& observed, std::string model, std::string split) {
    if (modeled.size() != observed.size()) throw std::invalid_argument("nse_by_lead: sample count mismatch");
    if (modeled.empty()) throw std::invalid_argument("nse_by_lead: no samples");
    const std::size_t horizon = observed.front().size();
    for (std::size_t s = 0; s < modeled.size(); ++s) {
        if (modeled[s].size() != horizon || observed[s].size() != horizon) {
            throw std::invalid_argument("nse_by_lead: sample " + std::to_string(s) + " has the wrong horizon");
        }
    }
    NseReport report{std::move(model), std::move(split), {}};
    std::vector<double> m(modeled.size()), o(modeled.size());
    for (std::size_t l = 0; l < horizon; ++l) {
        for (std::size_t s = 0; s < modeled.size(); ++s) {
            m[s] = modeled[s][l];
            o[s] = observed[s][l];
        }
        report.leads.push_back({l + 1, nse(m, o), modeled.size()});
    }
    return report;
}

OutletForecasts collect_outlet_forecasts(const Forecaster& model, std::span<const Snapshot> snapshots,
                                         const ScaledLaplacian& laplacian, std::size_t outlet,
                                         const NormalizationConstants& normalization) {
    OutletForecasts out;
    out.modeled.reserve(snapshots.size());
    out.observed.reserve(snapshots.size());
    for (const auto& s : snapshots) {
        auto pred = model.predict_outlet(s, laplacian, outlet);
        for (auto& v : pred) v = denormalize(v, normalization.q_min, normalization.q_max);
        auto obs = s.outlet_target(outlet);
        for (auto& v : obs) v = denormalize(v, normalization.q_min, normalization.q_max);
        out.modeled.push_back(std::move(pred));
        out.observed.push_back(std::move(obs));
    }
    return out;
}

NseReport per_lead_evaluation(const Forecaster& model, const DatasetSplit& split, const ScaledLaplacian& laplacian,
                              std::size_t outlet, const NormalizationConstants& normalization) {
    if (split.snapshots.empty()) throw std::invalid_argument("per_lead_evaluation: split '" + split.name + "' is empty");
    auto f = collect_outlet_forecasts(model, split.snapshots, laplacian, outlet, normalization);
    return nse_by_lead(f.modeled, f.observed, std::string(model_kind_name(model.kind())), split.name);
}

std::string report_csv(const NseReport& report) {
    std::ostringstream os;
    os << "lead_hour,nse,samples\n";
    char buf[40];
    for (const auto& l : report.leads) {
        os << l.lead_hour << ',';
        if (l.nse) {
            std::snprintf(buf, sizeof buf, "%.17g", *l.nse);
            os << buf;
        }
        os << ',' << l.samples << '\n';
    }
    return os.str();
}

void write_report_csv(const NseReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report " + path.string());
    out << report_csv(report);
    if (!out) throw std::runtime_error("failed writing report " + path.string());
}

NseReport read_report_csv(const std::filesystem::path& path, std::string model_name) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read report " + path.string());
    NseReport r;
    r.model = model_name.empty() ? path.stem().string() : std::move(model_name);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != "lead_hour,nse,samples") {
                throw std::runtime_error(path.string() + ":1: expected header lead_hour,nse,samples");
            }
            continue;
        }
        if (line.empty()) continue;
        const auto c1 = line.find(','), c2 = line.find(',', c1 == std::string::npos ? 0 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
        }
        try {
            LeadScore s;
            s.lead_hour = std::stoul(line.substr(0, c1));
            const auto cell = line.substr(c1 + 1, c2 - c1 - 1);
            if (!cell.empty()) s.nse = std::stod(cell);
            s.samples = std::stoul(line.substr(c2 + 1));
            r.leads.push_back(s);
        } catch (const std::logic_error&) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed row '" + line + "'");
        }
    }
    return r;
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string render_svg(std::span<const NseReport> reports, const std::string& title) {
    constexpr double width = 720, height = 420, left = 60, right = 170, top = 40, bottom = 50;
    const double plot_w = width - left - right, plot_h = height - top - bottom;

    std::size_t max_lead = 1;
    double lo = 0.0;
    for (const auto& r : reports) {
        for (const auto& l : r.leads) {
            max_lead = std::max(max_lead, l.lead_hour);
            if (l.nse) lo = std::min(lo, *l.nse);
        }
    }
    lo = std::max(std::floor(lo * 4.0) / 4.0, -2.0);
    const double hi = 1.0;
    auto x_of = [&](double lead) { return left + (max_lead == 1 ? 0.0 : (lead - 1) / double(max_lead - 1)) * plot_w; };
    auto y_of = [&](double v) { return top + (hi - std::clamp(v, lo, hi)) / (hi - lo) * plot_h; };

    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       << "font-size=\"15\">" << xml_escape(title) << "</text>\n";

    os << "<g id=\"axes\" stroke=\"#444\" stroke-width=\"1\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
       << top + plot_h << "\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h << "\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = lo + (hi - lo) * i / 4.0;
        os << "<text stroke=\"none\" x=\"" << left - 6 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\">" << v
           << "</text>\n";
    }
    const std::size_t step = max_lead > 12 ? 6 : 1;
    for (std::size_t lead = 1; lead <= max_lead; lead += (lead == 1 && step > 1 ? step - 1 : step)) {
        os << "<text stroke=\"none\" x=\"" << x_of(double(lead)) << "\" y=\"" << top + plot_h + 16
           << "\" text-anchor=\"middle\">" << lead << "</text>\n";
    }
    os << "<text stroke=\"none\" x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
       << "\" text-anchor=\"middle\">lead hour</text>\n";
    os << "<text stroke=\"none\" transform=\"translate(16," << top + plot_h / 2
       << ") rotate(-90)\" text-anchor=\"middle\">NSE</text>\n";
    os << "</g>\n";

    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        const char* color = kPalette[i % std::size(kPalette)];
        os << "<g class=\"series\" data-model=\"" << xml_escape(r.model) << "\" fill=\"none\" stroke=\"" << color
           << "\" stroke-width=\"2\">\n";
        std::vector<std::string> runs;
        std::ostringstream pts;
        pts.setf(std::ios::fixed);
        pts.precision(2);
        bool open = false;
        for (const auto& l : r.leads) {
            if (!l.nse) {
                if (open) runs.push_back(pts.str());
                pts.str("");
                open = false;
                continue;
            }
            pts << (open ? " " : "") << x_of(double(l.lead_hour)) << ',' << y_of(*l.nse);
            open = true;
        }
        if (open) runs.push_back(pts.str());
        for (const auto& run : runs) os << "<polyline points=\"" << run << "\"/>\n";
        os << "</g>\n";
    }

    os << "<g id=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const double y = top + 10 + 20.0 * double(i);
        const double x = left + plot_w + 15;
        os << "<line x1=\"" << x << "\" y1=\"" << y << "\" x2=\"" << x + 24 << "\" y2=\"" << y << "\" stroke=\""
           << kPalette[i % std::size(kPalette)] << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << x + 30 << "\" y=\"" << y + 4 << "\">" << xml_escape(reports[i].model) << "</text>\n";
    }
    os << "</g>\n</svg>\n";
    return os.str();
}

void write_svg(std::span<const NseReport> reports, const std::filesystem::path& path, const std::string& title) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write chart " + path.string());
    out << render_svg(reports, title);
    if (!out) throw std::runtime_error("failed writing chart " + path.string());
}

}  // namespace flowcast
