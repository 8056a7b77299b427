#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "toalign/errors.hpp"
#include "toalign/harness.hpp"

namespace toalign {

namespace {

constexpr int kWidth = 680;
constexpr int kHeight = 420;
constexpr int kLeft = 64;
constexpr int kRight = 190;   // legend gutter
constexpr int kTop = 24;
constexpr int kBottom = 52;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

std::string render_curves_svg(const std::vector<ExperimentRecord>& records) {
    // Seed-mean accuracy per method and epoch.
    std::map<std::string, std::vector<std::vector<double>>> grouped;
    for (const auto& r : records) {
        if (r.epochs.empty()) continue;
        std::vector<double> accs;
        accs.reserve(r.epochs.size());
        for (const auto& e : r.epochs) accs.push_back(e.target_acc);
        grouped[r.method].push_back(std::move(accs));
    }

    std::map<std::string, std::vector<double>> curves;
    std::size_t max_epochs = 0;
    for (const auto& [method, runs] : grouped) {
        const std::size_t n = runs.front().size();
        for (const auto& run : runs) {
            if (run.size() != n) {
                throw ContractError("curves: mixed epoch counts for method " + method);
            }
        }
        std::vector<double> mean(n, 0.0);
        for (const auto& run : runs) {
            for (std::size_t i = 0; i < n; ++i) mean[i] += run[i];
        }
        for (auto& v : mean) v /= static_cast<double>(runs.size());
        max_epochs = std::max(max_epochs, n);
        curves[method] = std::move(mean);
    }

    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    const double x_span = max_epochs > 1 ? static_cast<double>(max_epochs - 1) : 1.0;
    auto x_at = [&](std::size_t epoch) { return kLeft + plot_w * static_cast<double>(epoch) / x_span; };
    // Higher accuracy sits higher on the plot (smaller SVG y).
    auto y_at = [&](double acc) { return kTop + plot_h * (1.0 - acc); };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    svg << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";

    // axes
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
        << kTop + plot_h << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w
        << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        const double acc = tick / 4.0;
        const double y = y_at(acc);
        svg << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << fmt(y) << "\" x2=\"" << kLeft
            << "\" y2=\"" << fmt(y) << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt(y + 4)
            << "\" font-size=\"12\" text-anchor=\"end\">" << fmt(acc) << "</text>\n";
    }
    const std::size_t x_ticks = std::min<std::size_t>(max_epochs > 0 ? max_epochs - 1 : 0, 8);
    for (std::size_t tick = 0; tick <= x_ticks && max_epochs > 1; ++tick) {
        const std::size_t epoch = tick * (max_epochs - 1) / std::max<std::size_t>(1, x_ticks);
        const double x = x_at(epoch);
        svg << "<line x1=\"" << fmt(x) << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << fmt(x)
            << "\" y2=\"" << kTop + plot_h + 4 << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << fmt(x) << "\" y=\"" << kTop + plot_h + 18
            << "\" font-size=\"12\" text-anchor=\"middle\">" << epoch << "</text>\n";
    }
    svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 14
        << "\" font-size=\"13\" text-anchor=\"middle\">epoch</text>\n";
    svg << "<text x=\"16\" y=\"" << kTop + plot_h / 2
        << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << kTop + plot_h / 2 << ")\">target accuracy</text>\n";

    // curves + legend
    int color = 0;
    int legend_row = 0;
    for (const auto& [method, mean] : curves) {
        const char* stroke = kPalette[color % 6];
        svg << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < mean.size(); ++i) {
            if (i) svg << ' ';
            svg << fmt(x_at(i)) << ',' << fmt(y_at(mean[i]));
        }
        svg << "\"/>\n";

        const double ly = kTop + 10 + 22 * legend_row;
        const double lx = kWidth - kRight + 14;
        svg << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(lx + 24)
            << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << stroke << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << fmt(lx + 30) << "\" y=\"" << fmt(ly + 4)
            << "\" font-size=\"12\">" << method << "</text>\n";
        ++color;
        ++legend_row;
    }

    svg << "</svg>\n";
    return svg.str();
}

void emit_svg_curves(const std::vector<ExperimentRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << render_curves_svg(records);
    if (!out) throw DataError("failed writing " + path);
}

}  // namespace toalign
