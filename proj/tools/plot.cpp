#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace robust_embed::cli {

namespace {

constexpr double kWidth = 560, kHeight = 420;
constexpr double kLeft = 80, kRight = 30, kTop = 50, kBottom = 70;

std::string escape(const std::string& s) {
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

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

struct Range {
    double lo, hi;
};

Range padded(double lo, double hi) {
    if (hi - lo < 1e-12) {
        const double pad = std::max(std::abs(lo) * 0.1, 0.5);
        return {lo - pad, hi + pad};
    }
    const double pad = 0.1 * (hi - lo);
    return {lo - pad, hi + pad};
}

}  // namespace

std::string render_scatter_svg(const ScatterSpec& spec, const std::vector<ScatterPoint>& points) {
    if (points.empty()) throw std::invalid_argument("scatter plot needs at least one point");
    auto [xmin, xmax] = std::minmax_element(points.begin(), points.end(),
                                            [](const auto& a, const auto& b) { return a.x < b.x; });
    auto [ymin, ymax] = std::minmax_element(points.begin(), points.end(),
                                            [](const auto& a, const auto& b) { return a.y < b.y; });
    const Range xr = padded(xmin->x, xmax->x), yr = padded(ymin->y, ymax->y);
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto sx = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto sy = [&](double y) { return kTop + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(spec.title)
        << "</text>\n";
    svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0, fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        svg << "<line x1=\"" << sx(fx) << "\" y1=\"" << kTop + ph << "\" x2=\"" << sx(fx) << "\" y2=\"" << kTop + ph + 5
            << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << sx(fx) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">" << fmt(fx)
            << "</text>\n";
        svg << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << sy(fy) << "\" x2=\"" << kLeft << "\" y2=\"" << sy(fy)
            << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << sy(fy) + 4 << "\" text-anchor=\"end\">" << fmt(fy)
            << "</text>\n";
    }
    svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 30 << "\" text-anchor=\"middle\">"
        << escape(spec.x_label) << "</text>\n";
    svg << "<text transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
        << escape(spec.y_label) << "</text>\n";
    if (!spec.note.empty()) {
        svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\" fill=\"#555\">"
            << escape(spec.note) << "</text>\n";
    }
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        const char* color = palette[i % std::size(palette)];
        svg << "<circle class=\"point\" cx=\"" << sx(p.x) << "\" cy=\"" << sy(p.y) << "\" r=\"5\" fill=\"" << color
            << "\"><title>" << escape(p.label) << " (" << fmt(p.x) << ", " << fmt(p.y) << ")</title></circle>\n";
        svg << "<text class=\"label\" x=\"" << sx(p.x) + 8 << "\" y=\"" << sy(p.y) - 6 << "\" fill=\"" << color << "\">"
            << escape(p.label) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::vector<LabeledReport> load_reports(const std::vector<std::filesystem::path>& files,
                                        const std::vector<std::string>& labels) {
    if (files.empty()) throw std::invalid_argument("plot: no report files given");
    if (!labels.empty() && labels.size() != files.size()) {
        throw std::invalid_argument("plot: --labels needs one label per report");
    }
    std::vector<LabeledReport> out;
    for (std::size_t i = 0; i < files.size(); ++i) {
        std::string label;
        if (!labels.empty()) {
            label = labels[i];
        } else {
            // <run>/<command>/<report>.txt -> <run>
            const auto run = files[i].parent_path().parent_path().filename().string();
            label = run.empty() ? files[i].stem().string() : run;
        }
        const MetricReport r = MetricReport::read(files[i]);
        auto it = std::find_if(out.begin(), out.end(), [&](const auto& lr) { return lr.label == label; });
        if (it == out.end()) {
            out.push_back({label, r});
        } else {
            for (const auto& [k, v] : r.values()) it->report.set(k, v);
        }
    }
    return out;
}

std::vector<std::filesystem::path> write_plots(const std::vector<LabeledReport>& reports,
                                               const std::filesystem::path& dir) {
    std::vector<ScatterPoint> au, qa;
    for (const auto& r : reports) {
        if (r.report.contains("alignment") && r.report.contains("uniformity")) {
            au.push_back({r.label, r.report.at("uniformity"), r.report.at("alignment")});
        }
        if (r.report.contains("mean_queries") && r.report.contains("accuracy_reduction")) {
            qa.push_back({r.label, r.report.at("mean_queries"), r.report.at("accuracy_reduction")});
        }
    }
    if (au.empty() && qa.empty()) {
        throw std::runtime_error(
            "plot: no report carries alignment/uniformity or mean_queries/accuracy_reduction");
    }
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    auto emit = [&](const std::string& name, const ScatterSpec& spec, const std::vector<ScatterPoint>& pts) {
        if (pts.empty()) return;
        const auto file = dir / name;
        std::ofstream out(file);
        if (!out) throw std::runtime_error("cannot write " + file.string());
        out << render_scatter_svg(spec, pts);
        written.push_back(file);
    };
    emit("align_uniform.svg",
         {"Alignment vs uniformity", "uniformity (lower is better)", "alignment (lower is better)",
          "lower-left is better"},
         au);
    emit("queries_accuracy.svg",
         {"Attack cost vs damage", "mean queries per attack", "accuracy reduction (lower is better)",
          "lower-right is better: more queries needed, less accuracy lost"},
         qa);
    return written;
}

}  // namespace robust_embed::cli
