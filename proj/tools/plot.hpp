#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "robust_embed/evaluation.hpp"

namespace robust_embed::cli {

struct ScatterPoint {
    std::string label;
    double x = 0.0;
    double y = 0.0;
};

struct ScatterSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::string note;  // e.g. which corner is better
};

// Standalone SVG; larger y is drawn higher.
std::string render_scatter_svg(const ScatterSpec& spec, const std::vector<ScatterPoint>& points);

struct LabeledReport {
    std::string label;
    MetricReport report;
};

// Reports sharing a label are merged, so one model's metrics and attack
// reports become a single point. Throws std::invalid_argument on an empty set.
std::vector<LabeledReport> load_reports(const std::vector<std::filesystem::path>& files,
                                        const std::vector<std::string>& labels);

// Writes align_uniform.svg and queries_accuracy.svg (each only when some
// report carries its metrics); returns the files written.
std::vector<std::filesystem::path> write_plots(const std::vector<LabeledReport>& reports,
                                               const std::filesystem::path& dir);

}  // namespace robust_embed::cli
