#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace resx {

// Shortest text that identifies the double: 17 significant digits.
std::string fmt17(double v);
std::string fmt_opt(const std::optional<double>& v);  // empty string when absent

// SHA-1 of raw bytes, lowercase hex.
std::string sha1_hex(const std::string& bytes);
// Hash of "blob <len>\0<bytes>", identical to `git hash-object`.
std::string git_blob_hash(const std::string& bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// One named polyline for the hand-emitted SVG line charts.
struct ChartSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

struct ChartOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
};

// Minimal self-contained SVG: axes, tick labels, one polyline per series,
// legend. Non-finite points are dropped; log axes drop non-positive values.
std::string render_line_chart(const ChartOptions& options,
                              const std::vector<ChartSeries>& series);

}  // namespace resx
