#include "resx/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace resx {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v) {
    return v.has_value() ? fmt17(*v) : std::string();
}

namespace {

std::uint32_t rol(std::uint32_t value, unsigned bits) {
    return (value << bits) | (value >> (32 - bits));
}

}  // namespace

std::string sha1_hex(const std::string& bytes) {
    std::uint32_t h[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};

    std::string msg = bytes;
    const std::uint64_t bit_len = static_cast<std::uint64_t>(bytes.size()) * 8;
    msg.push_back(static_cast<char>(0x80));
    while (msg.size() % 64 != 56) msg.push_back('\0');
    for (int i = 7; i >= 0; --i) msg.push_back(static_cast<char>((bit_len >> (8 * i)) & 0xFF));

    std::uint32_t w[80];
    for (std::size_t chunk = 0; chunk < msg.size(); chunk += 64) {
        for (int t = 0; t < 16; ++t) {
            w[t] = (static_cast<std::uint32_t>(static_cast<unsigned char>(msg[chunk + 4 * t])) << 24) |
                   (static_cast<std::uint32_t>(static_cast<unsigned char>(msg[chunk + 4 * t + 1])) << 16) |
                   (static_cast<std::uint32_t>(static_cast<unsigned char>(msg[chunk + 4 * t + 2])) << 8) |
                   static_cast<std::uint32_t>(static_cast<unsigned char>(msg[chunk + 4 * t + 3]));
        }
        for (int t = 16; t < 80; ++t) {
            w[t] = rol(w[t - 3] ^ w[t - 8] ^ w[t - 14] ^ w[t - 16], 1);
        }
        std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
        for (int t = 0; t < 80; ++t) {
            std::uint32_t f, k;
            if (t < 20) {
                f = (b & c) | (~b & d);
                k = 0x5A827999u;
            } else if (t < 40) {
                f = b ^ c ^ d;
                k = 0x6ED9EBA1u;
            } else if (t < 60) {
                f = (b & c) | (b & d) | (c & d);
                k = 0x8F1BBCDCu;
            } else {
                f = b ^ c ^ d;
                k = 0xCA62C1D6u;
            }
            std::uint32_t temp = rol(a, 5) + f + e + k + w[t];
            e = d;
            d = c;
            c = rol(b, 30);
            b = a;
            a = temp;
        }
        h[0] += a;
        h[1] += b;
        h[2] += c;
        h[3] += d;
        h[4] += e;
    }

    char out[41];
    std::snprintf(out, sizeof out, "%08x%08x%08x%08x%08x", h[0], h[1], h[2], h[3], h[4]);
    return out;
}

std::string git_blob_hash(const std::string& bytes) {
    std::string blob = "blob " + std::to_string(bytes.size());
    blob.push_back('\0');
    blob += bytes;
    return sha1_hex(blob);
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open file: " + path);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open file for writing: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw std::runtime_error("short write to " + path);
}

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 480.0;
constexpr double kMarginLeft = 72.0;
constexpr double kMarginRight = 24.0;
constexpr double kMarginTop = 40.0;
constexpr double kMarginBottom = 56.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

std::string render_line_chart(const ChartOptions& options,
                              const std::vector<ChartSeries>& series) {
    auto usable = [&](double x, double y) {
        if (!std::isfinite(x) || !std::isfinite(y)) return false;
        if (options.log_x && x <= 0.0) return false;
        if (options.log_y && y <= 0.0) return false;
        return true;
    };
    auto tx = [&](double x) { return options.log_x ? std::log10(x) : x; };
    auto ty = [&](double y) { return options.log_y ? std::log10(y) : y; };

    double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
    double min_y = std::numeric_limits<double>::infinity(), max_y = -min_y;
    for (const ChartSeries& s : series) {
        for (auto [x, y] : s.points) {
            if (!usable(x, y)) continue;
            min_x = std::min(min_x, tx(x));
            max_x = std::max(max_x, tx(x));
            min_y = std::min(min_y, ty(y));
            max_y = std::max(max_y, ty(y));
        }
    }
    if (!(min_x <= max_x)) {  // no drawable point
        min_x = 0.0;
        max_x = 1.0;
        min_y = 0.0;
        max_y = 1.0;
    }
    if (max_x == min_x) {
        min_x -= 0.5;
        max_x += 0.5;
    }
    if (max_y == min_y) {
        min_y -= 0.5;
        max_y += 0.5;
    }

    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double plot_h = kHeight - kMarginTop - kMarginBottom;
    auto px = [&](double x) { return kMarginLeft + (tx(x) - min_x) / (max_x - min_x) * plot_w; };
    auto py = [&](double y) { return kHeight - kMarginBottom - (ty(y) - min_y) / (max_y - min_y) * plot_h; };

    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
           num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
    svg += "<rect width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\" fill=\"white\"/>\n";
    svg += "<text x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
           xml_escape(options.title) + "</text>\n";

    // axes
    svg += "<line x1=\"" + num(kMarginLeft) + "\" y1=\"" + num(kHeight - kMarginBottom) +
           "\" x2=\"" + num(kWidth - kMarginRight) + "\" y2=\"" + num(kHeight - kMarginBottom) +
           "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + num(kMarginLeft) + "\" y1=\"" + num(kMarginTop) + "\" x2=\"" +
           num(kMarginLeft) + "\" y2=\"" + num(kHeight - kMarginBottom) + "\" stroke=\"black\"/>\n";

    // tick labels at the corners of the data range
    auto tick_text = [&](double v, bool log_axis) {
        return log_axis ? ("1e" + num(v)) : num(v);
    };
    svg += "<text x=\"" + num(kMarginLeft) + "\" y=\"" + num(kHeight - kMarginBottom + 18) +
           "\" font-size=\"11\">" + tick_text(min_x, options.log_x) + "</text>\n";
    svg += "<text x=\"" + num(kWidth - kMarginRight) + "\" y=\"" +
           num(kHeight - kMarginBottom + 18) + "\" text-anchor=\"end\" font-size=\"11\">" +
           tick_text(max_x, options.log_x) + "</text>\n";
    svg += "<text x=\"" + num(kMarginLeft - 6) + "\" y=\"" + num(kHeight - kMarginBottom) +
           "\" text-anchor=\"end\" font-size=\"11\">" + tick_text(min_y, options.log_y) +
           "</text>\n";
    svg += "<text x=\"" + num(kMarginLeft - 6) + "\" y=\"" + num(kMarginTop + 4) +
           "\" text-anchor=\"end\" font-size=\"11\">" + tick_text(max_y, options.log_y) +
           "</text>\n";

    // axis labels
    svg += "<text x=\"" + num(kMarginLeft + plot_w / 2) + "\" y=\"" + num(kHeight - 12) +
           "\" text-anchor=\"middle\" font-size=\"13\">" + xml_escape(options.x_label) +
           "</text>\n";
    svg += "<text x=\"16\" y=\"" + num(kMarginTop + plot_h / 2) +
           "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 " +
           num(kMarginTop + plot_h / 2) + ")\">" + xml_escape(options.y_label) + "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % (sizeof kPalette / sizeof kPalette[0])];
        std::string pts;
        for (auto [x, y] : series[s].points) {
            if (!usable(x, y)) continue;
            if (!pts.empty()) pts += " ";
            pts += num(px(x)) + "," + num(py(y));
        }
        svg += "<polyline fill=\"none\" stroke=\"";
        svg += color;
        svg += "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        const double ly = kMarginTop + 16.0 * static_cast<double>(s);
        svg += "<line x1=\"" + num(kWidth - kMarginRight - 120) + "\" y1=\"" + num(ly) +
               "\" x2=\"" + num(kWidth - kMarginRight - 100) + "\" y2=\"" + num(ly) +
               "\" stroke=\"";
        svg += color;
        svg += "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + num(kWidth - kMarginRight - 94) + "\" y=\"" + num(ly + 4) +
               "\" font-size=\"11\">" + xml_escape(series[s].name) + "</text>\n";
    }

    svg += "</svg>\n";
    return svg;
}

}  // namespace resx
