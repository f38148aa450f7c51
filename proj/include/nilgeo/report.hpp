#pragma once

// Table and plot emission: delimiter-separated tables with a header row and
// 17-significant-digit numbers, a content hash for manifests, and a small
// self-contained SVG line plotter.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nilgeo/density.hpp" // format_double, content hash

namespace nilgeo {

class Table {
public:
    explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    Table& begin_row() {
        rows_.emplace_back();
        return *this;
    }
    Table& cell(double v) {
        rows_.back().push_back(format_double(v));
        return *this;
    }
    Table& cell(int v) {
        rows_.back().push_back(std::to_string(v));
        return *this;
    }
    Table& cell(const std::string& v) {
        rows_.back().push_back(v);
        return *this;
    }

    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::vector<std::string>>& rows() const { return rows_; }

    std::string to_csv() const {
        std::ostringstream out;
        for (std::size_t i = 0; i < columns_.size(); ++i) {
            out << (i ? "," : "") << columns_[i];
        }
        out << "\n";
        for (const auto& row : rows_) {
            for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
            out << "\n";
        }
        return out.str();
    }

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

inline std::uint64_t content_hash(const std::string& data) {
    return detail::fnv1a64(data);
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Minimal SVG polyline plot; hermetic, no external plotting dependency.

struct PlotSeries {
    std::string label;
    std::vector<double> x, y;
};

inline std::string svg_line_plot(const std::string& title, const std::vector<PlotSeries>& series,
                                 bool log_x = false, bool log_y = false) {
    const int width = 720, height = 480, margin = 56;
    auto tx = [&](double v) { return log_x ? std::log10(std::max(v, 1e-300)) : v; };
    auto ty = [&](double v) { return log_y ? std::log10(std::max(std::abs(v), 1e-300)) : v; };

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, tx(s.x[i]));
            xmax = std::max(xmax, tx(s.x[i]));
            ymin = std::min(ymin, ty(s.y[i]));
            ymax = std::max(ymax, ty(s.y[i]));
        }
    }
    if (!(xmax > xmin)) xmax = xmin + 1.0;
    if (!(ymax > ymin)) ymax = ymin + 1.0;

    auto px = [&](double v) {
        return margin + (width - 2 * margin) * (tx(v) - xmin) / (xmax - xmin);
    };
    auto py = [&](double v) {
        return height - margin - (height - 2 * margin) * (ty(v) - ymin) / (ymax - ymin);
    };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6g", v);
        return std::string(buf);
    };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
        << title << "</text>\n";
    out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << width - 2 * margin
        << "\" height=\"" << height - 2 * margin << "\" fill=\"none\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << margin << "\" y=\"" << height - margin + 28 << "\" font-size=\"11\">"
        << (log_x ? "log10 " : "") << num(log_x ? std::pow(10, xmin) : xmin) << "</text>\n";
    out << "<text x=\"" << width - margin << "\" y=\"" << height - margin + 28
        << "\" text-anchor=\"end\" font-size=\"11\">" << num(log_x ? std::pow(10, xmax) : xmax)
        << "</text>\n";
    out << "<text x=\"" << margin - 6 << "\" y=\"" << height - margin
        << "\" text-anchor=\"end\" font-size=\"11\">" << num(log_y ? std::pow(10, ymin) : ymin)
        << "</text>\n";
    out << "<text x=\"" << margin - 6 << "\" y=\"" << margin + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << num(log_y ? std::pow(10, ymax) : ymax)
        << "</text>\n";

    int color = 0;
    int legend_y = margin + 16;
    for (const auto& s : series) {
        out << "<polyline fill=\"none\" stroke=\"" << colors[color % 6]
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            out << num(px(s.x[i])) << "," << num(py(s.y[i])) << " ";
        }
        out << "\"/>\n";
        out << "<text x=\"" << width - margin - 6 << "\" y=\"" << legend_y
            << "\" text-anchor=\"end\" font-size=\"12\" fill=\"" << colors[color % 6] << "\">"
            << s.label << "</text>\n";
        legend_y += 16;
        ++color;
    }
    out << "</svg>\n";
    return out.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path);
    out << content;
}

} // namespace nilgeo
