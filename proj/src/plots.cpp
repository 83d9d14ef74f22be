#include "lager/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "lager/errors.hpp"

namespace lager::plots {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("{}: cannot open for writing", path.string()));
    out << text;
    if (!out) throw IoError(fmt::format("{}: write failed", path.string()));
}

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

std::string coord(double v) { return fmt::format("{:.2f}", v); }

}  // namespace

std::string format_number(double v) {
    if (!std::isfinite(v)) return "nan";
    return fmt::format("{}", v);
}

void write_line_plot(const std::filesystem::path& dir, const std::string& stem, const std::string& title,
                     const std::string& x_label, const std::string& y_label, const std::vector<Series>& series) {
    std::filesystem::create_directories(dir);

    // Wide CSV when every series shares the x positions, long otherwise.
    bool shared_x = true;
    for (const auto& s : series) shared_x = shared_x && s.x == series.front().x;
    std::ostringstream csv;
    if (shared_x) {
        csv << x_label;
        for (const auto& s : series) csv << ',' << s.name;
        csv << '\n';
        const std::size_t rows = series.empty() ? 0 : series.front().x.size();
        for (std::size_t i = 0; i < rows; ++i) {
            csv << format_number(series.front().x[i]);
            for (const auto& s : series) {
                csv << ',';
                if (i < s.y.size() && s.y[i]) csv << format_number(*s.y[i]);
            }
            csv << '\n';
        }
    } else {
        csv << "series," << x_label << ',' << y_label << '\n';
        for (const auto& s : series) {
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                csv << s.name << ',' << format_number(s.x[i]) << ',';
                if (i < s.y.size() && s.y[i]) csv << format_number(*s.y[i]);
                csv << '\n';
            }
        }
    }
    write_file(dir / (stem + ".csv"), csv.str());

    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            if (i < s.y.size() && s.y[i]) {
                ymin = std::min(ymin, *s.y[i]);
                ymax = std::max(ymax, *s.y[i]);
            }
        }
    }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
    if (!std::isfinite(ymin)) ymin = 0, ymax = 1;
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymin -= 0.5, ymax += 0.5;

    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return kTop + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

    std::ostringstream svg;
    svg << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">)",
                       kWidth, kHeight, kWidth, kHeight)
        << '\n';
    svg << R"(<rect width="100%" height="100%" fill="white"/>)" << '\n';
    svg << fmt::format(R"(<text x="{}" y="22" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>)",
                       coord(kLeft + pw / 2), escape(title))
        << '\n';
    svg << fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>)", coord(kLeft),
                       coord(kTop), coord(pw), coord(ph))
        << '\n';
    for (int t = 0; t <= 4; ++t) {
        const double yv = ymin + (ymax - ymin) * t / 4.0;
        svg << fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{:.3g}</text>)",
                           coord(kLeft - 6), coord(py(yv) + 3), yv)
            << '\n';
    }
    std::vector<double> ticks;
    if (!series.empty() && series.front().x.size() <= 16) {
        ticks = series.front().x;
    } else {
        for (int t = 0; t <= 4; ++t) ticks.push_back(xmin + (xmax - xmin) * t / 4.0);
    }
    {
        for (double xv : ticks) {
            svg << fmt::format(
                       R"(<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{:.4g}</text>)",
                       coord(px(xv)), coord(kTop + ph + 14), xv)
                << '\n';
        }
    }
    svg << fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>)",
                       coord(kLeft + pw / 2), coord(kHeight - 12), escape(x_label))
        << '\n';
    svg << fmt::format(
               R"svg(<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>)svg",
               coord(kTop + ph / 2), coord(kTop + ph / 2), escape(y_label))
        << '\n';

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = kPalette[k % std::size(kPalette)];
        std::string points;
        auto flush = [&] {
            if (!points.empty())
                svg << fmt::format(R"(<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>)", color,
                                   points)
                    << '\n';
            points.clear();
        };
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (i < s.y.size() && s.y[i]) {
                if (!points.empty()) points += ' ';
                points += coord(px(s.x[i])) + "," + coord(py(*s.y[i]));
            } else {
                flush();
            }
        }
        flush();
        const double ly = kTop + 14.0 * static_cast<double>(k);
        svg << fmt::format(R"(<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"/>)",
                           coord(kLeft + pw + 10), coord(ly), coord(kLeft + pw + 30), coord(ly), color)
            << '\n';
        svg << fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="10">{}</text>)",
                           coord(kLeft + pw + 34), coord(ly + 3), escape(s.name))
            << '\n';
    }
    svg << "</svg>\n";
    write_file(dir / (stem + ".svg"), svg.str());
}

void write_heatmap(const std::filesystem::path& dir, const std::string& stem, const std::string& title,
                   const std::vector<std::vector<double>>& matrix) {
    std::filesystem::create_directories(dir);
    std::ostringstream csv;
    csv << "row,col,value\n";
    for (std::size_t i = 0; i < matrix.size(); ++i) {
        for (std::size_t j = 0; j < matrix[i].size(); ++j)
            csv << i << ',' << j << ',' << format_number(matrix[i][j]) << '\n';
    }
    write_file(dir / (stem + ".csv"), csv.str());

    double lo = INFINITY, hi = -INFINITY;
    for (const auto& row : matrix) {
        for (double v : row) lo = std::min(lo, v), hi = std::max(hi, v);
    }
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    const double span = hi > lo ? hi - lo : 1.0;

    const std::size_t n = matrix.size();
    const double side = 360.0, cell = n > 0 ? side / static_cast<double>(n) : side;
    const double left = 50, top = 40;
    std::ostringstream svg;
    svg << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">)",
                       side + 120, side + 80, side + 120, side + 80)
        << '\n';
    svg << R"(<rect width="100%" height="100%" fill="white"/>)" << '\n';
    svg << fmt::format(R"(<text x="{}" y="22" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>)",
                       coord(left + side / 2), escape(title))
        << '\n';
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < matrix[i].size(); ++j) {
            const double t = (matrix[i][j] - lo) / span;
            const int r = static_cast<int>(std::lround(255 * (1.0 - t) + 8 * t));
            const int g = static_cast<int>(std::lround(255 * (1.0 - t) + 48 * t));
            const int b = static_cast<int>(std::lround(255 * (1.0 - t) + 107 * t));
            svg << fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="#{:02x}{:02x}{:02x}"/>)",
                               coord(left + cell * j), coord(top + cell * i), coord(cell), coord(cell), r, g, b)
                << '\n';
        }
        svg << fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="9" text-anchor="end">{}</text>)",
                           coord(left - 4), coord(top + cell * (i + 0.5) + 3), i)
            << '\n';
        svg << fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="9" text-anchor="middle">{}</text>)",
                           coord(left + cell * (i + 0.5)), coord(top + side + 12), i)
            << '\n';
    }
    svg << fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="10">min {:.4g}</text>)",
                       coord(left + side + 8), coord(top + side), lo)
        << '\n';
    svg << fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="10">max {:.4g}</text>)",
                       coord(left + side + 8), coord(top + 10), hi)
        << '\n';
    svg << "</svg>\n";
    write_file(dir / (stem + ".svg"), svg.str());
}

}  // namespace lager::plots
