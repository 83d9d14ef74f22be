#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lager/metrics.hpp"

namespace lager::plots {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<std::optional<double>> y;  // gaps for undefined points
};

/// Line chart. Writes <stem>.svg and <stem>.csv (x column plus one column per series).
void write_line_plot(const std::filesystem::path& dir, const std::string& stem, const std::string& title,
                     const std::string& x_label, const std::string& y_label, const std::vector<Series>& series);

/// Square heatmap. Writes <stem>.svg and <stem>.csv (row, col, value).
void write_heatmap(const std::filesystem::path& dir, const std::string& stem, const std::string& title,
                   const std::vector<std::vector<double>>& matrix);

std::string format_number(double v);

}  // namespace lager::plots
