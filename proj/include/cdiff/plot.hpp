#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace cdiff {

struct SeriesPoint {
    double x = 0.0;
    double y = 0.0;
};

// Renders a single-series line chart (axes, ticks, labels, markers) straight
// to an 8-bit RGB PNG. Text uses a built-in 5x7 bitmap font covering digits,
// ".-=+ " and the letters needed for axis names.
void write_line_plot_png(const std::filesystem::path& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<SeriesPoint>& points, std::size_t width = 640,
                         std::size_t height = 420);

// Raw PNG writer for an RGB8 row-major buffer.
void write_rgb_png(const std::filesystem::path& path, const std::vector<unsigned char>& rgb,
                   std::size_t width, std::size_t height);

} // namespace cdiff
