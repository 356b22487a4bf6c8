#include "cdiff/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "cdiff/errors.hpp"

namespace cdiff {

namespace {

void put_u32_be(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

void put_chunk(std::vector<unsigned char>& out, const char type[4],
               const std::vector<unsigned char>& data) {
    put_u32_be(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(4 + data.size()));
    put_u32_be(out, static_cast<std::uint32_t>(crc));
}

// 5x7 glyphs, one byte per row, bit 4 = leftmost column.
struct Glyph {
    char ch;
    unsigned char rows[7];
};

constexpr Glyph kFont[] = {
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
    {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
    {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'a', {0x00, 0x00, 0x0E, 0x01, 0x0F, 0x11, 0x0F}},
    {'c', {0x00, 0x00, 0x0E, 0x10, 0x10, 0x11, 0x0E}},
    {'e', {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
    {'i', {0x04, 0x00, 0x0C, 0x04, 0x04, 0x04, 0x0E}},
    {'s', {0x00, 0x00, 0x0F, 0x10, 0x0E, 0x01, 0x1E}},
    {'t', {0x08, 0x08, 0x1E, 0x08, 0x08, 0x09, 0x06}},
    {'u', {0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0D}},
};

const unsigned char* glyph_rows(char c) {
    for (const Glyph& g : kFont)
        if (g.ch == c) return g.rows;
    return nullptr;
}

struct Canvas {
    std::size_t width, height;
    std::vector<unsigned char> rgb;

    Canvas(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 255) {}

    void pixel(std::ptrdiff_t x, std::ptrdiff_t y, unsigned char r, unsigned char g,
               unsigned char b) {
        if (x < 0 || y < 0 || x >= static_cast<std::ptrdiff_t>(width) ||
            y >= static_cast<std::ptrdiff_t>(height))
            return;
        unsigned char* p = rgb.data() + 3 * (static_cast<std::size_t>(y) * width +
                                             static_cast<std::size_t>(x));
        p[0] = r;
        p[1] = g;
        p[2] = b;
    }

    void line(double x0, double y0, double x1, double y1, unsigned char r, unsigned char g,
              unsigned char b) {
        const double dx = x1 - x0, dy = y1 - y0;
        const int steps = static_cast<int>(std::max(std::fabs(dx), std::fabs(dy))) + 1;
        for (int i = 0; i <= steps; ++i) {
            const double t = static_cast<double>(i) / steps;
            pixel(static_cast<std::ptrdiff_t>(std::lround(x0 + t * dx)),
                  static_cast<std::ptrdiff_t>(std::lround(y0 + t * dy)), r, g, b);
        }
    }

    void marker(double x, double y, unsigned char r, unsigned char g, unsigned char b) {
        for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx)
                if (dx * dx + dy * dy <= 4)
                    pixel(static_cast<std::ptrdiff_t>(std::lround(x)) + dx,
                          static_cast<std::ptrdiff_t>(std::lround(y)) + dy, r, g, b);
    }

    void text(std::ptrdiff_t x, std::ptrdiff_t y, const std::string& s) {
        for (char c : s) {
            const unsigned char* rows = glyph_rows(c);
            if (rows) {
                for (int ry = 0; ry < 7; ++ry)
                    for (int rx = 0; rx < 5; ++rx)
                        if (rows[ry] & (1 << (4 - rx))) pixel(x + rx, y + ry, 0, 0, 0);
            }
            x += 6;
        }
    }
};

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

} // namespace

void write_rgb_png(const std::filesystem::path& path, const std::vector<unsigned char>& rgb,
                   std::size_t width, std::size_t height) {
    if (rgb.size() != width * height * 3) throw shape_error("png: buffer size mismatch");

    // Filter byte 0 in front of every row.
    std::vector<unsigned char> raw;
    raw.reserve(height * (1 + width * 3));
    for (std::size_t y = 0; y < height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), rgb.begin() + static_cast<std::ptrdiff_t>(y * width * 3),
                   rgb.begin() + static_cast<std::ptrdiff_t>((y + 1) * width * 3));
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) !=
        Z_OK)
        throw io_error(io_error::code::write_failed, "png: deflate failed");
    compressed.resize(bound);

    std::vector<unsigned char> out;
    const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    out.insert(out.end(), sig, sig + 8);
    std::vector<unsigned char> ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(width));
    put_u32_be(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8); // bit depth
    ihdr.push_back(2); // RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", compressed);
    put_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error(io_error::code::open_failed, "png: cannot open " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw io_error(io_error::code::write_failed, "png: write failed " + path.string());
}

void write_line_plot_png(const std::filesystem::path& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<SeriesPoint>& points, std::size_t width,
                         std::size_t height) {
    if (points.empty()) throw numeric_error("plot: need at least one point");
    Canvas canvas(width, height);

    const double ml = 70, mr = 25, mt = 35, mb = 50;
    const double px0 = ml, px1 = static_cast<double>(width) - mr;
    const double py0 = static_cast<double>(height) - mb, py1 = mt;

    double x_min = points[0].x, x_max = points[0].x;
    double y_min = points[0].y, y_max = points[0].y;
    for (const SeriesPoint& p : points) {
        x_min = std::min(x_min, p.x);
        x_max = std::max(x_max, p.x);
        y_min = std::min(y_min, p.y);
        y_max = std::max(y_max, p.y);
    }
    if (x_max == x_min) {
        x_min -= 1.0;
        x_max += 1.0;
    }
    if (y_max == y_min) {
        y_min -= 0.5;
        y_max += 0.5;
    }
    const double y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    auto sx = [&](double x) { return px0 + (x - x_min) / (x_max - x_min) * (px1 - px0); };
    auto sy = [&](double y) { return py0 - (y - y_min) / (y_max - y_min) * (py0 - py1); };

    // Grid and ticks.
    const int ticks = 5;
    for (int i = 0; i <= ticks; ++i) {
        const double fx = x_min + (x_max - x_min) * i / ticks;
        const double fy = y_min + (y_max - y_min) * i / ticks;
        canvas.line(sx(fx), py0, sx(fx), py1, 225, 225, 225);
        canvas.line(px0, sy(fy), px1, sy(fy), 225, 225, 225);
        canvas.text(static_cast<std::ptrdiff_t>(sx(fx)) - 8,
                    static_cast<std::ptrdiff_t>(py0) + 8, fmt_tick(fx));
        canvas.text(static_cast<std::ptrdiff_t>(px0) - 62,
                    static_cast<std::ptrdiff_t>(sy(fy)) - 3, fmt_tick(fy));
    }
    canvas.line(px0, py0, px1, py0, 0, 0, 0);
    canvas.line(px0, py0, px0, py1, 0, 0, 0);

    // Series.
    for (std::size_t i = 1; i < points.size(); ++i)
        canvas.line(sx(points[i - 1].x), sy(points[i - 1].y), sx(points[i].x), sy(points[i].y),
                    30, 60, 200);
    for (const SeriesPoint& p : points) canvas.marker(sx(p.x), sy(p.y), 30, 60, 200);

    canvas.text(static_cast<std::ptrdiff_t>(px0), 12, title);
    canvas.text(static_cast<std::ptrdiff_t>((px0 + px1) / 2.0) - 3 * static_cast<std::ptrdiff_t>(x_label.size()),
                static_cast<std::ptrdiff_t>(height) - 22, x_label);
    canvas.text(6, static_cast<std::ptrdiff_t>(py1) - 14, y_label);

    write_rgb_png(path, canvas.rgb, width, height);
}

} // namespace cdiff
