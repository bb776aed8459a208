#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "sparsecnn/grid.hpp"
#include "sparsecnn/strokes.hpp"

namespace sparsecnn {

/// How characters are drawn into the input layer: a character_scale x
/// character_scale drawing box centered in an input_size x input_size grid,
/// with 1 feature (binary picture) or 9 (picture + 8-direction histogram).
struct EncodingConfig {
    int character_scale = 0; // n, 2^levels by default
    int input_size = 0;      // N = 3 * 2^levels
    bool with_histograms = false;

    static EncodingConfig from_levels(int levels, bool with_histograms) {
        EncodingConfig c;
        c.character_scale = 1 << levels;
        c.input_size = 3 * (1 << levels);
        c.with_histograms = with_histograms;
        return c;
    }
    int features() const { return with_histograms ? 9 : 1; }
};

namespace detail {

/// Walks a segment across the unit-cell lattice (Amanatides-Woo style),
/// reporting each cell together with the length of segment inside it.
template <typename Visit>
void traverse_cells(Point a, Point b, int grid_size, Visit&& visit) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len = std::hypot(dx, dy);
    if (len == 0) return;
    auto cell_of = [grid_size](double v) {
        int c = static_cast<int>(std::floor(v));
        if (c == grid_size) c = grid_size - 1; // top boundary belongs to the last cell
        return c;
    };
    int cx = cell_of(a.x), cy = cell_of(a.y);
    const int ex = cell_of(b.x), ey = cell_of(b.y);
    const int step_x = dx > 0 ? 1 : -1, step_y = dy > 0 ? 1 : -1;
    // parameter t in [0,1] of the next vertical / horizontal crossing
    auto crossing = [](double origin, double delta, int cell, int step) {
        if (delta == 0) return std::numeric_limits<double>::infinity();
        const double edge = step > 0 ? cell + 1 : cell;
        return (edge - origin) / delta;
    };
    double t = 0;
    double t_max_x = crossing(a.x, dx, cx, step_x);
    double t_max_y = crossing(a.y, dy, cy, step_y);
    const double t_dx = dx != 0 ? std::abs(1.0 / dx) : 0;
    const double t_dy = dy != 0 ? std::abs(1.0 / dy) : 0;
    while (true) {
        const bool last = (cx == ex && cy == ey) || (t_max_x >= 1 && t_max_y >= 1);
        const double t_next = last ? 1.0 : std::min(t_max_x, t_max_y);
        if (t_next > t) visit(cx, cy, (t_next - t) * len);
        if (last) break;
        t = t_next;
        if (t_max_x <= t_max_y) {
            cx += step_x;
            t_max_x += t_dx;
        } else {
            cy += step_y;
            t_max_y += t_dy;
        }
        if (cx < 0 || cy < 0 || cx >= grid_size || cy >= grid_size) break;
    }
}

/// Splits a movement of the given length onto the two nearest of the 8
/// compass directions (0 = +x, counter-clockwise in 45-degree steps),
/// weighted by angular distance.
inline void add_direction(std::span<float> hist, double dx, double dy, double length) {
    const double angle = std::atan2(dy, dx); // (-pi, pi]
    double a = angle / (std::numbers::pi / 4);
    if (a < 0) a += 8;
    int i0 = static_cast<int>(std::floor(a));
    if (i0 == 8) i0 = 0;
    const double w1 = a - i0;
    const int i1 = (i0 + 1) % 8;
    hist[static_cast<std::size_t>(i0)] += static_cast<float>(length * (1 - w1));
    if (w1 > 0) hist[static_cast<std::size_t>(i1)] += static_cast<float>(length * w1);
}

} // namespace detail

/// Draws a normalized (origin-centered) character into the input grid.
///
/// Feature 0 is the binary pen channel: 1 at every cell the pen passes
/// through with positive length (plus the cells holding the stroke points
/// themselves, so dots show up). With histograms enabled, features 1-8
/// accumulate per cell the pen movement length decomposed onto the 8 compass
/// directions; segments are split at cell boundaries, so the total histogram
/// mass equals the total polyline length. Both representations activate
/// exactly the same sites.
template <std::floating_point S = float>
SparseGrid<S> rasterize(const StrokeCharacter& ch, const EncodingConfig& config) {
    const int n = config.input_size;
    const int m = config.features();
    const double half = n / 2.0;
    std::vector<float> pen(static_cast<std::size_t>(n) * n, 0.f);
    std::vector<float> hist;
    if (config.with_histograms) hist.assign(static_cast<std::size_t>(n) * n * 8, 0.f);

    auto mark = [&](int cx, int cy) {
        if (cx >= 0 && cy >= 0 && cx < n && cy < n)
            pen[static_cast<std::size_t>(cy) * n + cx] = 1.f;
    };
    for (const auto& stroke : ch.strokes) {
        for (const auto& p : stroke) {
            int cx = static_cast<int>(std::floor(p.x + half));
            int cy = static_cast<int>(std::floor(p.y + half));
            if (cx == n) cx = n - 1;
            if (cy == n) cy = n - 1;
            mark(cx, cy);
        }
        for (std::size_t i = 0; i + 1 < stroke.size(); ++i) {
            const Point a{stroke[i].x + half, stroke[i].y + half};
            const Point b{stroke[i + 1].x + half, stroke[i + 1].y + half};
            const double dx = b.x - a.x, dy = b.y - a.y;
            detail::traverse_cells(a, b, n, [&](int cx, int cy, double length) {
                if (cx < 0 || cy < 0 || cx >= n || cy >= n) return;
                mark(cx, cy);
                if (config.with_histograms)
                    detail::add_direction(
                        std::span<float>(hist.data() + (static_cast<std::size_t>(cy) * n + cx) * 8, 8),
                        dx, dy, length);
            });
        }
    }

    SparseGrid<S> grid(n, m);
    std::vector<S> row(static_cast<std::size_t>(m));
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * n + x;
            if (pen[p] == 0.f) continue;
            row[0] = S(1);
            if (config.with_histograms)
                for (int d = 0; d < 8; ++d) row[static_cast<std::size_t>(d) + 1] = S(hist[p * 8 + d]);
            grid.set_site(x, y, row);
        }
    return grid;
}

enum class ImageScaling : std::uint8_t {
    grayscale, // [0,255] -> [0,1], zero pixels stay inactive
    rgb_signed // [0,255] -> [-1,1], every image pixel active
};

/// Centers a w x h image in an input_size grid; the padding frame stays in
/// the all-zero ground state.
template <std::floating_point S = float>
SparseGrid<S> embed_image(std::span<const std::uint8_t> pixels, int width, int height,
                          int channels, int input_size, ImageScaling scaling) {
    if (pixels.size() != static_cast<std::size_t>(width) * height * channels)
        throw ShapeError("embed_image: pixel buffer size mismatch");
    if (width > input_size || height > input_size)
        throw ShapeError("embed_image: image " + std::to_string(width) + "x" +
                         std::to_string(height) + " larger than grid " +
                         std::to_string(input_size));
    const int off_x = (input_size - width) / 2;
    const int off_y = (input_size - height) / 2;
    SparseGrid<S> grid(input_size, channels);
    std::vector<S> row(static_cast<std::size_t>(channels));
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const std::uint8_t* px =
                pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels;
            bool any = false;
            for (int c = 0; c < channels; ++c) {
                if (scaling == ImageScaling::grayscale)
                    row[static_cast<std::size_t>(c)] = S(px[c]) / S(255);
                else
                    row[static_cast<std::size_t>(c)] = S(2) * S(px[c]) / S(255) - S(1);
                any = any || px[c] != 0;
            }
            if (scaling == ImageScaling::rgb_signed || any)
                grid.set_site(off_x + x, off_y + y, row);
        }
    return grid;
}

} // namespace sparsecnn
