#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>

#include "sparsecnn/encode.hpp"
#include "sparsecnn/rng.hpp"
#include "sparsecnn/strokes.hpp"

namespace sparsecnn {

/// p -> A*p + t in input-grid pixel units. Characters are origin-centered
/// after normalization, so the linear part acts about the grid center.
struct AffineTransform {
    double a00 = 1, a01 = 0;
    double a10 = 0, a11 = 1;
    double tx = 0, ty = 0;

    Point apply(Point p) const {
        return {a00 * p.x + a01 * p.y + tx, a10 * p.x + a11 * p.y + ty};
    }

    bool is_identity() const {
        return a00 == 1 && a01 == 0 && a10 == 0 && a11 == 1 && tx == 0 && ty == 0;
    }

    AffineTransform inverse() const {
        const double det = a00 * a11 - a01 * a10;
        AffineTransform inv;
        inv.a00 = a11 / det;
        inv.a01 = -a01 / det;
        inv.a10 = -a10 / det;
        inv.a11 = a00 / det;
        inv.tx = -(inv.a00 * tx + inv.a01 * ty);
        inv.ty = -(inv.a10 * tx + inv.a11 * ty);
        return inv;
    }
};

enum class AugmentMode : std::uint8_t { none, translate, affine };

struct AugmentConfig {
    AugmentMode mode = AugmentMode::none;
    int max_shift = 0;             // pixels, both axes
    double rotation_range = 0.2;   // radians, +-
    double scale_min = 0.8;
    double scale_max = 1.2;
    double shear_range = 0.2;      // +-
};

/// Draws a random transform. Translation components are integer pixel
/// shifts; the affine linear part is rotation * diag(sx, sy) * shear.
inline AffineTransform sample_transform(const AugmentConfig& config, std::mt19937_64& rng) {
    AffineTransform t;
    if (config.mode == AugmentMode::none) return t;
    if (config.mode == AugmentMode::affine) {
        const double theta = uniform_range(rng, -config.rotation_range, config.rotation_range);
        const double sx = uniform_range(rng, config.scale_min, config.scale_max);
        const double sy = uniform_range(rng, config.scale_min, config.scale_max);
        const double h = uniform_range(rng, -config.shear_range, config.shear_range);
        const double c = std::cos(theta), s = std::sin(theta);
        // R(theta) * diag(sx, sy) * [[1, h], [0, 1]]
        t.a00 = c * sx;
        t.a01 = c * sx * h - s * sy;
        t.a10 = s * sx;
        t.a11 = s * sx * h + c * sy;
    }
    t.tx = static_cast<double>(uniform_int(rng, -config.max_shift, config.max_shift));
    t.ty = static_cast<double>(uniform_int(rng, -config.max_shift, config.max_shift));
    return t;
}

/// Maps every stroke point; exact, no resampling. Returns nothing when any
/// transformed point leaves the input grid, so the caller can resample.
inline std::optional<StrokeCharacter> apply_to_strokes(const StrokeCharacter& ch,
                                                       const AffineTransform& t,
                                                       int input_size) {
    const double half = input_size / 2.0;
    StrokeCharacter out;
    out.label = ch.label;
    out.strokes.reserve(ch.strokes.size());
    for (const auto& stroke : ch.strokes) {
        std::vector<Point> mapped;
        mapped.reserve(stroke.size());
        for (const auto& p : stroke) {
            const Point q = t.apply(p);
            if (q.x < -half || q.x > half || q.y < -half || q.y > half) return std::nullopt;
            mapped.push_back(q);
        }
        out.strokes.push_back(std::move(mapped));
    }
    return out;
}

/// Inverse-mapped bilinear resampling of an embedded image grid. Output
/// sites whose four source neighbors are all inactive stay inactive;
/// inactive neighbors contribute the zero ground value otherwise. Returns
/// nothing when active content would leave the grid.
template <std::floating_point S>
std::optional<SparseGrid<S>> apply_to_image(const SparseGrid<S>& grid,
                                            const AffineTransform& t) {
    const int n = grid.size();
    const int m = grid.features();
    const double half = n / 2.0;

    if (t.is_identity()) return grid;

    // forward-map the active bounding box corners to detect truncation
    int min_x = n, min_y = n, max_x = -1, max_y = -1;
    for (int r = 1; r < grid.num_rows(); ++r) {
        const int packed = grid.site_of_row(r);
        min_x = std::min(min_x, packed % n);
        max_x = std::max(max_x, packed % n);
        min_y = std::min(min_y, packed / n);
        max_y = std::max(max_y, packed / n);
    }
    if (max_x < 0) return grid; // empty grid; nothing to transform
    for (const double cy : {min_y + 0.5, max_y + 0.5})
        for (const double cx : {min_x + 0.5, max_x + 0.5}) {
            const Point q = t.apply({cx - half, cy - half});
            if (q.x < -half || q.x > half || q.y < -half || q.y > half) return std::nullopt;
        }

    const AffineTransform inv = t.inverse();
    SparseGrid<S> out(n, m, grid.ground());
    std::vector<S> row(static_cast<std::size_t>(m));
    for (int oy = 0; oy < n; ++oy)
        for (int ox = 0; ox < n; ++ox) {
            const Point src = inv.apply({ox + 0.5 - half, oy + 0.5 - half});
            const double gx = src.x + half - 0.5, gy = src.y + half - 0.5;
            const int x0 = static_cast<int>(std::floor(gx));
            const int y0 = static_cast<int>(std::floor(gy));
            const double fx = gx - x0, fy = gy - y0;
            bool any_active = false;
            for (int c = 0; c < m; ++c) row[static_cast<std::size_t>(c)] = S(0);
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const int x = x0 + dx, y = y0 + dy;
                    const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy);
                    if (w == 0 || !grid.in_bounds(x, y)) continue;
                    const int r = grid.row_index(x, y);
                    if (r == 0) continue; // ground is all zero for images
                    any_active = true;
                    auto v = grid.row(r);
                    for (int c = 0; c < m; ++c) row[static_cast<std::size_t>(c)] += S(w) * v[c];
                }
            if (any_active) out.set_site(ox, oy, row);
        }
    return out;
}

} // namespace sparsecnn
