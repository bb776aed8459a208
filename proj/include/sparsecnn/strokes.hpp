#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sparsecnn/errors.hpp"

namespace sparsecnn {

struct Point {
    double x = 0;
    double y = 0;
};

/// A labeled handwritten character: a list of pen strokes, each an ordered
/// polyline of (x, y) coordinates.
struct StrokeCharacter {
    int label = 0;
    std::vector<std::vector<Point>> strokes;

    bool empty() const {
        for (const auto& s : strokes)
            if (!s.empty()) return false;
        return true;
    }
};

/// Uniform (aspect-preserving) scale plus translation mapping the character's
/// bounding box into the n x n drawing box centered on the origin, i.e. into
/// [-n/2, n/2]^2. A degenerate bounding box lands on the origin.
inline StrokeCharacter normalize_character(const StrokeCharacter& ch, int box) {
    if (ch.empty()) throw ValueError("normalize_character: character has no points");
    double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
    double max_x = -min_x, max_y = -min_y;
    for (const auto& stroke : ch.strokes)
        for (const auto& p : stroke) {
            if (!std::isfinite(p.x) || !std::isfinite(p.y))
                throw ValueError("normalize_character: non-finite coordinate");
            min_x = std::min(min_x, p.x);
            max_x = std::max(max_x, p.x);
            min_y = std::min(min_y, p.y);
            max_y = std::max(max_y, p.y);
        }
    const double extent = std::max(max_x - min_x, max_y - min_y);
    const double scale = extent > 0 ? box / extent : 0.0;
    const double cx = (min_x + max_x) / 2, cy = (min_y + max_y) / 2;

    StrokeCharacter out;
    out.label = ch.label;
    out.strokes.reserve(ch.strokes.size());
    for (const auto& stroke : ch.strokes) {
        std::vector<Point> mapped;
        mapped.reserve(stroke.size());
        for (const auto& p : stroke)
            mapped.push_back({(p.x - cx) * scale, (p.y - cy) * scale});
        out.strokes.push_back(std::move(mapped));
    }
    return out;
}

} // namespace sparsecnn
