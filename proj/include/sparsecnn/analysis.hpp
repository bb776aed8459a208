#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <string>
#include <vector>

#include "sparsecnn/grid.hpp"
#include "sparsecnn/network.hpp"

namespace sparsecnn {

using PathCount = boost::multiprecision::cpp_int;

/// Number of distinct input-to-output routes through the conv/pool windows,
/// per input site. Backward dynamic programming from the 1x1 top: a conv
/// output site fans out to every window containing an input site, a pool
/// site has exactly one parent window. Corners have a single route; the
/// central (N/3)x(N/3) plateau has 3^2 * 2^(2(l-1)).
inline std::vector<PathCount> count_paths(const NetworkSpec& net) {
    std::vector<PathCount> counts{PathCount(1)}; // final conv output, 1x1
    int size = 1;
    for (auto it = net.layers.rbegin(); it != net.layers.rend(); ++it) {
        const auto& layer = *it;
        if (layer.kind == LayerKind::output) continue;
        const int in_size = layer.in_size;
        std::vector<PathCount> prev(static_cast<std::size_t>(in_size) * in_size);
        if (layer.kind == LayerKind::pool) {
            for (int y = 0; y < in_size; ++y)
                for (int x = 0; x < in_size; ++x)
                    prev[static_cast<std::size_t>(y) * in_size + x] =
                        counts[static_cast<std::size_t>(y / 2) * size + x / 2];
        } else {
            const int f = layer.filter_size;
            for (int y = 0; y < in_size; ++y)
                for (int x = 0; x < in_size; ++x) {
                    PathCount sum = 0;
                    for (int dy = 0; dy < f; ++dy)
                        for (int dx = 0; dx < f; ++dx) {
                            const int ox = x - dx, oy = y - dy;
                            if (ox >= 0 && oy >= 0 && ox < size && oy < size)
                                sum += counts[static_cast<std::size_t>(oy) * size + ox];
                        }
                    prev[static_cast<std::size_t>(y) * in_size + x] = sum;
                }
        }
        counts = std::move(prev);
        size = in_size;
    }
    return counts;
}

struct PathSummary {
    PathCount corner;
    PathCount center;
    int plateau_width = 0; // side of the square of maximal-count sites
};

inline PathSummary summarize_paths(const NetworkSpec& net,
                                   const std::vector<PathCount>& counts) {
    PathSummary s;
    const int n = net.input_size;
    s.corner = counts.front();
    s.center = counts[static_cast<std::size_t>(n / 2) * n + n / 2];
    PathCount best = 0;
    for (const auto& c : counts) best = std::max(best, c);
    // the maximal sites form a centered square; measure it along the middle row
    int width = 0;
    for (int x = 0; x < n; ++x)
        if (counts[static_cast<std::size_t>(n / 2) * n + x] == best) ++width;
    s.plateau_width = width;
    return s;
}

/// One line of a census table.
struct LayerCensus {
    std::string label;
    int spatial_size = 0;
    std::int64_t active = 0;
    double fraction = 0.0;
};

/// Active-set propagation only, no arithmetic: convolution dilates activity
/// by its f x f window (valid mode), NiN keeps it, pooling halves
/// coordinates. Reports the input layer first.
template <std::floating_point S>
std::vector<LayerCensus> census_forward(const NetworkSpec& net, const SparseGrid<S>& input) {
    if (input.size() != net.input_size)
        throw ShapeError("census_forward: grid size " + std::to_string(input.size()) +
                         " != network input size " + std::to_string(net.input_size));
    int size = net.input_size;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(size) * size, 0);
    for (int r = 1; r < input.num_rows(); ++r)
        mask[static_cast<std::size_t>(input.site_of_row(r))] = 1;

    auto census_of = [](const std::string& label, int sz,
                        const std::vector<std::uint8_t>& m) {
        LayerCensus c;
        c.label = label;
        c.spatial_size = sz;
        for (auto v : m) c.active += v;
        c.fraction = static_cast<double>(c.active) / (static_cast<double>(sz) * sz);
        return c;
    };

    std::vector<LayerCensus> table;
    table.push_back(census_of("input", size, mask));
    for (const auto& layer : net.layers) {
        if (layer.kind == LayerKind::output) break;
        const int out_size = layer.out_size;
        std::vector<std::uint8_t> next(static_cast<std::size_t>(out_size) * out_size, 0);
        if (layer.kind == LayerKind::pool) {
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    if (mask[static_cast<std::size_t>(y) * size + x])
                        next[static_cast<std::size_t>(y / 2) * out_size + x / 2] = 1;
        } else {
            const int f = layer.filter_size;
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    if (!mask[static_cast<std::size_t>(y) * size + x]) continue;
                    const int ox_lo = std::max(0, x - f + 1), ox_hi = std::min(out_size - 1, x);
                    const int oy_lo = std::max(0, y - f + 1), oy_hi = std::min(out_size - 1, y);
                    for (int oy = oy_lo; oy <= oy_hi; ++oy)
                        for (int ox = ox_lo; ox <= ox_hi; ++ox)
                            next[static_cast<std::size_t>(oy) * out_size + ox] = 1;
                }
        }
        mask = std::move(next);
        size = out_size;
        table.push_back(census_of(layer.label, size, mask));
    }
    return table;
}

} // namespace sparsecnn
