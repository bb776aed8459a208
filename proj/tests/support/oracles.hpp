#pragma once

// Dense reference implementations used as independent oracles in tests.
// Everything here works on plain dense arrays in double precision and never
// touches the sparse code paths it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "sparsecnn/layers.hpp"
#include "sparsecnn/network.hpp"

namespace oracle {

inline double activate_ref(double x, sparsecnn::Activation a) {
    using sparsecnn::Activation;
    if (a == Activation::relu) return x > 0 ? x : 0;
    if (a == Activation::leaky_third) return x >= 0 ? x : x / 3;
    return x;
}

/// Valid-mode convolution over a dense (y, x, c) array.
inline std::vector<double> dense_conv(std::span<const double> in, int in_size, int m_in,
                                      std::span<const double> weights,
                                      std::span<const double> biases, int f, int m_out,
                                      sparsecnn::Activation act) {
    const int out_size = in_size - f + 1;
    std::vector<double> out(static_cast<std::size_t>(out_size) * out_size * m_out);
    for (int oy = 0; oy < out_size; ++oy)
        for (int ox = 0; ox < out_size; ++ox)
            for (int j = 0; j < m_out; ++j) {
                double acc = biases[static_cast<std::size_t>(j)];
                for (int dy = 0; dy < f; ++dy)
                    for (int dx = 0; dx < f; ++dx)
                        for (int c = 0; c < m_in; ++c) {
                            const double v =
                                in[(static_cast<std::size_t>(oy + dy) * in_size + (ox + dx)) * m_in + c];
                            const double w =
                                weights[((static_cast<std::size_t>(dy) * f + dx) * m_in + c) * m_out + j];
                            acc += v * w;
                        }
                out[(static_cast<std::size_t>(oy) * out_size + ox) * m_out + j] = activate_ref(acc, act);
            }
    return out;
}

/// Dense 2x2 max pooling.
inline std::vector<double> dense_pool(std::span<const double> in, int in_size, int m) {
    const int out_size = in_size / 2;
    std::vector<double> out(static_cast<std::size_t>(out_size) * out_size * m);
    for (int oy = 0; oy < out_size; ++oy)
        for (int ox = 0; ox < out_size; ++ox)
            for (int c = 0; c < m; ++c) {
                double best = -std::numeric_limits<double>::infinity();
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        best = std::max(
                            best,
                            in[(static_cast<std::size_t>(2 * oy + dy) * in_size + (2 * ox + dx)) * m + c]);
                out[(static_cast<std::size_t>(oy) * out_size + ox) * m + c] = best;
            }
    return out;
}

/// Boolean dilation of an active mask by an f x f window, valid mode.
inline std::vector<std::uint8_t> dilate_mask(std::span<const std::uint8_t> mask, int in_size,
                                             int f) {
    const int out_size = in_size - f + 1;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(out_size) * out_size, 0);
    for (int oy = 0; oy < out_size; ++oy)
        for (int ox = 0; ox < out_size; ++ox) {
            std::uint8_t any = 0;
            for (int dy = 0; dy < f && !any; ++dy)
                for (int dx = 0; dx < f && !any; ++dx)
                    any = mask[static_cast<std::size_t>(oy + dy) * in_size + (ox + dx)];
            out[static_cast<std::size_t>(oy) * out_size + ox] = any;
        }
    return out;
}

/// Boolean 2x2 halving of an active mask.
inline std::vector<std::uint8_t> halve_mask(std::span<const std::uint8_t> mask, int in_size) {
    const int out_size = in_size / 2;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(out_size) * out_size, 0);
    for (int y = 0; y < in_size; ++y)
        for (int x = 0; x < in_size; ++x)
            if (mask[static_cast<std::size_t>(y) * in_size + x])
                out[static_cast<std::size_t>(y / 2) * out_size + x / 2] = 1;
    return out;
}

template <typename S>
std::vector<std::uint8_t> active_mask(const sparsecnn::SparseGrid<S>& g) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(g.size()) * g.size(), 0);
    for (int r = 1; r < g.num_rows(); ++r)
        mask[static_cast<std::size_t>(g.site_of_row(r))] = 1;
    return mask;
}

/// Softmax evaluated directly in long double.
inline std::vector<double> softmax_ref(std::span<const double> logits) {
    long double z = 0;
    for (double v : logits) z += std::exp(static_cast<long double>(v));
    std::vector<double> p(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        p[i] = static_cast<double>(std::exp(static_cast<long double>(logits[i])) / z);
    return p;
}

/// Exhaustive input-to-output path enumeration for a small network: walks
/// every legal window choice layer by layer. Only sane for l = 1 sizes.
inline std::uint64_t enumerate_paths(const sparsecnn::NetworkSpec& net, int x, int y) {
    struct Site {
        int x, y;
    };
    std::vector<Site> frontier{{x, y}};
    for (const auto& layer : net.layers) {
        if (layer.kind == sparsecnn::LayerKind::output) break;
        std::vector<Site> next;
        if (layer.kind == sparsecnn::LayerKind::pool) {
            for (const auto& s : frontier) next.push_back({s.x / 2, s.y / 2});
        } else {
            const int f = layer.filter_size;
            const int out_size = layer.out_size;
            for (const auto& s : frontier)
                for (int dy = 0; dy < f; ++dy)
                    for (int dx = 0; dx < f; ++dx) {
                        const int ox = s.x - dx, oy = s.y - dy;
                        if (ox >= 0 && oy >= 0 && ox < out_size && oy < out_size)
                            next.push_back({ox, oy});
                    }
        }
        frontier = std::move(next);
    }
    return frontier.size();
}

} // namespace oracle
