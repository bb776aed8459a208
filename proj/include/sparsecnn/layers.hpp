#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sparsecnn/grid.hpp"
#include "sparsecnn/rng.hpp"

namespace sparsecnn {

enum class Activation : std::uint8_t { none, relu, leaky_third };

template <std::floating_point S>
S activate(S x, Activation a) {
    switch (a) {
        case Activation::relu: return x > S(0) ? x : S(0);
        case Activation::leaky_third: return x >= S(0) ? x : x / S(3);
        case Activation::none: return x;
    }
    return x;
}

/// Activation derivative recovered from the *output* value. Both activations
/// preserve sign, so the output's sign determines the branch.
template <std::floating_point S>
S activate_grad_from_output(S out, Activation a) {
    switch (a) {
        case Activation::relu: return out > S(0) ? S(1) : S(0);
        case Activation::leaky_third: return out >= S(0) ? S(1) : S(1) / S(3);
        case Activation::none: return S(1);
    }
    return S(1);
}

enum class LayerKind : std::uint8_t { conv, pool, output };

/// One layer of a network stack. Convolutions run in valid mode; filter_size
/// 1 is a network-in-network layer that keeps the spatial structure. Pooling
/// is fixed 2x2. dropout_p is the drop probability applied to this layer's
/// *input* at train time.
struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    int filter_size = 0;
    int in_features = 0;
    int out_features = 0;
    int in_size = 0;
    int out_size = 0;
    Activation activation = Activation::none;
    float dropout_p = 0.f;
    std::string label;

    bool is_nin() const { return kind == LayerKind::conv && filter_size == 1; }
    std::size_t weight_count() const {
        if (kind == LayerKind::pool) return 0;
        std::size_t patch = kind == LayerKind::output
                                ? static_cast<std::size_t>(in_features)
                                : static_cast<std::size_t>(filter_size) * filter_size * in_features;
        return patch * out_features;
    }
    std::size_t bias_count() const {
        return kind == LayerKind::pool ? 0 : static_cast<std::size_t>(out_features);
    }
};

// ---------------------------------------------------------------------------
// Ground-state propagation

/// Evaluate a conv/NiN layer on an all-ground receptive field. This is the
/// memoized value every inactive output site shares.
template <std::floating_point S>
std::vector<S> ground_forward(const LayerSpec& layer, std::span<const S> weights,
                              std::span<const S> biases, std::span<const S> ground_in) {
    if (layer.kind == LayerKind::pool) return {ground_in.begin(), ground_in.end()};
    if (static_cast<int>(ground_in.size()) != layer.in_features)
        throw ShapeError("ground_forward: ground row length mismatch");
    const int f2 = layer.filter_size * layer.filter_size;
    const int m_in = layer.in_features;
    const int m_out = layer.out_features;
    std::vector<S> out(biases.begin(), biases.end());
    for (int pos = 0; pos < f2; ++pos)
        for (int c = 0; c < m_in; ++c) {
            const S v = ground_in[c];
            if (v == S(0)) continue;
            const S* w = weights.data() + (static_cast<std::size_t>(pos) * m_in + c) * m_out;
            for (int j = 0; j < m_out; ++j) out[j] += v * w[j];
        }
    for (int j = 0; j < m_out; ++j) out[j] = activate(out[j], layer.activation);
    return out;
}

// ---------------------------------------------------------------------------
// Convolution

namespace detail {

/// Row-major list of output sites whose f x f receptive field touches at
/// least one active input site.
template <std::floating_point S>
std::vector<std::int32_t> dilated_output_sites(const SparseGrid<S>& in, int f, int out_size) {
    std::vector<std::uint8_t> stamp(static_cast<std::size_t>(out_size) * out_size, 0);
    const int in_size = in.size();
    for (int r = 1; r < in.num_rows(); ++r) {
        const int packed = in.site_of_row(r);
        const int x = packed % in_size;
        const int y = packed / in_size;
        const int ox_lo = std::max(0, x - f + 1), ox_hi = std::min(out_size - 1, x);
        const int oy_lo = std::max(0, y - f + 1), oy_hi = std::min(out_size - 1, y);
        for (int oy = oy_lo; oy <= oy_hi; ++oy)
            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                stamp[static_cast<std::size_t>(oy) * out_size + ox] = 1;
    }
    std::vector<std::int32_t> sites;
    for (std::size_t p = 0; p < stamp.size(); ++p)
        if (stamp[p]) sites.push_back(static_cast<std::int32_t>(p));
    return sites;
}

} // namespace detail

/// Sparse valid-mode convolution. Only output sites whose receptive field
/// contains an active input site get their own feature row; everything else
/// shares the memoized ground row. Inactive positions inside a receptive
/// field contribute the input's ground row.
template <std::floating_point S>
SparseGrid<S> conv_forward(const LayerSpec& layer, std::span<const S> weights,
                           std::span<const S> biases, const SparseGrid<S>& in) {
    const int f = layer.filter_size;
    if (in.features() != layer.in_features)
        throw ShapeError("conv_forward: input has " + std::to_string(in.features()) +
                         " features, layer expects " + std::to_string(layer.in_features));
    if (in.size() < f)
        throw ShapeError("conv_forward: input size " + std::to_string(in.size()) +
                         " smaller than filter " + std::to_string(f));
    const int out_size = in.size() - f + 1;
    const int m_in = layer.in_features;
    const int m_out = layer.out_features;

    std::vector<S> ground_out = ground_forward(layer, weights, biases, in.ground());
    SparseGrid<S> out(out_size, m_out, ground_out);

    const auto sites = detail::dilated_output_sites(in, f, out_size);
    std::vector<S> pre(static_cast<std::size_t>(m_out));
    for (const int packed : sites) {
        const int ox = packed % out_size;
        const int oy = packed / out_size;
        for (int j = 0; j < m_out; ++j) pre[j] = biases[j];
        for (int dy = 0; dy < f; ++dy)
            for (int dx = 0; dx < f; ++dx) {
                auto row = in.site(ox + dx, oy + dy);
                const int pos = dy * f + dx;
                for (int c = 0; c < m_in; ++c) {
                    const S v = row[c];
                    if (v == S(0)) continue;
                    const S* w = weights.data() + (static_cast<std::size_t>(pos) * m_in + c) * m_out;
                    for (int j = 0; j < m_out; ++j) pre[j] += v * w[j];
                }
            }
        const int r = out.activate(ox, oy);
        auto dst = out.mutable_row(r);
        for (int j = 0; j < m_out; ++j) dst[j] = activate(pre[j], layer.activation);
    }
    return out;
}

/// Deltas flowing back through a conv/NiN layer, restricted to active sites.
/// Delta buffers are feature-matrix aligned (R rows, row 0 = ground, kept
/// zero). Contributions aimed at inactive input sites are discarded; weight
/// gradients see the ground row at inactive receptive-field positions.
template <std::floating_point S>
std::vector<S> conv_backward(const LayerSpec& layer, std::span<const S> weights,
                             const SparseGrid<S>& in, const SparseGrid<S>& out,
                             std::span<const S> out_delta, std::span<S> dweights,
                             std::span<S> dbiases) {
    const int f = layer.filter_size;
    const int m_in = layer.in_features;
    const int m_out = layer.out_features;
    const int out_size = out.size();
    if (out_delta.size() != static_cast<std::size_t>(out.num_rows()) * m_out)
        throw ShapeError("conv_backward: delta buffer not aligned with output rows");
    if (dweights.size() != layer.weight_count() || dbiases.size() != layer.bias_count())
        throw ShapeError("conv_backward: gradient buffer shape mismatch");

    std::vector<S> in_delta(static_cast<std::size_t>(in.num_rows()) * m_in, S(0));
    std::vector<S> dpre(static_cast<std::size_t>(m_out));
    for (int r = 1; r < out.num_rows(); ++r) {
        const int packed = out.site_of_row(r);
        const int ox = packed % out_size;
        const int oy = packed / out_size;
        auto out_row = out.row(r);
        const S* od = out_delta.data() + static_cast<std::size_t>(r) * m_out;
        for (int j = 0; j < m_out; ++j)
            dpre[j] = od[j] * activate_grad_from_output(out_row[j], layer.activation);
        for (int j = 0; j < m_out; ++j) dbiases[j] += dpre[j];
        for (int dy = 0; dy < f; ++dy)
            for (int dx = 0; dx < f; ++dx) {
                const int x = ox + dx, y = oy + dy;
                const int r_in = in.row_index(x, y);
                auto in_row = in.row(r_in);
                const int pos = dy * f + dx;
                for (int c = 0; c < m_in; ++c) {
                    const std::size_t w_off = (static_cast<std::size_t>(pos) * m_in + c) * m_out;
                    const S v = in_row[c];
                    if (v != S(0)) {
                        S* dw = dweights.data() + w_off;
                        for (int j = 0; j < m_out; ++j) dw[j] += v * dpre[j];
                    }
                    if (r_in != 0) {
                        const S* w = weights.data() + w_off;
                        S acc = S(0);
                        for (int j = 0; j < m_out; ++j) acc += w[j] * dpre[j];
                        in_delta[static_cast<std::size_t>(r_in) * m_in + c] += acc;
                    }
                }
            }
    }
    return in_delta;
}

// ---------------------------------------------------------------------------
// 2x2 max-pooling

/// Per-component provenance of a pooled maximum: the receptive-field
/// position 0..3 (row-major) whose *active* input row attained it, or -1
/// when the ground substitution alone did. Indexed by (out_row-1)*M + c.
struct PoolTrace {
    std::vector<std::int8_t> argpos;
};

template <std::floating_point S>
SparseGrid<S> pool_forward(const SparseGrid<S>& in, PoolTrace* trace = nullptr) {
    if (in.size() % 2 != 0)
        throw ShapeError("pool_forward: spatial size " + std::to_string(in.size()) + " is odd");
    const int out_size = in.size() / 2;
    const int m = in.features();
    SparseGrid<S> out(out_size, m, in.ground());
    if (trace) trace->argpos.clear();

    std::vector<std::uint8_t> stamp(static_cast<std::size_t>(out_size) * out_size, 0);
    for (int r = 1; r < in.num_rows(); ++r) {
        const int packed = in.site_of_row(r);
        const int ox = (packed % in.size()) / 2;
        const int oy = (packed / in.size()) / 2;
        stamp[static_cast<std::size_t>(oy) * out_size + ox] = 1;
    }

    const auto ground = in.ground();
    std::array<int, 4> row_idx{};
    for (int oy = 0; oy < out_size; ++oy)
        for (int ox = 0; ox < out_size; ++ox) {
            if (!stamp[static_cast<std::size_t>(oy) * out_size + ox]) continue;
            for (int pos = 0; pos < 4; ++pos)
                row_idx[pos] = in.row_index(2 * ox + pos % 2, 2 * oy + pos / 2);
            const int r = out.activate(ox, oy);
            auto dst = out.mutable_row(r);
            for (int c = 0; c < m; ++c) {
                S best = row_idx[0] ? in.row(row_idx[0])[c] : ground[c];
                for (int pos = 1; pos < 4; ++pos) {
                    const S v = row_idx[pos] ? in.row(row_idx[pos])[c] : ground[c];
                    if (v > best) best = v;
                }
                dst[c] = best;
                if (trace) {
                    std::int8_t arg = -1;
                    for (int pos = 0; pos < 4; ++pos)
                        if (row_idx[pos] && in.row(row_idx[pos])[c] == best) {
                            arg = static_cast<std::int8_t>(pos);
                            break;
                        }
                    trace->argpos.push_back(arg);
                }
            }
        }
    return out;
}

/// Routes each component's delta to the recorded argmax input row. Deltas
/// whose maximum came from the ground substitution are dropped (the output
/// value is locally constant there).
template <std::floating_point S>
std::vector<S> pool_backward(const SparseGrid<S>& in, const SparseGrid<S>& out,
                             const PoolTrace& trace, std::span<const S> out_delta) {
    const int m = in.features();
    if (out_delta.size() != static_cast<std::size_t>(out.num_rows()) * m)
        throw ShapeError("pool_backward: delta buffer not aligned with output rows");
    if (trace.argpos.size() != static_cast<std::size_t>(out.active_count()) * m)
        throw ShapeError("pool_backward: trace does not match output");
    std::vector<S> in_delta(static_cast<std::size_t>(in.num_rows()) * m, S(0));
    for (int r = 1; r < out.num_rows(); ++r) {
        const int packed = out.site_of_row(r);
        const int ox = packed % out.size();
        const int oy = packed / out.size();
        const S* od = out_delta.data() + static_cast<std::size_t>(r) * m;
        const std::int8_t* arg = trace.argpos.data() + static_cast<std::size_t>(r - 1) * m;
        for (int c = 0; c < m; ++c) {
            if (arg[c] < 0) continue;
            const int r_in = in.row_index(2 * ox + arg[c] % 2, 2 * oy + arg[c] / 2);
            in_delta[static_cast<std::size_t>(r_in) * m + c] += od[c];
        }
    }
    return in_delta;
}

// ---------------------------------------------------------------------------
// Dropout

/// Per-sample channel mask. Every spatial site of a layer, the ground row
/// included, sees the same mask, so one shared ground row still describes
/// all inactive sites.
struct DropoutMask {
    std::vector<std::uint8_t> keep;
    float p = 0.f;
};

inline DropoutMask sample_dropout_mask(int num_features, float p, std::mt19937_64& rng) {
    if (p < 0.f || p >= 1.f)
        throw ValueError("dropout probability " + std::to_string(p) + " outside [0, 1)");
    DropoutMask mask;
    mask.p = p;
    mask.keep.resize(static_cast<std::size_t>(num_features), 1);
    if (p > 0.f)
        for (auto& k : mask.keep) k = uniform_double(rng) >= p ? 1 : 0;
    return mask;
}

/// Inverted dropout: surviving channels are scaled by 1/(1-p) at train time
/// so test-time evaluation is the identity.
template <std::floating_point S>
SparseGrid<S> dropout_forward(const SparseGrid<S>& in, const DropoutMask& mask) {
    const int m = in.features();
    const S scale = S(1) / (S(1) - S(mask.p));
    std::vector<S> ground(static_cast<std::size_t>(m));
    for (int c = 0; c < m; ++c) ground[c] = mask.keep[c] ? in.ground()[c] * scale : S(0);
    SparseGrid<S> out(in.size(), m, ground);
    for (int r = 1; r < in.num_rows(); ++r) {
        const int packed = in.site_of_row(r);
        const int ro = out.activate(packed % in.size(), packed / in.size());
        auto src = in.row(r);
        auto dst = out.mutable_row(ro);
        for (int c = 0; c < m; ++c) dst[c] = mask.keep[c] ? src[c] * scale : S(0);
    }
    return out;
}

template <std::floating_point S>
std::vector<S> dropout_backward(const DropoutMask& mask, int num_features,
                                std::span<const S> out_delta) {
    const S scale = S(1) / (S(1) - S(mask.p));
    std::vector<S> in_delta(out_delta.begin(), out_delta.end());
    for (std::size_t i = 0; i < in_delta.size(); ++i)
        in_delta[i] = mask.keep[i % num_features] ? in_delta[i] * scale : S(0);
    return in_delta;
}

template <std::floating_point S>
SparseGrid<S> dropout_apply(const SparseGrid<S>& in, float p, std::mt19937_64& rng, bool train) {
    if (p < 0.f || p >= 1.f)
        throw ValueError("dropout probability " + std::to_string(p) + " outside [0, 1)");
    if (!train || p == 0.f) return in;
    return dropout_forward(in, sample_dropout_mask(in.features(), p, rng));
}

// ---------------------------------------------------------------------------
// Softmax classifier head

/// Log-sum-exp stabilized softmax.
template <std::floating_point S>
std::vector<S> softmax(std::span<const S> logits) {
    double m = -std::numeric_limits<double>::infinity();
    for (const S v : logits) m = std::max(m, static_cast<double>(v));
    double z = 0;
    std::vector<S> probs(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) z += std::exp(static_cast<double>(logits[i]) - m);
    for (std::size_t i = 0; i < logits.size(); ++i)
        probs[i] = static_cast<S>(std::exp(static_cast<double>(logits[i]) - m) / z);
    return probs;
}

template <std::floating_point S>
std::vector<S> output_logits(const LayerSpec& layer, std::span<const S> weights,
                             std::span<const S> biases, std::span<const S> input_row) {
    if (static_cast<int>(input_row.size()) != layer.in_features)
        throw ShapeError("output layer: feature length " + std::to_string(input_row.size()) +
                         " != " + std::to_string(layer.in_features));
    std::vector<S> logits(biases.begin(), biases.end());
    const int m_out = layer.out_features;
    for (int c = 0; c < layer.in_features; ++c) {
        const S v = input_row[c];
        if (v == S(0)) continue;
        const S* w = weights.data() + static_cast<std::size_t>(c) * m_out;
        for (int j = 0; j < m_out; ++j) logits[j] += v * w[j];
    }
    return logits;
}

/// Class probabilities for the 1x1 top feature vector.
template <std::floating_point S>
std::vector<S> output_forward(const LayerSpec& layer, std::span<const S> weights,
                              std::span<const S> biases, std::span<const S> input_row) {
    auto logits = output_logits(layer, weights, biases, input_row);
    return softmax<S>(logits);
}

/// Backward through softmax + cross-entropy: dlogits = probs - onehot(label).
template <std::floating_point S>
std::vector<S> output_backward(const LayerSpec& layer, std::span<const S> weights,
                               std::span<const S> input_row, std::span<const S> probs, int label,
                               std::span<S> dweights, std::span<S> dbiases) {
    const int m_out = layer.out_features;
    const int m_in = layer.in_features;
    std::vector<S> dlogits(probs.begin(), probs.end());
    dlogits[static_cast<std::size_t>(label)] -= S(1);
    for (int j = 0; j < m_out; ++j) dbiases[j] += dlogits[j];
    std::vector<S> din(static_cast<std::size_t>(m_in), S(0));
    for (int c = 0; c < m_in; ++c) {
        const std::size_t w_off = static_cast<std::size_t>(c) * m_out;
        const S v = input_row[c];
        S acc = S(0);
        for (int j = 0; j < m_out; ++j) {
            if (v != S(0)) dweights[w_off + j] += v * dlogits[j];
            acc += weights[w_off + j] * dlogits[j];
        }
        din[c] = acc;
    }
    return din;
}

} // namespace sparsecnn
