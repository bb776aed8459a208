#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sparsecnn/layers.hpp"
#include "sparsecnn/rng.hpp"

namespace sparsecnn {

enum class Family : std::uint8_t { deepcnet, deepcnin };

inline const char* family_name(Family f) {
    return f == Family::deepcnet ? "deepcnet" : "deepcnin";
}

/// An assembled network: levels of 2x2 pooling interleaved with small
/// convolutions, finishing in a 1x1 fully-connected softmax classifier.
/// With input size 3*2^levels the final convolution consumes the grid
/// exactly to 1x1.
struct NetworkSpec {
    Family family = Family::deepcnet;
    int levels = 0;          // pooling stages
    int k = 0;               // filter-count increment: n-th conv has n*k filters
    int input_features = 0;  // M
    int num_classes = 0;
    int input_size = 0;      // N = 3 * 2^levels
    std::vector<float> dropout; // levels+2 entries: conv inputs, then classifier input
    std::vector<LayerSpec> layers; // ends with the output layer
};

namespace detail {

inline std::vector<float> check_dropout(int levels, std::vector<float> dropout) {
    if (dropout.empty()) dropout.assign(static_cast<std::size_t>(levels) + 2, 0.f);
    if (static_cast<int>(dropout.size()) != levels + 2)
        throw ConfigError("dropout: expected " + std::to_string(levels + 2) + " entries, got " +
                          std::to_string(dropout.size()));
    for (float p : dropout)
        if (p < 0.f || p >= 1.f)
            throw ConfigError("dropout: probability " + std::to_string(p) + " outside [0, 1)");
    return dropout;
}

inline LayerSpec conv_spec(int f, int in_f, int out_f, int in_size, Activation act, float drop) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.filter_size = f;
    s.in_features = in_f;
    s.out_features = out_f;
    s.in_size = in_size;
    s.out_size = in_size - f + 1;
    s.activation = act;
    s.dropout_p = drop;
    s.label = std::to_string(out_f) + "C" + std::to_string(f);
    return s;
}

inline LayerSpec pool_spec(int features, int in_size) {
    LayerSpec s;
    s.kind = LayerKind::pool;
    s.filter_size = 2;
    s.in_features = features;
    s.out_features = features;
    s.in_size = in_size;
    s.out_size = in_size / 2;
    s.label = "MP2";
    return s;
}

inline LayerSpec output_spec(int in_f, int classes, float drop) {
    LayerSpec s;
    s.kind = LayerKind::output;
    s.in_features = in_f;
    s.out_features = classes;
    s.in_size = 1;
    s.out_size = 1;
    s.dropout_p = drop;
    s.label = "output";
    return s;
}

inline void check_build_args(int levels, int k, int input_features, int num_classes) {
    if (levels < 1) throw ConfigError("levels: must be >= 1, got " + std::to_string(levels));
    if (k < 1) throw ConfigError("k: must be >= 1, got " + std::to_string(k));
    if (input_features < 1)
        throw ConfigError("features: must be >= 1, got " + std::to_string(input_features));
    if (num_classes < 2)
        throw ConfigError("classes: must be >= 2, got " + std::to_string(num_classes));
}

} // namespace detail

/// DeepCNet(l, k): l+1 conv layers (3x3 first, 2x2 after, the n-th with n*k
/// filters) with a 2x2 max-pool after each of the first l, rectified-linear
/// activations, softmax on top. Input size 3*2^l.
inline NetworkSpec build_deepcnet(int levels, int k, int input_features, int num_classes,
                                  std::vector<float> dropout = {}) {
    detail::check_build_args(levels, k, input_features, num_classes);
    NetworkSpec net;
    net.family = Family::deepcnet;
    net.levels = levels;
    net.k = k;
    net.input_features = input_features;
    net.num_classes = num_classes;
    net.input_size = 3 * (1 << levels);
    net.dropout = detail::check_dropout(levels, std::move(dropout));

    int size = net.input_size;
    int feats = input_features;
    for (int n = 1; n <= levels + 1; ++n) {
        const int f = n == 1 ? 3 : 2;
        auto conv = detail::conv_spec(f, feats, n * k, size, Activation::relu,
                                      net.dropout[static_cast<std::size_t>(n) - 1]);
        size = conv.out_size;
        feats = conv.out_features;
        net.layers.push_back(std::move(conv));
        if (n <= levels) {
            net.layers.push_back(detail::pool_spec(feats, size));
            size /= 2;
        }
    }
    net.layers.push_back(detail::output_spec(feats, num_classes, net.dropout.back()));
    return net;
}

/// DeepCNiN(l, k): the DeepCNet skeleton with a 1x1 NiN layer after each
/// max-pool and after the final convolution, leaky x/3 activations on all
/// hidden layers, and dropout attached only to the conv layers.
inline NetworkSpec build_deepcnin(int levels, int k, int input_features, int num_classes,
                                  std::vector<float> dropout = {}) {
    detail::check_build_args(levels, k, input_features, num_classes);
    NetworkSpec net;
    net.family = Family::deepcnin;
    net.levels = levels;
    net.k = k;
    net.input_features = input_features;
    net.num_classes = num_classes;
    net.input_size = 3 * (1 << levels);
    net.dropout = detail::check_dropout(levels, std::move(dropout));

    int size = net.input_size;
    int feats = input_features;
    for (int n = 1; n <= levels + 1; ++n) {
        const int f = n == 1 ? 3 : 2;
        auto conv = detail::conv_spec(f, feats, n * k, size, Activation::leaky_third,
                                      net.dropout[static_cast<std::size_t>(n) - 1]);
        size = conv.out_size;
        feats = conv.out_features;
        net.layers.push_back(std::move(conv));
        if (n <= levels) {
            net.layers.push_back(detail::pool_spec(feats, size));
            size /= 2;
        }
        net.layers.push_back(
            detail::conv_spec(1, feats, feats, size, Activation::leaky_third, 0.f));
    }
    net.layers.push_back(detail::output_spec(feats, num_classes, net.dropout.back()));
    return net;
}

/// "input-100C3-MP2-...-output" rendering for logs.
inline std::string layer_string(const NetworkSpec& net) {
    std::string s = "input";
    for (const auto& layer : net.layers) {
        s += '-';
        s += layer.label;
    }
    return s;
}

/// Trainable parameter totals. conv_weights follows the series
/// 3^2*M*k + sum_n 2^2*(nk)*((n+1)k); NiN and classifier parameters are
/// reported separately so the series stays visible.
struct ParameterCount {
    std::uint64_t conv_weights = 0;
    std::uint64_t nin_weights = 0;
    std::uint64_t classifier_weights = 0;
    std::uint64_t biases = 0;
    std::uint64_t total = 0;
};

inline ParameterCount parameter_count(const NetworkSpec& net) {
    ParameterCount c;
    for (const auto& layer : net.layers) {
        if (layer.kind == LayerKind::pool) continue;
        const auto w = static_cast<std::uint64_t>(layer.weight_count());
        if (layer.kind == LayerKind::output)
            c.classifier_weights += w;
        else if (layer.is_nin())
            c.nin_weights += w;
        else
            c.conv_weights += w;
        c.biases += static_cast<std::uint64_t>(layer.bias_count());
    }
    c.total = c.conv_weights + c.nin_weights + c.classifier_weights + c.biases;
    return c;
}

/// Weight and bias storage for every layer of a spec (empty entries for
/// pooling layers). The same shapes serve as gradient and velocity buffers.
template <std::floating_point S>
struct Parameters {
    std::vector<std::vector<S>> weights;
    std::vector<std::vector<S>> biases;

    static Parameters zeros_like(const NetworkSpec& net) {
        Parameters p;
        p.weights.reserve(net.layers.size());
        p.biases.reserve(net.layers.size());
        for (const auto& layer : net.layers) {
            p.weights.emplace_back(layer.weight_count(), S(0));
            p.biases.emplace_back(layer.bias_count(), S(0));
        }
        return p;
    }

    void zero() {
        for (auto& w : weights) std::fill(w.begin(), w.end(), S(0));
        for (auto& b : biases) std::fill(b.begin(), b.end(), S(0));
    }

    void accumulate(const Parameters& other) {
        for (std::size_t i = 0; i < weights.size(); ++i) {
            for (std::size_t j = 0; j < weights[i].size(); ++j) weights[i][j] += other.weights[i][j];
            for (std::size_t j = 0; j < biases[i].size(); ++j) biases[i][j] += other.biases[i][j];
        }
    }

    void scale(S factor) {
        for (auto& w : weights)
            for (auto& v : w) v *= factor;
        for (auto& b : biases)
            for (auto& v : b) v *= factor;
    }
};

/// Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights, zero biases. Zero
/// biases keep every ground row at zero, where active-only backprop is
/// exact.
template <std::floating_point S>
Parameters<S> init_parameters(const NetworkSpec& net, std::uint64_t seed) {
    auto params = Parameters<S>::zeros_like(net);
    auto rng = derive_rng(seed, 0x1217, 0);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& layer = net.layers[i];
        if (layer.kind == LayerKind::pool) continue;
        const int fan_in = layer.kind == LayerKind::output
                               ? layer.in_features
                               : layer.filter_size * layer.filter_size * layer.in_features;
        const double bound = std::sqrt(6.0 / fan_in);
        for (auto& w : params.weights[i])
            w = static_cast<S>(uniform_range(rng, -bound, bound));
    }
    return params;
}

} // namespace sparsecnn
