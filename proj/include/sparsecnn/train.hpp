#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sparsecnn/analysis.hpp"
#include "sparsecnn/dataset.hpp"
#include "sparsecnn/network.hpp"

namespace sparsecnn {

/// Per-layer gradient accumulators, shape-locked to a NetworkSpec.
template <std::floating_point S>
using GradientSet = Parameters<S>;

struct TrainConfig {
    int epochs = 20;
    int batch_size = 16;
    float learning_rate = 0.01f;
    float lr_decay = 0.98f; // multiplicative, per epoch
    float momentum = 0.9f;
    std::uint64_t seed = 1;
    int checkpoint_interval = 0; // epochs between checkpoints; 0 = final only
    int threads = 1;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs: must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
        if (!(learning_rate > 0)) throw ConfigError("learning_rate: must be > 0");
        if (!(lr_decay > 0)) throw ConfigError("lr_decay: must be > 0");
        if (momentum < 0 || momentum >= 1) throw ConfigError("momentum: must be in [0, 1)");
        if (threads < 1) throw ConfigError("threads: must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// Single-sample forward / backward

namespace detail {

// rng stream tags so augmentation, dropout and init never collide
inline constexpr std::uint64_t kInitStream = 0x1217;
inline constexpr std::uint64_t kShuffleStream = 0x5348;
inline constexpr std::uint64_t kDropoutStream = 0xD0D0;
inline constexpr std::uint64_t kAugmentStream = 0xA6A6;

template <std::floating_point S>
struct ForwardTrace {
    std::vector<SparseGrid<S>> acts;               // acts[i] = input of layer i; back = top grid
    std::vector<std::optional<SparseGrid<S>>> dropped; // masked input actually fed to layer i
    std::vector<DropoutMask> masks;                // per layer; empty keep = no dropout
    std::vector<PoolTrace> pool_traces;            // per layer; used for pool layers
    std::vector<S> top_input;                      // classifier input (after its dropout)
    DropoutMask top_mask;
    std::vector<S> logits;
    std::vector<S> probs;
};

template <std::floating_point S>
const SparseGrid<S>& layer_input(const ForwardTrace<S>& t, std::size_t i) {
    return t.dropped[i] ? *t.dropped[i] : t.acts[i];
}

/// Runs the stack, keeping everything backward needs. `dropout_rng` is only
/// touched when train_dropout is set and a layer has p > 0.
template <std::floating_point S>
void forward_sample(const NetworkSpec& net, const Parameters<S>& params,
                    const SparseGrid<S>& input, bool train_dropout,
                    std::mt19937_64& dropout_rng, ForwardTrace<S>& t) {
    const std::size_t n_layers = net.layers.size();
    t.acts.clear();
    t.dropped.assign(n_layers, std::nullopt);
    t.masks.assign(n_layers, {});
    t.pool_traces.assign(n_layers, {});
    t.acts.push_back(input);

    for (std::size_t i = 0; i + 1 < n_layers; ++i) { // all but the output layer
        const auto& layer = net.layers[i];
        if (train_dropout && layer.dropout_p > 0.f) {
            t.masks[i] = sample_dropout_mask(layer.in_features, layer.dropout_p, dropout_rng);
            t.dropped[i] = dropout_forward(t.acts[i], t.masks[i]);
        }
        const SparseGrid<S>& in = layer_input(t, i);
        if (layer.kind == LayerKind::pool)
            t.acts.push_back(pool_forward(in, &t.pool_traces[i]));
        else
            t.acts.push_back(conv_forward(layer, std::span<const S>(params.weights[i]),
                                          std::span<const S>(params.biases[i]), in));
    }

    const auto& out_layer = net.layers.back();
    const auto& top = t.acts.back();
    auto top_row = top.site(0, 0);
    t.top_input.assign(top_row.begin(), top_row.end());
    if (train_dropout && out_layer.dropout_p > 0.f) {
        t.top_mask = sample_dropout_mask(out_layer.in_features, out_layer.dropout_p, dropout_rng);
        const S scale = S(1) / (S(1) - S(t.top_mask.p));
        for (std::size_t c = 0; c < t.top_input.size(); ++c)
            t.top_input[c] = t.top_mask.keep[c] ? t.top_input[c] * scale : S(0);
    } else {
        t.top_mask = {};
    }
    t.logits = output_logits(out_layer, std::span<const S>(params.weights.back()),
                             std::span<const S>(params.biases.back()),
                             std::span<const S>(t.top_input));
    t.probs = softmax<S>(t.logits);
}

/// Cross-entropy of the traced sample, computed in double via log-sum-exp.
template <std::floating_point S>
double trace_loss(const ForwardTrace<S>& t, int label) {
    double m = -std::numeric_limits<double>::infinity();
    for (const S v : t.logits) m = std::max(m, static_cast<double>(v));
    double z = 0;
    for (const S v : t.logits) z += std::exp(static_cast<double>(v) - m);
    return -(static_cast<double>(t.logits[static_cast<std::size_t>(label)]) - m - std::log(z));
}

template <std::floating_point S>
int trace_prediction(const ForwardTrace<S>& t) {
    int best = 0;
    for (std::size_t j = 1; j < t.probs.size(); ++j)
        if (t.probs[j] > t.probs[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
    return best;
}

/// Active-only backward pass; accumulates into `grads` (not zeroed here).
template <std::floating_point S>
void backward_sample(const NetworkSpec& net, const Parameters<S>& params, int label,
                     const ForwardTrace<S>& t, GradientSet<S>& grads) {
    const std::size_t n_layers = net.layers.size();
    const auto& out_layer = net.layers.back();
    const auto& top = t.acts.back();

    std::vector<S> d_top = output_backward(
        out_layer, std::span<const S>(params.weights.back()), std::span<const S>(t.top_input),
        std::span<const S>(t.probs), label, std::span<S>(grads.weights.back()),
        std::span<S>(grads.biases.back()));
    if (!t.top_mask.keep.empty()) {
        const S scale = S(1) / (S(1) - S(t.top_mask.p));
        for (std::size_t c = 0; c < d_top.size(); ++c)
            d_top[c] = t.top_mask.keep[c] ? d_top[c] * scale : S(0);
    }

    // deltas are feature-matrix aligned; row 0 (ground) stays zero
    std::vector<S> delta(static_cast<std::size_t>(top.num_rows()) * top.features(), S(0));
    const int top_row = top.row_index(0, 0);
    if (top_row != 0)
        for (int c = 0; c < top.features(); ++c)
            delta[static_cast<std::size_t>(top_row) * top.features() + c] = d_top[static_cast<std::size_t>(c)];

    for (std::size_t i = n_layers - 1; i-- > 0;) {
        const auto& layer = net.layers[i];
        const SparseGrid<S>& in = layer_input(t, i);
        const SparseGrid<S>& out = t.acts[i + 1];
        std::vector<S> d_in;
        if (layer.kind == LayerKind::pool)
            d_in = pool_backward(in, out, t.pool_traces[i], std::span<const S>(delta));
        else
            d_in = conv_backward(layer, std::span<const S>(params.weights[i]), in, out,
                                 std::span<const S>(delta), std::span<S>(grads.weights[i]),
                                 std::span<S>(grads.biases[i]));
        if (!t.masks[i].keep.empty())
            d_in = dropout_backward(t.masks[i], layer.in_features, std::span<const S>(d_in));
        delta = std::move(d_in);
    }
}

} // namespace detail

template <std::floating_point S>
struct TrainSample {
    const SparseGrid<S>* grid = nullptr;
    int label = 0;
    std::uint64_t index = 0; // dataset index; seeds the per-sample dropout stream
};

struct BatchStats {
    double loss = 0;
    double accuracy = 0;
};

/// Mean cross-entropy loss, gradients averaged over the batch, and batch
/// accuracy. Samples are sharded round-robin over `threads` workers whose
/// accumulators merge in a fixed order, so results are reproducible for a
/// given thread count.
template <std::floating_point S>
BatchStats loss_and_gradients(const NetworkSpec& net, const Parameters<S>& params,
                              std::span<const TrainSample<S>> batch, bool train_dropout,
                              std::uint64_t seed, std::uint64_t epoch, int threads,
                              GradientSet<S>& grads) {
    if (batch.empty()) throw ValueError("loss_and_gradients: empty batch");
    for (const auto& s : batch)
        if (s.grid->size() != net.input_size)
            throw ShapeError("batch grid size " + std::to_string(s.grid->size()) +
                             " != network input size " + std::to_string(net.input_size));
    grads.zero();

    const int n_workers =
        std::max(1, std::min<int>(threads, static_cast<int>(batch.size())));
    std::vector<double> losses(static_cast<std::size_t>(n_workers), 0.0);
    std::vector<int> correct(static_cast<std::size_t>(n_workers), 0);

    auto run_worker = [&](int w, GradientSet<S>& acc) {
        detail::ForwardTrace<S> trace;
        for (std::size_t i = static_cast<std::size_t>(w); i < batch.size();
             i += static_cast<std::size_t>(n_workers)) {
            const auto& sample = batch[i];
            auto rng = derive_rng(seed ^ detail::kDropoutStream, epoch, sample.index);
            detail::forward_sample(net, params, *sample.grid, train_dropout, rng, trace);
            losses[static_cast<std::size_t>(w)] += detail::trace_loss(trace, sample.label);
            correct[static_cast<std::size_t>(w)] +=
                detail::trace_prediction(trace) == sample.label ? 1 : 0;
            detail::backward_sample(net, params, sample.label, trace, acc);
        }
    };

    if (n_workers == 1) {
        run_worker(0, grads);
    } else {
        std::vector<GradientSet<S>> partial(static_cast<std::size_t>(n_workers - 1));
        for (auto& p : partial) p = GradientSet<S>::zeros_like(net);
        std::vector<std::thread> pool;
        for (int w = 1; w < n_workers; ++w)
            pool.emplace_back(run_worker, w, std::ref(partial[static_cast<std::size_t>(w) - 1]));
        run_worker(0, grads);
        for (auto& th : pool) th.join();
        for (const auto& p : partial) grads.accumulate(p); // fixed merge order
    }

    grads.scale(S(1) / S(batch.size()));
    BatchStats stats;
    for (double l : losses) stats.loss += l;
    stats.loss /= static_cast<double>(batch.size());
    int total_correct = 0;
    for (int c : correct) total_correct += c;
    stats.accuracy = static_cast<double>(total_correct) / static_cast<double>(batch.size());
    return stats;
}

/// v <- momentum * v - lr * g;  theta <- theta + v
template <std::floating_point S>
void sgd_step(Parameters<S>& params, const GradientSet<S>& grads, Parameters<S>& velocity,
              S learning_rate, S momentum) {
    for (std::size_t i = 0; i < params.weights.size(); ++i) {
        for (std::size_t j = 0; j < params.weights[i].size(); ++j) {
            S& v = velocity.weights[i][j];
            v = momentum * v - learning_rate * grads.weights[i][j];
            params.weights[i][j] += v;
        }
        for (std::size_t j = 0; j < params.biases[i].size(); ++j) {
            S& v = velocity.biases[i][j];
            v = momentum * v - learning_rate * grads.biases[i][j];
            params.biases[i][j] += v;
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation

/// Test-mode class probabilities (no dropout).
template <std::floating_point S>
std::vector<S> predict_probs(const NetworkSpec& net, const Parameters<S>& params,
                             const SparseGrid<S>& input) {
    detail::ForwardTrace<S> trace;
    std::mt19937_64 unused(0);
    detail::forward_sample(net, params, input, false, unused, trace);
    return trace.probs;
}

/// Test-mode cross-entropy of a single sample.
template <std::floating_point S>
double sample_loss(const NetworkSpec& net, const Parameters<S>& params,
                   const SparseGrid<S>& input, int label) {
    detail::ForwardTrace<S> trace;
    std::mt19937_64 unused(0);
    detail::forward_sample(net, params, input, false, unused, trace);
    return detail::trace_loss(trace, label);
}

struct EvalResult {
    double top1_error = 0;
    double topk_error = 0;
    int top_k = 1;
};

/// Top-1 (and top-k) error over an encoded test set. `encode` must be pure;
/// it is called from multiple workers.
template <std::floating_point S>
EvalResult evaluate(const NetworkSpec& net, const Parameters<S>& params, std::size_t count,
                    const std::function<SparseGrid<S>(std::size_t)>& encode,
                    const std::function<int(std::size_t)>& label_of, int top_k = 1,
                    int threads = 1) {
    if (count == 0) throw ValueError("evaluate: empty dataset");
    const int n_workers = std::max(1, std::min<int>(threads, static_cast<int>(count)));
    std::vector<std::int64_t> top1(static_cast<std::size_t>(n_workers), 0);
    std::vector<std::int64_t> topk(static_cast<std::size_t>(n_workers), 0);

    auto run_worker = [&](int w) {
        for (std::size_t i = static_cast<std::size_t>(w); i < count;
             i += static_cast<std::size_t>(n_workers)) {
            const auto grid = encode(i);
            const auto probs = predict_probs(net, params, grid);
            const int label = label_of(i);
            const S p_label = probs[static_cast<std::size_t>(label)];
            int rank = 0;
            for (std::size_t j = 0; j < probs.size(); ++j) {
                if (probs[j] > p_label) ++rank;
                else if (probs[j] == p_label && static_cast<int>(j) < label) ++rank;
            }
            if (rank >= 1) ++top1[static_cast<std::size_t>(w)];
            if (rank >= top_k) ++topk[static_cast<std::size_t>(w)];
        }
    };
    if (n_workers == 1) {
        run_worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 1; w < n_workers; ++w) pool.emplace_back(run_worker, w);
        run_worker(0);
        for (auto& th : pool) th.join();
    }

    EvalResult r;
    r.top_k = top_k;
    std::int64_t e1 = 0, ek = 0;
    for (std::size_t w = 0; w < top1.size(); ++w) {
        e1 += top1[w];
        ek += topk[w];
    }
    r.top1_error = static_cast<double>(e1) / static_cast<double>(count);
    r.topk_error = static_cast<double>(ek) / static_cast<double>(count);
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned little-endian binary, 32-bit floats.

template <std::floating_point S>
struct TrainState {
    Parameters<S> params;
    Parameters<S> velocity;
    int epoch = 0; // next epoch to run
    std::uint64_t seed = 0;
    std::mt19937_64 shuffle_rng;

    static TrainState fresh(const NetworkSpec& net, std::uint64_t seed) {
        TrainState st;
        st.params = init_parameters<S>(net, seed);
        st.velocity = Parameters<S>::zeros_like(net);
        st.seed = seed;
        st.shuffle_rng = derive_rng(seed, detail::kShuffleStream, 0);
        return st;
    }
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline constexpr char kCheckpointMagic[8] = {'S', 'C', 'N', 'N', 'C', 'K', 'P', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kCheckpointTrailer = 0xC0DA1EAF;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw FormatError("checkpoint: truncated file");
    return v;
}

inline void write_f32_array(std::ostream& out, const std::vector<float>& v) {
    write_pod<std::uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
}

inline std::vector<float> read_f32_array(std::istream& in, std::size_t expected) {
    const auto n = read_pod<std::uint64_t>(in);
    if (n != expected)
        throw FormatError("checkpoint: array length " + std::to_string(n) + ", expected " +
                          std::to_string(expected));
    std::vector<float> v(n);
    if (!in.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(n * sizeof(float))))
        throw FormatError("checkpoint: truncated array");
    return v;
}

} // namespace detail

inline void checkpoint_save(const std::string& path, const NetworkSpec& net,
                            const TrainState<float>& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open checkpoint for writing: " + path);
    out.write(detail::kCheckpointMagic, 8);
    detail::write_pod(out, detail::kCheckpointVersion);
    detail::write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(net.family));
    detail::write_pod<std::int32_t>(out, net.levels);
    detail::write_pod<std::int32_t>(out, net.k);
    detail::write_pod<std::int32_t>(out, net.input_features);
    detail::write_pod<std::int32_t>(out, net.num_classes);
    detail::write_pod<std::uint64_t>(out, detail::fnv1a(layer_string(net)));
    detail::write_pod<std::int32_t>(out, state.epoch);
    detail::write_pod<std::uint64_t>(out, state.seed);
    std::ostringstream rng_text;
    rng_text << state.shuffle_rng;
    const std::string rng_str = rng_text.str();
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(rng_str.size()));
    out.write(rng_str.data(), static_cast<std::streamsize>(rng_str.size()));
    for (std::size_t i = 0; i < state.params.weights.size(); ++i) {
        detail::write_f32_array(out, state.params.weights[i]);
        detail::write_f32_array(out, state.params.biases[i]);
    }
    for (std::size_t i = 0; i < state.velocity.weights.size(); ++i) {
        detail::write_f32_array(out, state.velocity.weights[i]);
        detail::write_f32_array(out, state.velocity.biases[i]);
    }
    detail::write_pod(out, detail::kCheckpointTrailer);
    if (!out) throw FormatError("checkpoint write failed: " + path);
}

inline TrainState<float> checkpoint_load(const std::string& path, const NetworkSpec& net) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint: " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
        throw FormatError("checkpoint: bad magic in " + path);
    if (detail::read_pod<std::uint32_t>(in) != detail::kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version");
    const auto family = detail::read_pod<std::uint8_t>(in);
    const auto levels = detail::read_pod<std::int32_t>(in);
    const auto k = detail::read_pod<std::int32_t>(in);
    const auto feats = detail::read_pod<std::int32_t>(in);
    const auto classes = detail::read_pod<std::int32_t>(in);
    const auto hash = detail::read_pod<std::uint64_t>(in);
    if (family != static_cast<std::uint8_t>(net.family) || levels != net.levels || k != net.k ||
        feats != net.input_features || classes != net.num_classes ||
        hash != detail::fnv1a(layer_string(net)))
        throw CheckpointError("checkpoint " + path + " was written for a different network (" +
                              std::string(family_name(static_cast<Family>(family))) + " l=" +
                              std::to_string(levels) + " k=" + std::to_string(k) + " M=" +
                              std::to_string(feats) + " classes=" + std::to_string(classes) + ")");

    TrainState<float> state;
    state.epoch = detail::read_pod<std::int32_t>(in);
    state.seed = detail::read_pod<std::uint64_t>(in);
    const auto rng_len = detail::read_pod<std::uint32_t>(in);
    std::string rng_str(rng_len, '\0');
    if (!in.read(rng_str.data(), rng_len)) throw FormatError("checkpoint: truncated rng state");
    std::istringstream rng_text(rng_str);
    rng_text >> state.shuffle_rng;
    if (!rng_text) throw FormatError("checkpoint: bad rng state");
    state.params = Parameters<float>::zeros_like(net);
    state.velocity = Parameters<float>::zeros_like(net);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        state.params.weights[i] = detail::read_f32_array(in, net.layers[i].weight_count());
        state.params.biases[i] = detail::read_f32_array(in, net.layers[i].bias_count());
    }
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        state.velocity.weights[i] = detail::read_f32_array(in, net.layers[i].weight_count());
        state.velocity.biases[i] = detail::read_f32_array(in, net.layers[i].bias_count());
    }
    if (detail::read_pod<std::uint32_t>(in) != detail::kCheckpointTrailer)
        throw FormatError("checkpoint: bad trailer (truncated or corrupt)");
    return state;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochStats {
    int epoch = 0;
    double train_loss = 0;
    double train_error = 0;
    double test_error = 0;
};

/// Encoders hand the loop fully-prepared input grids. The train encoder gets
/// a per-(epoch, sample) rng for augmentation; the test encoder must be
/// deterministic. Checkpointing is delegated so callers control paths.
template <std::floating_point S>
struct TrainHooks {
    std::function<SparseGrid<S>(std::size_t index, std::mt19937_64& rng)> encode_train;
    std::function<int(std::size_t index)> train_label;
    std::function<SparseGrid<S>(std::size_t index)> encode_test;
    std::function<int(std::size_t index)> test_label;
    std::size_t train_count = 0;
    std::size_t test_count = 0;
    std::function<void(const EpochStats&)> on_epoch;                 // optional
    std::function<void(const TrainState<S>&, int epoch)> save_state; // optional
};

template <std::floating_point S>
void train_network(const NetworkSpec& net, TrainState<S>& state, const TrainConfig& config,
                   const TrainHooks<S>& hooks) {
    config.validate();
    GradientSet<S> grads = GradientSet<S>::zeros_like(net);
    std::vector<SparseGrid<S>> batch_grids;
    std::vector<TrainSample<S>> batch;

    for (int epoch = state.epoch; epoch < config.epochs; ++epoch) {
        const S lr = static_cast<S>(config.learning_rate *
                                    std::pow(config.lr_decay, static_cast<double>(epoch)));
        double loss_sum = 0;
        double correct_sum = 0;
        for_each_minibatch(
            hooks.train_count, static_cast<std::size_t>(config.batch_size), state.shuffle_rng,
            [&](std::span<const std::size_t> indices) {
                batch_grids.clear();
                batch.clear();
                batch_grids.reserve(indices.size());
                for (const std::size_t idx : indices) {
                    auto rng = derive_rng(state.seed ^ detail::kAugmentStream,
                                          static_cast<std::uint64_t>(epoch), idx);
                    batch_grids.push_back(hooks.encode_train(idx, rng));
                }
                for (std::size_t i = 0; i < indices.size(); ++i)
                    batch.push_back({&batch_grids[i], hooks.train_label(indices[i]), indices[i]});
                const auto stats = loss_and_gradients(
                    net, state.params, std::span<const TrainSample<S>>(batch), true, state.seed,
                    static_cast<std::uint64_t>(epoch), config.threads, grads);
                sgd_step(state.params, grads, state.velocity, lr, static_cast<S>(config.momentum));
                loss_sum += stats.loss * static_cast<double>(indices.size());
                correct_sum += stats.accuracy * static_cast<double>(indices.size());
            });

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(hooks.train_count);
        stats.train_error = 1.0 - correct_sum / static_cast<double>(hooks.train_count);
        if (hooks.test_count > 0) {
            const auto eval = evaluate(net, state.params, hooks.test_count, hooks.encode_test,
                                       hooks.test_label, 1, config.threads);
            stats.test_error = eval.top1_error;
        }
        state.epoch = epoch + 1;
        if (hooks.on_epoch) hooks.on_epoch(stats);
        if (hooks.save_state &&
            ((config.checkpoint_interval > 0 && (epoch + 1) % config.checkpoint_interval == 0) ||
             epoch + 1 == config.epochs))
            hooks.save_state(state, epoch);
    }
}

} // namespace sparsecnn
