#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "sparsecnn/encode.hpp"
#include "sparsecnn/train.hpp"
#include "support/random_grids.hpp"

using namespace sparsecnn;

namespace {

template <typename To, typename From>
Parameters<To> cast_params(const NetworkSpec& net, const Parameters<From>& p) {
    auto out = Parameters<To>::zeros_like(net);
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
        out.weights[i].assign(p.weights[i].begin(), p.weights[i].end());
        out.biases[i].assign(p.biases[i].begin(), p.biases[i].end());
    }
    return out;
}

template <typename S>
SparseGrid<S> cast_grid(const SparseGrid<float>& g) {
    std::vector<S> ground(g.ground().begin(), g.ground().end());
    SparseGrid<S> out(g.size(), g.features(), ground);
    std::vector<S> row(static_cast<std::size_t>(g.features()));
    for (int r = 1; r < g.num_rows(); ++r) {
        for (int c = 0; c < g.features(); ++c) row[static_cast<std::size_t>(c)] = S(g.row(r)[c]);
        out.set_site(g.site_of_row(r) % g.size(), g.site_of_row(r) / g.size(), row);
    }
    return out;
}

/// max |a - b| over all gradient entries, relative to the largest magnitude
double grad_rel_err(const Parameters<float>& a, const Parameters<double>& b, bool weights_only) {
    double max_diff = 0, max_mag = 0;
    for (std::size_t i = 0; i < a.weights.size(); ++i) {
        for (std::size_t j = 0; j < a.weights[i].size(); ++j) {
            max_diff = std::max(max_diff, std::abs(a.weights[i][j] - b.weights[i][j]));
            max_mag = std::max({max_mag, std::abs(b.weights[i][j])});
        }
        if (weights_only) continue;
        for (std::size_t j = 0; j < a.biases[i].size(); ++j) {
            max_diff = std::max(max_diff, std::abs(a.biases[i][j] - b.biases[i][j]));
            max_mag = std::max({max_mag, std::abs(b.biases[i][j])});
        }
    }
    return max_diff / std::max(max_mag, 1e-12);
}

} // namespace

TEST_CASE("untrained network: batch loss starts near ln(C)") {
    // With zero biases an all-ground input produces exactly zero logits, so
    // the uniform-softmax value ln(C) is exact there. Random sparse batches
    // push logits away from zero (the init preserves activation scale), which
    // biases the loss above ln(C); measured deviations stay within ~60%.
    for (int classes : {5, 10}) {
        auto net = build_deepcnet(2, 3, 1, classes);
        auto params = init_parameters<float>(net, 99);

        SparseGrid<float> empty(net.input_size, 1);
        std::vector<TrainSample<float>> batch;
        for (std::size_t i = 0; i < 8; ++i) batch.push_back({&empty, static_cast<int>(i % classes), i});
        auto grads = GradientSet<float>::zeros_like(net);
        auto stats = loss_and_gradients(net, params, std::span<const TrainSample<float>>(batch),
                                        false, 1, 0, 1, grads);
        CHECK(std::abs(stats.loss - std::log(classes)) / std::log(classes) < 0.05);

        auto rng = make_rng(1);
        std::vector<SparseGrid<float>> grids;
        std::vector<TrainSample<float>> sparse_batch;
        for (std::size_t i = 0; i < 32; ++i) {
            SparseGrid<float> g(net.input_size, 1);
            const int pixels = 3 + static_cast<int>(uniform_int(rng, 0, 4));
            for (int p = 0; p < pixels; ++p)
                g.set_site(static_cast<int>(uniform_int(rng, 4, 8)),
                           static_cast<int>(uniform_int(rng, 4, 8)), std::vector<float>{1.f});
            grids.push_back(std::move(g));
        }
        for (std::size_t i = 0; i < grids.size(); ++i)
            sparse_batch.push_back({&grids[i], static_cast<int>(i % classes), i});
        stats = loss_and_gradients(net, params, std::span<const TrainSample<float>>(sparse_batch),
                                   false, 1, 0, 1, grads);
        CHECK(stats.loss > std::log(classes) * 0.8);
        CHECK(stats.loss < std::log(classes) * 1.6);
    }
}

TEST_CASE("a batch of one sample duplicated B times averages to the single gradient") {
    auto net = build_deepcnet(1, 2, 1, 4);
    auto params = init_parameters<float>(net, 5);
    auto rng = make_rng(2);
    auto grid = testgen::random_grid<float>(rng, net.input_size, 1, 0.3);

    auto grads1 = GradientSet<float>::zeros_like(net);
    std::vector<TrainSample<float>> single{{&grid, 2, 0}};
    loss_and_gradients(net, params, std::span<const TrainSample<float>>(single), false, 1, 0, 1,
                       grads1);

    auto gradsB = GradientSet<float>::zeros_like(net);
    std::vector<TrainSample<float>> batch(6, TrainSample<float>{&grid, 2, 0});
    loss_and_gradients(net, params, std::span<const TrainSample<float>>(batch), false, 1, 0, 1,
                       gradsB);

    for (std::size_t i = 0; i < grads1.weights.size(); ++i)
        for (std::size_t j = 0; j < grads1.weights[i].size(); ++j)
            CHECK(std::abs(grads1.weights[i][j] - gradsB.weights[i][j]) < 1e-6);
}

TEST_CASE("analytic gradients match finite differences (zero biases, sparse sample)") {
    // 32-bit analytic gradients against a 64-bit central-difference oracle,
    // step 1e-3, weights checked relative to the gradient's largest entry
    for (auto family : {Family::deepcnet, Family::deepcnin}) {
        for (int m : {1, 9}) {
            auto net = family == Family::deepcnet ? build_deepcnet(1, 2, m, 5)
                                                  : build_deepcnin(1, 2, m, 5);
            auto params = init_parameters<float>(net, 11);
            auto rng = make_rng(static_cast<std::uint64_t>(m) + 100);
            auto grid = testgen::random_grid<float>(rng, net.input_size, m, 0.25);
            const int label = 3;

            auto grads = GradientSet<float>::zeros_like(net);
            std::vector<TrainSample<float>> batch{{&grid, label, 0}};
            loss_and_gradients(net, params, std::span<const TrainSample<float>>(batch), false, 1,
                               0, 1, grads);

            auto dparams = cast_params<double>(net, params);
            auto dgrid = cast_grid<double>(grid);
            auto fd = Parameters<double>::zeros_like(net);
            const double eps = 1e-3;
            for (std::size_t i = 0; i < dparams.weights.size(); ++i)
                for (std::size_t j = 0; j < dparams.weights[i].size(); ++j) {
                    const double orig = dparams.weights[i][j];
                    dparams.weights[i][j] = orig + eps;
                    const double lp = sample_loss(net, dparams, dgrid, label);
                    dparams.weights[i][j] = orig - eps;
                    const double lm = sample_loss(net, dparams, dgrid, label);
                    dparams.weights[i][j] = orig;
                    fd.weights[i][j] = (lp - lm) / (2 * eps);
                }
            CHECK(grad_rel_err(grads, fd, true) < 1e-4);
        }
    }
}

TEST_CASE("sgd_step recurrences") {
    auto net = build_deepcnet(1, 1, 1, 2);
    auto params = Parameters<float>::zeros_like(net);
    auto grads = Parameters<float>::zeros_like(net);
    auto velocity = Parameters<float>::zeros_like(net);

    SECTION("no momentum: theta moves by -lr * g") {
        grads.weights[0][0] = 1.f;
        sgd_step(params, grads, velocity, 0.1f, 0.f);
        CHECK(params.weights[0][0] == Catch::Approx(-0.1f));
    }

    SECTION("zero gradients: params fixed, velocity decays") {
        velocity.weights[0][0] = 1.f;
        sgd_step(params, grads, velocity, 0.1f, 0.9f);
        CHECK(params.weights[0][0] == Catch::Approx(1.f * 0.9f));
        CHECK(velocity.weights[0][0] == Catch::Approx(0.9f));
    }

    SECTION("two steps at constant gradient accumulate -lr*g*(1 + 1.9)") {
        grads.weights[0][0] = 1.f;
        sgd_step(params, grads, velocity, 0.1f, 0.9f);
        sgd_step(params, grads, velocity, 0.1f, 0.9f);
        CHECK(params.weights[0][0] == Catch::Approx(-0.1f * 2.9f));
    }
}

namespace {

/// Two linearly separable stroke classes: horizontal vs vertical bars.
/// k = 4 keeps enough first-layer filters alive under ReLU.
struct ToyProblem {
    NetworkSpec net = build_deepcnet(1, 4, 1, 2);
    EncodingConfig enc = EncodingConfig::from_levels(1, false);
    std::vector<StrokeCharacter> samples;
    std::vector<int> labels;

    ToyProblem() {
        auto rng = make_rng(7777);
        for (int i = 0; i < 40; ++i) {
            StrokeCharacter ch;
            const int label = i % 2;
            const double jitter = uniform_range(rng, -0.2, 0.2);
            if (label == 0)
                ch.strokes.push_back({{-1, jitter}, {1, jitter}});
            else
                ch.strokes.push_back({{jitter, -1}, {jitter, 1}});
            ch.label = label;
            samples.push_back(std::move(ch));
            labels.push_back(label);
        }
    }

    TrainHooks<float> hooks() {
        TrainHooks<float> h;
        h.train_count = samples.size();
        h.test_count = samples.size();
        h.encode_train = [this](std::size_t i, std::mt19937_64&) {
            return rasterize<float>(samples[i], enc);
        };
        h.train_label = [this](std::size_t i) { return labels[i]; };
        h.encode_test = [this](std::size_t i) { return rasterize<float>(samples[i], enc); };
        h.test_label = [this](std::size_t i) { return labels[i]; };
        return h;
    }
};

} // namespace

TEST_CASE("training a separable toy problem reaches zero error; loss decreases") {
    ToyProblem toy;
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.05f;
    cfg.seed = 3;
    auto state = TrainState<float>::fresh(toy.net, cfg.seed);
    std::vector<EpochStats> history;
    auto hooks = toy.hooks();
    hooks.on_epoch = [&](const EpochStats& s) { history.push_back(s); };
    train_network(toy.net, state, cfg, hooks);

    REQUIRE(history.size() == 10);
    CHECK(history.back().test_error == 0.0);
    CHECK(history[4].train_loss < history[0].train_loss);

    SECTION("evaluate: top-k containment and k = C") {
        auto hooks2 = toy.hooks();
        auto r1 = evaluate<float>(toy.net, state.params, hooks2.test_count, hooks2.encode_test,
                                  hooks2.test_label, 2, 1);
        CHECK(r1.topk_error <= r1.top1_error);
        CHECK(r1.topk_error == 0.0);
    }
}

TEST_CASE("identical seeds give bitwise-identical gradients across thread counts") {
    auto net = build_deepcnet(2, 2, 1, 4, {0.f, 0.1f, 0.2f, 0.3f});
    auto params = init_parameters<float>(net, 21);
    auto rng = make_rng(5);
    std::vector<SparseGrid<float>> grids;
    std::vector<TrainSample<float>> batch;
    for (std::size_t i = 0; i < 8; ++i)
        grids.push_back(testgen::random_grid<float>(rng, net.input_size, 1, 0.1));
    for (std::size_t i = 0; i < 8; ++i)
        batch.push_back({&grids[i], static_cast<int>(i % 4), i});

    auto g1 = GradientSet<float>::zeros_like(net);
    auto g2 = GradientSet<float>::zeros_like(net);
    auto s1 = loss_and_gradients(net, params, std::span<const TrainSample<float>>(batch), true,
                                 42, 3, 1, g1);
    auto s2 = loss_and_gradients(net, params, std::span<const TrainSample<float>>(batch), true,
                                 42, 3, 1, g2);
    CHECK(s1.loss == s2.loss);
    for (std::size_t i = 0; i < g1.weights.size(); ++i)
        CHECK(g1.weights[i] == g2.weights[i]);

    // dropout masks are keyed by sample index, not worker, so per-sample
    // results are thread-count independent (merge order is not)
    auto g4 = GradientSet<float>::zeros_like(net);
    loss_and_gradients(net, params, std::span<const TrainSample<float>>(batch), true, 42, 3, 4,
                       g4);
    for (std::size_t i = 0; i < g1.weights.size(); ++i)
        for (std::size_t j = 0; j < g1.weights[i].size(); ++j)
            CHECK(std::abs(g1.weights[i][j] - g4.weights[i][j]) < 1e-5);
}

TEST_CASE("checkpoints") {
    ToyProblem toy;
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 17;
    const auto path = std::filesystem::temp_directory_path() / "sparsecnn_test.ckpt";

    SECTION("save/load round trip preserves evaluation exactly") {
        auto state = TrainState<float>::fresh(toy.net, cfg.seed);
        train_network(toy.net, state, cfg, toy.hooks());
        checkpoint_save(path.string(), toy.net, state);
        auto loaded = checkpoint_load(path.string(), toy.net);
        CHECK(loaded.epoch == state.epoch);
        CHECK(loaded.params.weights == state.params.weights);
        CHECK(loaded.params.biases == state.params.biases);
        CHECK(loaded.velocity.weights == state.velocity.weights);

        auto hs = toy.hooks();
        auto before = evaluate<float>(toy.net, state.params, hs.test_count, hs.encode_test,
                                      hs.test_label, 1, 1);
        auto after = evaluate<float>(toy.net, loaded.params, hs.test_count, hs.encode_test,
                                     hs.test_label, 1, 1);
        CHECK(before.top1_error == after.top1_error);
    }

    SECTION("loading against a different network is an error") {
        auto state = TrainState<float>::fresh(toy.net, cfg.seed);
        checkpoint_save(path.string(), toy.net, state);
        auto other = build_deepcnet(1, 3, 1, 2); // different k
        CHECK_THROWS_AS(checkpoint_load(path.string(), other), CheckpointError);
        auto other2 = build_deepcnet(2, 2, 1, 2); // different levels
        CHECK_THROWS_AS(checkpoint_load(path.string(), other2), CheckpointError);
    }

    SECTION("corrupt and truncated files are format errors") {
        auto state = TrainState<float>::fresh(toy.net, cfg.seed);
        checkpoint_save(path.string(), toy.net, state);
        auto bytes = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, bytes / 2);
        CHECK_THROWS_AS(checkpoint_load(path.string(), toy.net), FormatError);
        std::ofstream out(path, std::ios::binary);
        out << "garbagegarbage";
        out.close();
        CHECK_THROWS_AS(checkpoint_load(path.string(), toy.net), FormatError);
    }

    SECTION("resumed training matches uninterrupted training bitwise") {
        // uninterrupted: 5 epochs
        TrainConfig full = cfg;
        full.epochs = 5;
        auto straight = TrainState<float>::fresh(toy.net, cfg.seed);
        train_network(toy.net, straight, full, toy.hooks());

        // interrupted: 3 epochs, checkpoint, reload, 2 more
        auto first = TrainState<float>::fresh(toy.net, cfg.seed);
        TrainConfig head = cfg;
        head.epochs = 3;
        train_network(toy.net, first, head, toy.hooks());
        checkpoint_save(path.string(), toy.net, first);
        auto resumed = checkpoint_load(path.string(), toy.net);
        train_network(toy.net, resumed, full, toy.hooks());

        CHECK(resumed.params.weights == straight.params.weights);
        CHECK(resumed.params.biases == straight.params.biases);
        CHECK(resumed.velocity.weights == straight.velocity.weights);
    }

    std::filesystem::remove(path);
}
