// Command-line front end: train, eval, census, paths and encode subcommands
// driven by a key = value config file.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sparsecnn/sparsecnn.hpp"

namespace fs = std::filesystem;
using namespace sparsecnn;

namespace {

struct CliOptions {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string checkpoint;
    int top_k = 1;
    int threads = 0;
    int sample = 0;
    double circle = 0;
    bool csv = false;
    bool full = false;
    std::string out_path;
};

RunConfig load_and_validate(CliOptions& opt) {
    RunConfig cfg = load_run_config(opt.config_path);
    if (opt.seed_set) cfg.train.seed = opt.seed;
    if (opt.threads > 0) {
        cfg.train.threads = opt.threads;
    } else if (const char* env = std::getenv("SPARSECNN_THREADS")) {
        const int t = std::atoi(env);
        if (t > 0) cfg.train.threads = t;
    }
    validate_run_config(cfg);
    return cfg;
}

SparseGrid<float> census_input(const RunConfig& cfg, const CliOptions& opt) {
    const EncodingConfig enc = encoding_config(cfg);
    if (opt.circle > 0) {
        auto circle = make_circle_character(opt.circle);
        return rasterize<float>(circle, enc);
    }
    const Dataset ds = load_dataset(cfg, false);
    if (opt.sample < 0 || static_cast<std::size_t>(opt.sample) >= ds.size())
        throw ConfigError("--sample: index " + std::to_string(opt.sample) +
                          " outside dataset of size " + std::to_string(ds.size()));
    return encode_sample<float>(ds, static_cast<std::size_t>(opt.sample), enc);
}

int cmd_train(CliOptions& opt) {
    RunConfig cfg = load_and_validate(opt);
    const NetworkSpec net = build_network(cfg);
    const Dataset train_ds = load_dataset(cfg, true);
    const Dataset test_ds = load_dataset(cfg, false);

    std::cout << "network: " << layer_string(net) << "\n";
    const auto pc = parameter_count(net);
    std::cout << "parameters: " << pc.total << " (conv " << pc.conv_weights << ", nin "
              << pc.nin_weights << ", classifier " << pc.classifier_weights << ", biases "
              << pc.biases << ")\n";
    std::cout << "train samples: " << train_ds.size() << ", test samples: " << test_ds.size()
              << "\n";

    TrainState<float> state;
    if (!opt.checkpoint.empty()) {
        state = checkpoint_load(opt.checkpoint, net);
        std::cout << "resumed from " << opt.checkpoint << " at epoch " << state.epoch << "\n";
    } else {
        state = TrainState<float>::fresh(net, cfg.train.seed);
    }

    if (!cfg.checkpoint_dir.empty()) fs::create_directories(cfg.checkpoint_dir);
    std::ofstream metrics;
    if (!cfg.metrics_path.empty()) {
        fs::create_directories(fs::path(cfg.metrics_path).parent_path().empty()
                                   ? fs::path(".")
                                   : fs::path(cfg.metrics_path).parent_path());
        metrics.open(cfg.metrics_path, std::ios::app);
        if (!metrics) throw ConfigError("output.metrics: cannot open " + cfg.metrics_path);
    }

    auto hooks = make_hooks(cfg, train_ds, test_ds);
    hooks.on_epoch = [&](const EpochStats& s) {
        std::cout << "epoch " << s.epoch << ": loss " << s.train_loss << ", train_err "
                  << s.train_error << ", test_err " << s.test_error << std::endl;
        if (metrics.is_open())
            metrics << s.epoch << ',' << s.train_loss << ',' << s.train_error << ','
                    << s.test_error << '\n'
                    << std::flush;
    };
    hooks.save_state = [&](const TrainState<float>& st, int) {
        if (cfg.checkpoint_dir.empty()) return;
        checkpoint_save((fs::path(cfg.checkpoint_dir) / "checkpoint.ckpt").string(), net, st);
    };

    train_network(net, state, cfg.train, hooks);
    std::cout << "done after epoch " << state.epoch - 1 << "\n";
    return 0;
}

int cmd_eval(CliOptions& opt) {
    RunConfig cfg = load_and_validate(opt);
    const NetworkSpec net = build_network(cfg);
    if (opt.checkpoint.empty()) throw ConfigError("--checkpoint: required for eval");
    auto state = checkpoint_load(opt.checkpoint, net);
    const Dataset test_ds = load_dataset(cfg, false);
    const EncodingConfig enc = encoding_config(cfg);

    auto result = evaluate<float>(
        net, state.params, test_ds.size(),
        [&](std::size_t i) { return encode_sample<float>(test_ds, i, enc); },
        [&](std::size_t i) { return test_ds.label_of(i); }, opt.top_k, cfg.train.threads);
    std::cout << "top-1 error: " << result.top1_error * 100 << "%\n";
    if (opt.top_k > 1)
        std::cout << "top-" << opt.top_k << " error: " << result.topk_error * 100 << "%\n";
    return 0;
}

int cmd_census(CliOptions& opt) {
    RunConfig cfg = load_and_validate(opt);
    const NetworkSpec net = build_network(cfg);
    const auto grid = census_input(cfg, opt);
    const auto table = census_forward(net, grid);
    if (opt.csv) {
        std::cout << "layer,size,active,fraction\n";
        for (const auto& row : table)
            std::cout << row.label << ',' << row.spatial_size << ',' << row.active << ','
                      << row.fraction << '\n';
    } else {
        std::printf("%-10s %8s %10s %10s\n", "layer", "size", "active", "fraction");
        for (const auto& row : table)
            std::printf("%-10s %8d %10lld %9.2f%%\n", row.label.c_str(), row.spatial_size,
                        static_cast<long long>(row.active), row.fraction * 100);
    }
    return 0;
}

int cmd_paths(CliOptions& opt) {
    RunConfig cfg = load_and_validate(opt);
    const NetworkSpec net = build_network(cfg);
    const auto counts = count_paths(net);
    const auto s = summarize_paths(net, counts);
    std::cout << "input size: " << net.input_size << "x" << net.input_size << "\n";
    std::cout << "corner paths: " << s.corner << "\n";
    std::cout << "center paths: " << s.center << "\n";
    std::cout << "plateau width: " << s.plateau_width << "\n";
    if (opt.full) {
        const int n = net.input_size;
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x)
                std::cout << counts[static_cast<std::size_t>(y) * n + x]
                          << (x + 1 < n ? ' ' : '\n');
        }
    }
    return 0;
}

int cmd_encode(CliOptions& opt) {
    RunConfig cfg = load_and_validate(opt);
    const Dataset ds = load_dataset(cfg, false);
    if (opt.sample < 0 || static_cast<std::size_t>(opt.sample) >= ds.size())
        throw ConfigError("--sample: index outside dataset");
    const auto grid =
        encode_sample<float>(ds, static_cast<std::size_t>(opt.sample), encoding_config(cfg));

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!opt.out_path.empty()) {
        file.open(opt.out_path);
        if (!file) throw ConfigError("--out: cannot open " + opt.out_path);
        out = &file;
    }
    *out << "size " << grid.size() << " features " << grid.features() << " active "
         << grid.active_count() << " label " << ds.label_of(static_cast<std::size_t>(opt.sample))
         << "\n";
    for (int r = 1; r < grid.num_rows(); ++r) {
        const int x = grid.site_of_row(r) % grid.size();
        const int y = grid.site_of_row(r) / grid.size();
        *out << x << ' ' << y;
        for (float v : grid.row(r)) *out << ' ' << v;
        *out << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatially-sparse CNN trainer"};
    app.require_subcommand(1);
    CliOptions opt;

    auto add_common = [&](CLI::App* sub, bool needs_config = true) {
        auto* c = sub->add_option("--config", opt.config_path, "run configuration file");
        if (needs_config) c->required();
        sub->add_option("--seed", opt.seed, "override train.seed")
            ->each([&](const std::string&) { opt.seed_set = true; });
        sub->add_option("--threads", opt.threads,
                        "worker threads (fallback: SPARSECNN_THREADS, then config)");
    };

    auto* train = app.add_subcommand("train", "train a network per the config");
    add_common(train);
    train->add_option("--checkpoint", opt.checkpoint, "resume from this checkpoint");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test set");
    add_common(eval);
    eval->add_option("--checkpoint", opt.checkpoint, "checkpoint to evaluate")->required();
    eval->add_option("--top-k", opt.top_k, "also report top-k error");

    auto* census = app.add_subcommand("census", "per-layer active-site table for one input");
    add_common(census);
    census->add_option("--sample", opt.sample, "test-set sample index (default 0)");
    census->add_option("--circle", opt.circle, "use a synthetic circle of this diameter instead");
    census->add_flag("--csv", opt.csv, "machine-readable output");

    auto* paths = app.add_subcommand("paths", "input-to-output path counts");
    add_common(paths);
    paths->add_flag("--full", opt.full, "dump the full S x S count matrix");

    auto* encode = app.add_subcommand("encode", "dump one encoded sample (debugging)");
    add_common(encode);
    encode->add_option("--sample", opt.sample, "test-set sample index (default 0)");
    encode->add_option("--out", opt.out_path, "write to file instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(opt);
        if (eval->parsed()) return cmd_eval(opt);
        if (census->parsed()) return cmd_census(opt);
        if (paths->parsed()) return cmd_paths(opt);
        if (encode->parsed()) return cmd_encode(opt);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
