#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "sparsecnn/config.hpp"
#include "sparsecnn/dataset.hpp"

namespace sparsecnn {

/// Pen-drawn circle of the given diameter centered on the origin, as a
/// closed polyline. Matches the census demonstration input.
inline StrokeCharacter make_circle_character(double diameter, int segments = 256) {
    StrokeCharacter ch;
    std::vector<Point> stroke;
    const double r = diameter / 2;
    for (int i = 0; i <= segments; ++i) {
        const double a = 2 * std::numbers::pi * i / segments;
        stroke.push_back({r * std::cos(a), r * std::sin(a)});
    }
    ch.strokes.push_back(std::move(stroke));
    return ch;
}

inline Dataset load_dataset(const RunConfig& cfg, bool train_split) {
    const std::string& path = train_split ? cfg.train_path : cfg.test_path;
    Dataset ds;
    switch (cfg.format) {
        case DataFormat::strokes: ds = load_strokes(path); break;
        case DataFormat::idx:
            ds = load_idx_images(path, train_split ? cfg.train_labels : cfg.test_labels);
            break;
        case DataFormat::cifar: ds = load_cifar_binary(path); break;
    }
    const std::size_t limit = train_split ? cfg.limit_train : cfg.limit_test;
    if (limit > 0 && ds.size() > limit) {
        if (ds.kind == DataKind::strokes)
            ds.strokes.resize(limit);
        else
            ds.images.resize(limit);
    }
    if (ds.num_classes > cfg.classes)
        throw ConfigError("network.classes: dataset " + path + " has labels up to " +
                          std::to_string(ds.num_classes - 1));
    ds.num_classes = cfg.classes;
    return ds;
}

/// Encodes one dataset sample into the input grid. With an augmentation
/// config and rng, a transform is drawn and rejected/resampled (up to 10
/// attempts) whenever it would push content off the grid; after that the
/// sample goes in untransformed.
template <std::floating_point S = float>
SparseGrid<S> encode_sample(const Dataset& ds, std::size_t index, const EncodingConfig& enc,
                            const AugmentConfig* augment = nullptr,
                            std::mt19937_64* rng = nullptr) {
    const bool augmenting = augment && rng && augment->mode != AugmentMode::none;
    if (ds.kind == DataKind::strokes) {
        StrokeCharacter ch = normalize_character(ds.strokes[index], enc.character_scale);
        if (augmenting) {
            for (int attempt = 0; attempt < 10; ++attempt) {
                const auto t = sample_transform(*augment, *rng);
                if (auto moved = apply_to_strokes(ch, t, enc.input_size)) {
                    ch = std::move(*moved);
                    break;
                }
            }
        }
        return rasterize<S>(ch, enc);
    }
    const auto& img = ds.images[index];
    const auto scaling = img.channels == 3 ? ImageScaling::rgb_signed : ImageScaling::grayscale;
    SparseGrid<S> grid = embed_image<S>(std::span<const std::uint8_t>(img.pixels), img.width,
                                        img.height, img.channels, enc.input_size, scaling);
    if (augmenting) {
        for (int attempt = 0; attempt < 10; ++attempt) {
            const auto t = sample_transform(*augment, *rng);
            if (auto moved = apply_to_image(grid, t)) return std::move(*moved);
        }
    }
    return grid;
}

/// Wires datasets and encoders into TrainHooks (metrics/checkpoint hooks are
/// left for the caller to fill in).
inline TrainHooks<float> make_hooks(const RunConfig& cfg, const Dataset& train_ds,
                                    const Dataset& test_ds) {
    const EncodingConfig enc = encoding_config(cfg);
    TrainHooks<float> hooks;
    hooks.train_count = train_ds.size();
    hooks.test_count = test_ds.size();
    hooks.encode_train = [&train_ds, enc, augment = cfg.augment](std::size_t i,
                                                                 std::mt19937_64& rng) {
        return encode_sample<float>(train_ds, i, enc, &augment, &rng);
    };
    hooks.train_label = [&train_ds](std::size_t i) { return train_ds.label_of(i); };
    hooks.encode_test = [&test_ds, enc](std::size_t i) {
        return encode_sample<float>(test_ds, i, enc);
    };
    hooks.test_label = [&test_ds](std::size_t i) { return test_ds.label_of(i); };
    return hooks;
}

} // namespace sparsecnn
