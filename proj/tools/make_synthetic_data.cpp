// Generates the deterministic synthetic handwriting datasets used by the
// acceptance suite and demos: stroke digits in the canonical stroke format
// and MNIST-shaped IDX image files.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "sparsecnn/dataset.hpp"
#include "support/synthetic_data.hpp"

int main(int argc, char** argv) {
    std::string out_dir = "data";
    std::uint64_t seed = 20140101;
    int train_per_class = 400;
    int test_per_class = 100;
    int image_train = 10000;
    int image_test = 2000;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        auto next = [&] { return std::string(i + 1 < argc ? argv[++i] : ""); };
        if (arg == "--out") out_dir = next();
        else if (arg == "--seed") seed = std::strtoull(next().c_str(), nullptr, 10);
        else if (arg == "--train-per-class") train_per_class = std::atoi(next().c_str());
        else if (arg == "--test-per-class") test_per_class = std::atoi(next().c_str());
        else if (arg == "--image-train") image_train = std::atoi(next().c_str());
        else if (arg == "--image-test") image_test = std::atoi(next().c_str());
        else {
            std::fprintf(stderr,
                         "usage: make_synthetic_data [--out DIR] [--seed N]\n"
                         "  [--train-per-class N] [--test-per-class N]\n"
                         "  [--image-train N] [--image-test N]\n");
            return 2;
        }
    }

    std::filesystem::create_directories(out_dir);
    const auto dir = std::filesystem::path(out_dir);

    auto train = synth::make_stroke_digits(seed, train_per_class);
    auto test = synth::make_stroke_digits(seed + 1, test_per_class);
    sparsecnn::save_strokes((dir / "digits_train.schars").string(), train);
    sparsecnn::save_strokes((dir / "digits_test.schars").string(), test);
    std::printf("strokes: %zu train, %zu test -> %s/digits_{train,test}.schars\n", train.size(),
                test.size(), out_dir.c_str());

    auto img_train = synth::make_image_digits(seed + 2, (image_train + 9) / 10);
    auto img_test = synth::make_image_digits(seed + 3, (image_test + 9) / 10);
    img_train.images.resize(static_cast<std::size_t>(image_train));
    img_test.images.resize(static_cast<std::size_t>(image_test));
    synth::write_idx((dir / "images_train.idx").string(), (dir / "labels_train.idx").string(),
                     img_train);
    synth::write_idx((dir / "images_test.idx").string(), (dir / "labels_test.idx").string(),
                     img_test);
    std::printf("images: %zu train, %zu test -> %s/{images,labels}_{train,test}.idx\n",
                img_train.images.size(), img_test.images.size(), out_dir.c_str());
    return 0;
}
