#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sparsecnn/errors.hpp"
#include "sparsecnn/rng.hpp"
#include "sparsecnn/strokes.hpp"

namespace sparsecnn {

struct ImageRecord {
    int label = 0;
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels; // row-major, channel-interleaved
};

enum class DataKind : std::uint8_t { strokes, images };

struct Dataset {
    DataKind kind = DataKind::strokes;
    int num_classes = 0;
    std::vector<StrokeCharacter> strokes;
    std::vector<ImageRecord> images;

    std::size_t size() const {
        return kind == DataKind::strokes ? strokes.size() : images.size();
    }
    int label_of(std::size_t i) const {
        return kind == DataKind::strokes ? strokes[i].label : images[i].label;
    }
};

// ---------------------------------------------------------------------------
// Canonical stroke file format (line oriented text):
//   SPARSECHARS 1 <num_classes>
//   CHAR <label> <num_strokes>
//   <num_points> x1 y1 x2 y2 ...          (one line per stroke)

namespace detail {

class LineParser {
public:
    explicit LineParser(std::istream& in) : in_(in) {}

    bool next_line() {
        while (std::getline(in_, line_)) {
            ++line_no_;
            pos_ = 0;
            skip_space();
            if (pos_ < line_.size() && line_[pos_] != '#') return true;
        }
        return false;
    }

    int line_number() const { return line_no_; }

    std::string token() {
        skip_space();
        if (pos_ >= line_.size()) fail("unexpected end of line");
        std::size_t start = pos_;
        while (pos_ < line_.size() && !std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
        return line_.substr(start, pos_ - start);
    }

    long integer() {
        const std::string t = token();
        long v = 0;
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc{} || p != t.data() + t.size())
            fail("expected integer, got '" + t + "'");
        return v;
    }

    double real() {
        const std::string t = token();
        try {
            std::size_t used = 0;
            double v = std::stod(t, &used);
            if (used != t.size()) throw std::invalid_argument(t);
            return v;
        } catch (const std::exception&) {
            fail("expected number, got '" + t + "'");
        }
        return 0;
    }

    void expect_end() {
        skip_space();
        if (pos_ < line_.size() && line_[pos_] != '#')
            fail("trailing content '" + line_.substr(pos_) + "'");
    }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, line_no_); }

private:
    void skip_space() {
        while (pos_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
    }

    std::istream& in_;
    std::string line_;
    std::size_t pos_ = 0;
    int line_no_ = 0;
};

} // namespace detail

inline Dataset load_strokes_stream(std::istream& in) {
    detail::LineParser p(in);
    if (!p.next_line()) throw ParseError("empty stroke file", 1);
    if (p.token() != "SPARSECHARS") p.fail("missing SPARSECHARS header");
    if (p.integer() != 1) p.fail("unsupported format version");
    const long num_classes = p.integer();
    if (num_classes < 1) p.fail("num_classes must be positive");
    p.expect_end();

    Dataset ds;
    ds.kind = DataKind::strokes;
    ds.num_classes = static_cast<int>(num_classes);
    while (p.next_line()) {
        if (p.token() != "CHAR") p.fail("expected CHAR record");
        StrokeCharacter ch;
        const long label = p.integer();
        if (label < 0 || label >= num_classes)
            p.fail("label " + std::to_string(label) + " outside [0, " +
                   std::to_string(num_classes) + ")");
        ch.label = static_cast<int>(label);
        const long num_strokes = p.integer();
        if (num_strokes < 1) p.fail("character must have at least one stroke");
        p.expect_end();
        for (long s = 0; s < num_strokes; ++s) {
            if (!p.next_line()) throw ParseError("unexpected end of file inside CHAR record",
                                                 p.line_number());
            const long num_points = p.integer();
            if (num_points < 1) p.fail("stroke must have at least one point");
            std::vector<Point> stroke;
            stroke.reserve(static_cast<std::size_t>(num_points));
            for (long i = 0; i < num_points; ++i) {
                const double x = p.real();
                const double y = p.real();
                stroke.push_back({x, y});
            }
            p.expect_end();
            ch.strokes.push_back(std::move(stroke));
        }
        ds.strokes.push_back(std::move(ch));
    }
    return ds;
}

inline Dataset load_strokes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open stroke file: " + path);
    return load_strokes_stream(in);
}

inline void save_strokes_stream(std::ostream& out, const Dataset& ds) {
    out << "SPARSECHARS 1 " << ds.num_classes << "\n";
    out.precision(17);
    for (const auto& ch : ds.strokes) {
        out << "CHAR " << ch.label << " " << ch.strokes.size() << "\n";
        for (const auto& stroke : ch.strokes) {
            out << stroke.size();
            for (const auto& pt : stroke) out << " " << pt.x << " " << pt.y;
            out << "\n";
        }
    }
}

inline void save_strokes(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for writing: " + path);
    save_strokes_stream(out, ds);
}

// ---------------------------------------------------------------------------
// IDX (MNIST) binary format

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& what) {
    std::uint8_t b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FormatError("truncated file while reading " + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

} // namespace detail

inline Dataset load_idx_images(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("cannot open IDX image file: " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("cannot open IDX label file: " + labels_path);

    const std::uint32_t img_magic = detail::read_be32(img, "image magic");
    if (img_magic != 0x00000803)
        throw FormatError("bad IDX image magic in " + images_path);
    const std::uint32_t count = detail::read_be32(img, "image count");
    const std::uint32_t rows = detail::read_be32(img, "rows");
    const std::uint32_t cols = detail::read_be32(img, "cols");

    const std::uint32_t lab_magic = detail::read_be32(lab, "label magic");
    if (lab_magic != 0x00000801)
        throw FormatError("bad IDX label magic in " + labels_path);
    const std::uint32_t lab_count = detail::read_be32(lab, "label count");
    if (lab_count != count)
        throw FormatError("IDX image/label count mismatch: " + std::to_string(count) + " vs " +
                          std::to_string(lab_count));

    Dataset ds;
    ds.kind = DataKind::images;
    ds.images.reserve(count);
    int max_label = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        ImageRecord rec;
        rec.width = static_cast<int>(cols);
        rec.height = static_cast<int>(rows);
        rec.channels = 1;
        rec.pixels.resize(static_cast<std::size_t>(rows) * cols);
        if (!img.read(reinterpret_cast<char*>(rec.pixels.data()),
                      static_cast<std::streamsize>(rec.pixels.size())))
            throw FormatError("truncated IDX image file at record " + std::to_string(i));
        char l;
        if (!lab.read(&l, 1))
            throw FormatError("truncated IDX label file at record " + std::to_string(i));
        rec.label = static_cast<std::uint8_t>(l);
        max_label = std::max(max_label, rec.label);
        ds.images.push_back(std::move(rec));
    }
    ds.num_classes = max_label + 1;
    return ds;
}

// ---------------------------------------------------------------------------
// CIFAR binary format: 3073-byte records (label + 3x1024 channel planes);
// CIFAR-100 uses 3074-byte records (coarse + fine label), coarse ignored.

inline Dataset load_cifar_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open CIFAR file: " + path);
    in.seekg(0, std::ios::end);
    const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0);

    int label_bytes;
    if (file_size > 0 && file_size % 3073 == 0)
        label_bytes = 1;
    else if (file_size > 0 && file_size % 3074 == 0)
        label_bytes = 2;
    else
        throw FormatError("CIFAR file size " + std::to_string(file_size) +
                          " is not a whole number of records");
    const std::uint64_t record_size = 3072 + static_cast<std::uint64_t>(label_bytes);
    const std::uint64_t count = file_size / record_size;

    Dataset ds;
    ds.kind = DataKind::images;
    ds.images.reserve(count);
    std::vector<std::uint8_t> record(record_size);
    int max_label = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
        if (!in.read(reinterpret_cast<char*>(record.data()),
                     static_cast<std::streamsize>(record.size())))
            throw FormatError("truncated CIFAR file at record " + std::to_string(i));
        ImageRecord rec;
        rec.label = record[static_cast<std::size_t>(label_bytes) - 1]; // fine label
        rec.width = 32;
        rec.height = 32;
        rec.channels = 3;
        rec.pixels.resize(3072);
        const std::uint8_t* planes = record.data() + label_bytes;
        for (int p = 0; p < 1024; ++p)
            for (int c = 0; c < 3; ++c)
                rec.pixels[static_cast<std::size_t>(p) * 3 + c] =
                    planes[static_cast<std::size_t>(c) * 1024 + p];
        max_label = std::max(max_label, rec.label);
        ds.images.push_back(std::move(rec));
    }
    ds.num_classes = max_label + 1;
    return ds;
}

// ---------------------------------------------------------------------------
// Minibatch iteration

/// Deterministic Fisher-Yates shuffle of 0..n-1.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

/// One epoch of minibatches: every sample exactly once in shuffled order,
/// final short batch included. The callback receives the dataset indices of
/// one batch; encoding/augmentation is the caller's per-sample concern.
inline void for_each_minibatch(std::size_t dataset_size, std::size_t batch_size,
                               std::mt19937_64& rng,
                               const std::function<void(std::span<const std::size_t>)>& fn) {
    if (batch_size < 1) throw ValueError("batch_size must be >= 1");
    const auto order = epoch_order(dataset_size, rng);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, order.size() - start);
        fn(std::span<const std::size_t>(order.data() + start, len));
    }
}

} // namespace sparsecnn
