#pragma once

#include <concepts>
#include <cstdint>
#include <span>
#include <vector>

#include "sparsecnn/errors.hpp"

namespace sparsecnn {

/// Spatially-sparse layer state.
///
/// A layer is an S x S grid of feature vectors of width M, almost all of
/// which sit in a shared "ground state" (the value a site takes when the
/// network input is identically zero). Storage is two matrices:
///
///  - a feature matrix: row 0 is the ground-state row, rows 1..R-1 hold one
///    row per active site;
///  - a pointer matrix: S x S row indices into the feature matrix, 0 for
///    every inactive site.
///
/// Memory is O(R*M + S^2) rather than O(S^2 * M). Rows are kept in
/// insertion order; nothing spatial is implied by a row index.
template <std::floating_point S>
class SparseGrid {
public:
    SparseGrid(int spatial_size, int num_features, std::span<const S> ground_row)
        : size_(spatial_size), features_(num_features) {
        if (spatial_size <= 0 || num_features <= 0)
            throw DimensionError("SparseGrid: dimensions must be positive, got size=" +
                                 std::to_string(spatial_size) +
                                 " features=" + std::to_string(num_features));
        if (static_cast<int>(ground_row.size()) != num_features)
            throw ShapeError("SparseGrid: ground row length " +
                             std::to_string(ground_row.size()) + " != num_features " +
                             std::to_string(num_features));
        pointer_.assign(static_cast<std::size_t>(size_) * size_, 0);
        rows_.assign(ground_row.begin(), ground_row.end());
    }

    SparseGrid(int spatial_size, int num_features)
        : SparseGrid(spatial_size, num_features,
                     std::vector<S>(static_cast<std::size_t>(num_features), S(0))) {}

    SparseGrid(int spatial_size, int num_features, const std::vector<S>& ground_row)
        : SparseGrid(spatial_size, num_features, std::span<const S>(ground_row)) {}

    int size() const { return size_; }
    int features() const { return features_; }
    int num_rows() const { return static_cast<int>(rows_.size() / features_); }
    int active_count() const { return num_rows() - 1; }

    bool in_bounds(int x, int y) const {
        return x >= 0 && y >= 0 && x < size_ && y < size_;
    }

    /// Feature-matrix row index at (x, y); 0 means ground.
    int row_index(int x, int y) const {
        check_bounds(x, y);
        return pointer_[static_cast<std::size_t>(y) * size_ + x];
    }

    bool is_active(int x, int y) const { return row_index(x, y) != 0; }

    std::span<const S> row(int r) const {
        return {rows_.data() + static_cast<std::size_t>(r) * features_,
                static_cast<std::size_t>(features_)};
    }

    std::span<S> mutable_row(int r) {
        return {rows_.data() + static_cast<std::size_t>(r) * features_,
                static_cast<std::size_t>(features_)};
    }

    std::span<const S> ground() const { return row(0); }

    /// Feature vector at (x, y): the site's own row if active, else ground.
    std::span<const S> site(int x, int y) const { return row(row_index(x, y)); }

    /// Packed y*S+x coordinate of active row r (r >= 1).
    int site_of_row(int r) const { return sites_[static_cast<std::size_t>(r) - 1]; }

    /// Activate (x, y), appending a zero row, and return its row index.
    /// Already-active sites keep their row index.
    int activate(int x, int y) {
        check_bounds(x, y);
        std::size_t p = static_cast<std::size_t>(y) * size_ + x;
        int r = pointer_[p];
        if (r == 0) {
            r = num_rows();
            pointer_[p] = r;
            sites_.push_back(static_cast<std::int32_t>(p));
            rows_.resize(rows_.size() + features_, S(0));
        }
        return r;
    }

    void set_site(int x, int y, std::span<const S> feature_row) {
        if (static_cast<int>(feature_row.size()) != features_)
            throw ShapeError("set_site: row length " + std::to_string(feature_row.size()) +
                             " != num_features " + std::to_string(features_));
        int r = activate(x, y);
        auto dst = mutable_row(r);
        for (int c = 0; c < features_; ++c) dst[c] = feature_row[c];
    }

    void set_site(int x, int y, const std::vector<S>& feature_row) {
        set_site(x, y, std::span<const S>(feature_row));
    }

    /// Dense S x S x M array, site-major: index (y*S + x)*M + c.
    /// Inactive sites are filled with the ground row.
    std::vector<S> to_dense() const {
        std::vector<S> dense(static_cast<std::size_t>(size_) * size_ * features_);
        for (int y = 0; y < size_; ++y)
            for (int x = 0; x < size_; ++x) {
                auto src = site(x, y);
                S* dst = dense.data() + (static_cast<std::size_t>(y) * size_ + x) * features_;
                for (int c = 0; c < features_; ++c) dst[c] = src[c];
            }
        return dense;
    }

    /// Inverse of to_dense: sites differing from the ground row (exact
    /// comparison) become active, scanned in row-major order.
    static SparseGrid from_dense(std::span<const S> dense, int spatial_size, int num_features,
                                 std::span<const S> ground_row) {
        if (dense.size() != static_cast<std::size_t>(spatial_size) * spatial_size * num_features)
            throw ShapeError("from_dense: array size " + std::to_string(dense.size()) +
                             " != S*S*M");
        SparseGrid grid(spatial_size, num_features, ground_row);
        for (int y = 0; y < spatial_size; ++y)
            for (int x = 0; x < spatial_size; ++x) {
                const S* src =
                    dense.data() + (static_cast<std::size_t>(y) * spatial_size + x) * num_features;
                bool differs = false;
                for (int c = 0; c < num_features && !differs; ++c)
                    differs = src[c] != ground_row[c];
                if (differs) grid.set_site(x, y, std::span<const S>(src, num_features));
            }
        return grid;
    }

    const std::vector<std::int32_t>& pointer_matrix() const { return pointer_; }
    const std::vector<S>& feature_matrix() const { return rows_; }

private:
    void check_bounds(int x, int y) const {
        if (!in_bounds(x, y))
            throw BoundsError("site (" + std::to_string(x) + ", " + std::to_string(y) +
                              ") outside " + std::to_string(size_) + "x" + std::to_string(size_) +
                              " grid");
    }

    int size_;
    int features_;
    std::vector<std::int32_t> pointer_;     // S*S row indices, 0 = ground
    std::vector<S> rows_;                   // R*M, row 0 = ground
    std::vector<std::int32_t> sites_;       // packed site of rows 1..R-1
};

} // namespace sparsecnn
