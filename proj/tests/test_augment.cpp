#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sparsecnn/augment.hpp"
#include "sparsecnn/encode.hpp"
#include "support/oracles.hpp"

using namespace sparsecnn;

namespace {

StrokeCharacter lattice_character(std::mt19937_64& rng, int points, double extent) {
    // coordinates on a 1/64 lattice so shift arithmetic stays exact
    StrokeCharacter ch;
    std::vector<Point> stroke;
    const auto range = static_cast<std::int64_t>(extent * 64);
    for (int i = 0; i < points; ++i)
        stroke.push_back(
            {uniform_int(rng, -range, range) / 64.0, uniform_int(rng, -range, range) / 64.0});
    ch.strokes.push_back(std::move(stroke));
    return ch;
}

} // namespace

TEST_CASE("sample_transform") {
    SECTION("mode none gives the identity") {
        AugmentConfig cfg;
        cfg.mode = AugmentMode::none;
        auto rng = make_rng(1);
        CHECK(sample_transform(cfg, rng).is_identity());
    }

    SECTION("same seed, same sequence") {
        AugmentConfig cfg;
        cfg.mode = AugmentMode::affine;
        cfg.max_shift = 3;
        auto rng1 = make_rng(99), rng2 = make_rng(99);
        for (int i = 0; i < 20; ++i) {
            auto a = sample_transform(cfg, rng1);
            auto b = sample_transform(cfg, rng2);
            CHECK(a.a00 == b.a00);
            CHECK(a.a01 == b.a01);
            CHECK(a.a10 == b.a10);
            CHECK(a.a11 == b.a11);
            CHECK(a.tx == b.tx);
            CHECK(a.ty == b.ty);
        }
    }

    SECTION("translations are uniform over the (2*shift+1)^2 lattice") {
        AugmentConfig cfg;
        cfg.mode = AugmentMode::translate;
        cfg.max_shift = 2;
        auto rng = make_rng(7);
        std::vector<int> counts(25, 0);
        const int trials = 10000;
        for (int i = 0; i < trials; ++i) {
            auto t = sample_transform(cfg, rng);
            CHECK(t.a00 == 1.0);
            CHECK(t.a01 == 0.0);
            const int ix = static_cast<int>(t.tx) + 2, iy = static_cast<int>(t.ty) + 2;
            REQUIRE(ix >= 0);
            REQUIRE(ix < 5);
            ++counts[static_cast<std::size_t>(iy) * 5 + ix];
        }
        // chi-square, 24 dof; critical value at p = 0.001 is 51.18
        const double expected = trials / 25.0;
        double chi2 = 0;
        for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
        CHECK(chi2 < 51.18);
    }
}

TEST_CASE("apply_to_strokes") {
    SECTION("identity leaves the character unchanged") {
        auto rng = make_rng(3);
        auto ch = lattice_character(rng, 6, 8.0);
        auto out = apply_to_strokes(ch, AffineTransform{}, 48);
        REQUIRE(out.has_value());
        for (std::size_t i = 0; i < ch.strokes[0].size(); ++i) {
            CHECK(out->strokes[0][i].x == ch.strokes[0][i].x);
            CHECK(out->strokes[0][i].y == ch.strokes[0][i].y);
        }
    }

    SECTION("rotation by pi/2 about the center maps horizontal to vertical") {
        StrokeCharacter ch;
        ch.strokes.push_back({{-4, 0}, {4, 0}});
        AffineTransform rot; // [[0,-1],[1,0]]
        rot.a00 = 0;
        rot.a01 = -1;
        rot.a10 = 1;
        rot.a11 = 0;
        auto out = apply_to_strokes(ch, rot, 48);
        REQUIRE(out.has_value());
        CHECK(out->strokes[0][0].x == 0.0);
        CHECK(out->strokes[0][0].y == -4.0);
        CHECK(out->strokes[0][1].y == 4.0);
    }

    SECTION("points leaving the grid reject the transform") {
        StrokeCharacter ch;
        ch.strokes.push_back({{0, 0}, {5, 0}});
        AffineTransform t;
        t.tx = 2.0; // 5 + 2 > 6/2... with input_size 12, half = 6: 7 > 6
        CHECK(apply_to_strokes(ch, t, 12) == std::nullopt);
        t.tx = 1.0;
        CHECK(apply_to_strokes(ch, t, 12).has_value());
    }

    SECTION("integer shift commutes with rasterization exactly") {
        auto rng = make_rng(64);
        auto enc = EncodingConfig::from_levels(4, true); // N=48, histograms on
        for (int trial = 0; trial < 20; ++trial) {
            auto ch = lattice_character(rng, 5, 7.9);
            AffineTransform t;
            t.tx = static_cast<double>(uniform_int(rng, -8, 8));
            t.ty = static_cast<double>(uniform_int(rng, -8, 8));
            auto moved = apply_to_strokes(ch, t, enc.input_size);
            REQUIRE(moved.has_value());

            auto direct = rasterize<float>(*moved, enc);
            auto base = rasterize<float>(ch, enc);
            SparseGrid<float> shifted(enc.input_size, enc.features());
            for (int r = 1; r < base.num_rows(); ++r) {
                const int x = base.site_of_row(r) % enc.input_size;
                const int y = base.site_of_row(r) / enc.input_size;
                shifted.set_site(x + static_cast<int>(t.tx), y + static_cast<int>(t.ty),
                                 base.row(r));
            }
            CHECK(direct.to_dense() == shifted.to_dense());
        }
    }
}

TEST_CASE("apply_to_image") {
    auto make_image_grid = [](int n) {
        SparseGrid<float> g(n, 1);
        auto rng = make_rng(42);
        for (int y = 8; y < 16; ++y)
            for (int x = 8; x < 16; ++x)
                g.set_site(x, y,
                           std::vector<float>{static_cast<float>(uniform_range(rng, 0.1, 1))});
        return g;
    };

    SECTION("identity preserves values") {
        auto g = make_image_grid(24);
        auto out = apply_to_image(g, AffineTransform{});
        REQUIRE(out.has_value());
        CHECK(out->to_dense() == g.to_dense());
    }

    SECTION("integer translation shifts the active set exactly") {
        auto g = make_image_grid(24);
        AffineTransform t;
        t.tx = 3;
        t.ty = -2;
        auto out = apply_to_image(g, t);
        REQUIRE(out.has_value());
        CHECK(out->active_count() == g.active_count());
        for (int r = 1; r < g.num_rows(); ++r) {
            const int x = g.site_of_row(r) % 24, y = g.site_of_row(r) / 24;
            REQUIRE(out->is_active(x + 3, y - 2));
            CHECK(out->site(x + 3, y - 2)[0] == g.site(x, y)[0]);
        }
    }

    SECTION("rotation round trip stays within resampling tolerance") {
        // smooth image content; bilinear resampling error scales with curvature
        SparseGrid<float> g(24, 1);
        for (int y = 8; y < 16; ++y)
            for (int x = 8; x < 16; ++x)
                g.set_site(x, y,
                           std::vector<float>{static_cast<float>(
                               0.5 + 0.4 * std::sin(x / 3.0) * std::cos(y / 3.0))});
        const double theta = 0.3;
        AffineTransform rot;
        rot.a00 = std::cos(theta);
        rot.a01 = -std::sin(theta);
        rot.a10 = std::sin(theta);
        rot.a11 = std::cos(theta);
        auto once = apply_to_image(g, rot);
        REQUIRE(once.has_value());
        AffineTransform back;
        back.a00 = rot.a00;
        back.a01 = -rot.a01;
        back.a10 = -rot.a10;
        back.a11 = rot.a11;
        auto round = apply_to_image(*once, back);
        REQUIRE(round.has_value());
        // interior sites only; the boundary ring loses mass to interpolation
        for (int y = 10; y < 14; ++y)
            for (int x = 10; x < 14; ++x)
                CHECK(std::abs(round->site(x, y)[0] - g.site(x, y)[0]) < 0.05);
    }

    SECTION("content pushed off the grid rejects the transform") {
        auto g = make_image_grid(24);
        AffineTransform t;
        t.tx = 12;
        CHECK(apply_to_image(g, t) == std::nullopt);
    }

    SECTION("transformed grids never contain out-of-domain sites") {
        auto g = make_image_grid(24);
        auto rng = make_rng(17);
        AugmentConfig cfg;
        cfg.mode = AugmentMode::affine;
        cfg.max_shift = 6;
        for (int i = 0; i < 50; ++i) {
            auto t = sample_transform(cfg, rng);
            auto out = apply_to_image(g, t);
            if (!out) continue;
            for (int r = 1; r < out->num_rows(); ++r) {
                CHECK(out->site_of_row(r) >= 0);
                CHECK(out->site_of_row(r) < 24 * 24);
            }
        }
    }
}
