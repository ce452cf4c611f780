// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gspop/oracle.hpp>
#include <gspop/quant.hpp>
#include <gspop/synth.hpp>

#include <sstream>

#include "gtest/gtest.h"
#include "test_util.hpp"

namespace gspop {
namespace {

using testing::grayscale_list;
using testing::identity_view;
using testing::isotropic;
using testing::scene_of;

TEST(BlendPrefix, Empty) {
    const std::vector<PixelContribution<double>> h;
    const auto [c, state] = blend_prefix<double>(h, {0.1, 0.2, 0.3});
    EXPECT_EQ(c, (Vec3<double>{0.1, 0.2, 0.3}));
    EXPECT_EQ(state.size(), 0u);
}

TEST(BlendPrefix, SingleTerm) {
    const auto h = grayscale_list<double>({{1.0, 0.5}});
    const auto [c, state] = blend_prefix<double>(h, {0, 0, 0});
    EXPECT_EQ(state.color[0], (Vec3<double>{0.5, 0.5, 0.5}));
    EXPECT_EQ(state.transmittance[0], 0.5);
    EXPECT_EQ(c, (Vec3<double>{0.5, 0.5, 0.5}));
}

TEST(BlendPrefix, TwoTerms) {
    const auto h = grayscale_list<double>({{1.0, 0.5}, {1.0, 0.5}});
    const auto [c, state] = blend_prefix<double>(h, {0, 0, 0});
    EXPECT_EQ(state.color[0].x, 0.5);
    EXPECT_EQ(state.color[1].x, 0.75);
    EXPECT_EQ(state.transmittance[0], 0.5);
    EXPECT_EQ(state.transmittance[1], 0.25);
    EXPECT_EQ(c.x, 0.75);
}

TEST(SolveBackground, Examples) {
    const Vec3<double> c{0.3, 0.6, 0.9};
    EXPECT_EQ(solve_background(c, c, 0.5, 1e-9), (Vec3<double>{0, 0, 0}));
    EXPECT_EQ(solve_background(c, {0, 0, 0}, 1.0, 0.0), c);
    const auto b = solve_background(c, {0, 0, 0}, 1.0, 1e-9);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(b[i], c[i], 1e-9);
}

TEST(DeltaSe, Examples) {
    const Vec3<double> c{0.2, 0.7, 0.1};
    EXPECT_EQ(delta_se(0.4, 0.3, c, c), 0.0);
    EXPECT_EQ(delta_se(1.0, 1.0, {1, 0, 0}, {0, 0, 0}), 1.0);
}

// Two contributors with alpha 0.5 and color 1 in one channel over black:
// removing either one moves that channel from 0.75 to 0.5.
template <typename T>
std::vector<PixelContribution<T>> worked_example() {
    return {{0, {T(1), T(0), T(0)}, T(0.5)}, {1, {T(1), T(0), T(0)}, T(0.5)}};
}

TEST(QuantifyPixel, WorkedExample) {
    const auto h = worked_example<double>();
    const auto [c, state] = blend_prefix<double>(h, {0, 0, 0});
    EXPECT_EQ(c.x, 0.75);
    const auto out = quantify_pixel<double>(h, c, state, 1e-9);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].first, 0u);
    EXPECT_NEAR(out[0].second, 0.0625, 1e-9);
    EXPECT_EQ(out[1].second, 0.0625);
    const auto exact = quantify_pixel<double>(h, c, state, 0.0);
    EXPECT_EQ(exact[0].second, 0.0625);
}

TEST(QuantifyPixel, WorkedExampleFloat) {
    const auto h = worked_example<float>();
    const auto [c, state] = blend_prefix<float>(h, {0, 0, 0});
    const auto out = quantify_pixel<float>(h, c, state, 1e-9f);
    EXPECT_NEAR(out[0].second, 0.0625f, 1e-7f);
    EXPECT_NEAR(out[1].second, 0.0625f, 1e-7f);
}

// With all three channels at 1 the squared error sums over RGB.
TEST(QuantifyPixel, WorkedExampleGraySumsChannels) {
    const auto h = grayscale_list<double>({{1.0, 0.5}, {1.0, 0.5}});
    const auto [c, state] = blend_prefix<double>(h, {0, 0, 0});
    const auto out = quantify_pixel<double>(h, c, state, 0.0);
    EXPECT_EQ(out[0].second, 3 * 0.0625);
    EXPECT_EQ(out[1].second, 3 * 0.0625);
}

TEST(QuantifyPixel, OccludedRearIsSuppressed) {
    const auto h = grayscale_list<double>({{0.2, 0.99}, {0.9, 0.6}});
    const auto [c, state] = blend_prefix<double>(h, {0, 0, 0});
    const auto out = quantify_pixel<double>(h, c, state, 1e-9);
    const double t2 = state.transmittance[0];
    EXPECT_NEAR(t2, 0.01, 1e-15);
    // Nothing behind the rear contributor, so b = 0.
    const double bound = std::pow(t2 * 0.6 * std::sqrt(3 * 0.9 * 0.9), 2);
    EXPECT_LE(out[1].second, bound * (1 + 1e-9));
    // 1e-4 of what the same contributor would cost unoccluded.
    const double unoccluded = std::pow(0.6 * std::sqrt(3 * 0.9 * 0.9), 2);
    EXPECT_LE(out[1].second, 1e-4 * unoccluded * (1 + 1e-9));
}

TEST(QuantifyPixel, EmptyList) {
    const std::vector<PixelContribution<float>> h;
    const auto [c, state] = blend_prefix<float>(h, {0, 0, 0});
    EXPECT_TRUE(quantify_pixel<float>(h, c, state, 1e-9f).empty());
}

// A contribution equal to what lies behind it is redundant: its error is 0.
TEST(QuantifyPixel, RedundantContributionIsExactlyZero) {
    // Exactly representable case with the guard off: c = b = 0.5.
    const auto h = grayscale_list<double>({{0.5, 0.5}, {0.5, 0.5}});
    const Vec3<double> bg{0.5, 0.5, 0.5};
    const auto [c, state] = blend_prefix<double>(h, bg);
    EXPECT_EQ(c.x, 0.5);
    for (const auto& [id, e] : quantify_pixel<double>(h, c, state, 0.0)) EXPECT_EQ(e, 0.0) << id;

    // Any list: setting c_k to its back-solved b_{k+1} gives exactly 0.
    SplitMix64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<PixelContribution<float>> list;
        const auto n = 1 + rng.below(20);
        for (std::size_t i = 0; i < n; ++i)
            list.push_back({static_cast<GaussianId>(i),
                            {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                             static_cast<float>(rng.uniform())},
                            static_cast<float>(rng.uniform(kAlphaMin, kAlphaMax))});
        const Vec3<float> back{0.1f, 0.2f, 0.3f};
        const auto [col, st] = blend_prefix<float>(list, back);
        const auto k = rng.below(n);
        const Vec3<float> b = solve_background(col, st.color[k], st.transmittance[k], 1e-9f);
        const float t_k = k == 0 ? 1.0f : st.transmittance[k - 1];
        EXPECT_EQ(delta_se(t_k, list[k].a, b, b), 0.0f);
    }
}

TEST(QuantifyPixel, EpsilonPerturbationWithinBound) {
    SplitMix64 rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<PixelContribution<double>> h;
        const auto n = 1 + rng.below(64);
        for (std::size_t i = 0; i < n; ++i)
            h.push_back({static_cast<GaussianId>(i), {rng.uniform(), rng.uniform(), rng.uniform()},
                         rng.uniform(kAlphaMin, 0.7)});
        const auto [c, state] = blend_prefix<double>(h, {0.3, 0.3, 0.3});
        const auto guarded = quantify_pixel<double>(h, c, state, 1e-9);
        const auto exact = quantify_pixel<double>(h, c, state, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            const double t_next = state.transmittance[k];
            const double t_k = k == 0 ? 1.0 : state.transmittance[k - 1];
            const Vec3<double> r = c - state.color[k];
            const Vec3<double> b = r / t_next;
            const double w = t_k * h[k].a;
            // |b - b_eps| = ||r|| eps / (T (T + eps)); the error moves by at most
            // w^2 (2 ||c - b|| |b - b_eps| + |b - b_eps|^2).
            const double shift = std::sqrt(squared_norm(r)) * 1e-9 / (t_next * (t_next + 1e-9));
            const double bound = w * w * (2 * std::sqrt(squared_norm(h[k].c - b)) * shift + shift * shift);
            EXPECT_LE(std::abs(guarded[k].second - exact[k].second), bound * 1.01 + 1e-15 * exact[k].second);
            EXPECT_GE(guarded[k].second, 0.0);
        }
    }
}

// Scene-level tests.

SynthScene layered(std::uint64_t seed, std::size_t m = 50) {
    SynthSpec spec;
    spec.seed = seed;
    spec.count = m;
    return generate(spec);
}

TEST(QuantifyScene, SingleGaussianClosedForm) {
    const CameraView view = identity_view(40, 40, 40.0);
    const auto scene = scene_of({isotropic(0.1, -0.05, 3, 0.3, 0.8, {0.9, 0.4, 0.1})});
    QuantOptions opts;
    opts.background = {0.2, 0.5, 0.7};
    const auto buffer = quantify_scene<double>(scene, std::span(&view, 1), {}, opts);
    const auto proj = project<double>(scene, view, 0);
    const TileGrid grid = bin_tiles<double>(proj, view);
    const Vec3<double> d = proj[0].color - opts.background;
    double expect = 0;
    std::uint64_t touched = 0;
    for (int y = 0; y < view.height; ++y)
        for (int x = 0; x < view.width; ++x) {
            if (grid.at(x / kTileSize, y / kTileSize).empty()) continue;  // outside the 3-sigma box
            const double a = pixel_alpha(proj[0], x, y);
            if (a > 0) ++touched;
            expect += a * a * squared_norm(d);
        }
    EXPECT_NEAR(buffer.delta_se[0], expect, 1e-6 * expect);
    EXPECT_EQ(buffer.touch_count[0], touched);
}

TEST(QuantifyScene, ZeroCoverageGivesZeros) {
    const CameraView view = identity_view(16, 16, 20.0);
    const auto scene = scene_of({isotropic(0, 0, -3, 0.3, 0.8, {1, 1, 1}), isotropic(40, 0, 3, 0.1, 0.8, {1, 1, 1})});
    const auto buffer = quantify_scene<float>(scene, std::span(&view, 1));
    EXPECT_EQ(buffer.delta_se, (std::vector<double>{0, 0}));
    EXPECT_EQ(buffer.touch_count, (std::vector<std::uint64_t>{0, 0}));
}

TEST(QuantifyScene, Errors) {
    const auto s = layered(1, 10);
    EXPECT_THROW(quantify_scene<float>(GaussianScene{}, s.views), InputError);
    EXPECT_THROW(quantify_scene<float>(s.scene, std::span<const CameraView>{}), InputError);
    EXPECT_THROW(quantify_scene<float>(s.scene, s.views, {.epsilon = -1}), InputError);
}

TEST(QuantifyScene, OcclusionNullity) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        SynthSpec spec;
        spec.seed = seed;
        spec.count = 30;
        spec.mode = SynthMode::wall_occluder;
        const auto s = generate(spec);
        ASSERT_FALSE(s.hidden.empty());
        const auto buffer = quantify_scene<float>(s.scene, s.views);
        for (GaussianId id : s.hidden) {
            EXPECT_EQ(buffer.delta_se[id], 0.0) << id;
            EXPECT_EQ(buffer.touch_count[id], 0u) << id;
        }
    }
}

// A Gaussian too faint to pass the alpha cutoff never enters any list, so
// adding one in front changes nothing.
TEST(QuantifyScene, FaintForegroundLeavesErrorsUnchanged) {
    const auto s = layered(4);
    GaussianScene with = s.scene;
    Gaussian faint = isotropic(0, 0, -1.8, 0.6, 0.003, {1, 0, 1});
    with.gaussians.push_back(faint);
    const auto a = quantify_scene<float>(s.scene, s.views);
    const auto b = quantify_scene<float>(with, s.views);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.delta_se[i], b.delta_se[i]);
        EXPECT_EQ(a.touch_count[i], b.touch_count[i]);
    }
    EXPECT_EQ(b.delta_se.back(), 0.0);
}

TEST(QuantifyScene, NonNegative) {
    const auto s = layered(8, 80);
    QuantOptions opts;
    opts.background = {0.5, 0.5, 0.5};
    for (double v : quantify_scene<float>(s.scene, s.views, {}, opts).delta_se) EXPECT_GE(v, 0.0);
}

TEST(QuantifyScene, ViewAdditivity) {
    const auto s = layered(2);
    const auto all = quantify_scene<float>(s.scene, s.views);
    const auto head = quantify_scene<float>(s.scene, std::span(s.views).first(2));
    const auto tail = quantify_scene<float>(s.scene, std::span(s.views).last(1));
    ErrorBuffer sum = head;
    sum += tail;
    EXPECT_EQ(sum.delta_se, all.delta_se);
    EXPECT_EQ(sum.touch_count, all.touch_count);
    EXPECT_EQ(sum.view_count, 3u);

    // Any split agrees to rounding.
    const auto first = quantify_scene<float>(s.scene, std::span(s.views).first(1));
    const auto rest = quantify_scene<float>(s.scene, std::span(s.views).last(2));
    for (std::size_t i = 0; i < all.size(); ++i)
        EXPECT_NEAR(first.delta_se[i] + rest.delta_se[i], all.delta_se[i], 1e-12 * all.delta_se[i]);
}

TEST(QuantifyScene, RepeatedViewDoubles) {
    const auto s = layered(3);
    const ViewSet twice = {s.views[0], s.views[0]};
    const auto once = quantify_scene<float>(s.scene, std::span(s.views).first(1));
    const auto both = quantify_scene<float>(s.scene, twice);
    for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(both.delta_se[i], 2 * once.delta_se[i]);
}

TEST(QuantifyScene, Deterministic) {
    const auto s = layered(6);
    EXPECT_EQ(quantify_scene<float>(s.scene, s.views).delta_se, quantify_scene<float>(s.scene, s.views).delta_se);
}

TEST(QuantifyScene, ThreadsAgree) {
    const auto s = layered(7, 120);
    QuantOptions par;
    par.threads = 4;
    const auto a = quantify_scene<float>(s.scene, s.views);
    const auto b = quantify_scene<float>(s.scene, s.views, {}, par);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_LE(std::abs(a.delta_se[i] - b.delta_se[i]), 1e-4 * std::abs(a.delta_se[i])) << i;
        EXPECT_EQ(a.touch_count[i], b.touch_count[i]);
    }
}

TEST(QuantifyScene, CapCountedInDiagnostics) {
    std::vector<Gaussian> gs;
    for (int i = 0; i < 70; ++i) gs.push_back(isotropic(0, 0, 2 + 0.01 * i, 0.5, 0.05, {1, 1, 1}));
    const CameraView view = identity_view(8, 8, 10.0);
    const auto capped = quantify_scene<float>(scene_of(gs), std::span(&view, 1));
    EXPECT_GT(capped.capped_pixels, 0u);
    EXPECT_EQ(capped.touch_count.back(), 0u);
    const auto free = quantify_scene<float>(scene_of(gs), std::span(&view, 1), {.n_max = 0});
    EXPECT_EQ(free.capped_pixels, 0u);
    EXPECT_GT(free.touch_count.back(), 0u);
}

TEST(Histogram, AllZero) {
    const std::vector<double> v(5, 0.0);
    const Histogram h = histogram(v, 4);
    EXPECT_EQ(h.zero_count, 5u);
    EXPECT_TRUE(h.counts.empty());
}

TEST(Histogram, OnePerDecade) {
    const std::vector<double> v = {0, 1, 10, 100};
    const Histogram h = histogram(v, 3);
    EXPECT_EQ(h.zero_count, 1u);
    EXPECT_EQ(h.log10_min, 0.0);
    EXPECT_EQ(h.bin_width, 1.0);
    EXPECT_EQ(h.counts, (std::vector<std::uint64_t>{1, 1, 1}));
    std::ostringstream out;
    write_histogram_csv(h, out);
    EXPECT_EQ(out.str(), "log10_lower_edge,count\n-inf,1\n0,1\n1,1\n2,1\n");
}

TEST(Histogram, Errors) {
    const std::vector<double> v = {1};
    EXPECT_THROW(histogram(v, 1), InputError);
    const Histogram h = histogram(v, 2);
    EXPECT_EQ(h.counts[0] + h.counts[1], 1u);
}

TEST(ScoresCsv, Layout) {
    ErrorBuffer b(2);
    b.delta_se = {0.5, 0};
    b.touch_count = {3, 0};
    b.view_count = 1;
    std::ostringstream out;
    write_scores_csv(b, {}, {}, out);
    EXPECT_EQ(out.str(),
              "# epsilon=1.0000000000000001e-09\n# n_max=64\n# views=1\n# background=0,0,0\n"
              "# capped_pixels=0\n# terminated_pixels=0\ngaussian_id,delta_se,touch_count\n0,0.5,3\n1,0,0\n");
}

}  // namespace
}  // namespace gspop
