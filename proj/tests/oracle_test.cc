// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
#include <gspop/oracle.hpp>
#include <gspop/synth.hpp>

#include <sstream>

#include "gtest/gtest.h"
#include "test_util.hpp"

namespace gspop {
namespace {

using testing::identity_view;
using testing::isotropic;
using testing::scene_of;

TEST(BackgroundDirect, Examples) {
    const auto h = testing::grayscale_list<double>({{1.0, 0.5}, {1.0, 0.5}});
    EXPECT_EQ(background_direct<double>(h, 1, {0, 0, 0}), (Vec3<double>{0, 0, 0}));
    EXPECT_EQ(background_direct<double>(h, 1, {0.2, 0.3, 0.4}), (Vec3<double>{0.2, 0.3, 0.4}));
    EXPECT_EQ(background_direct<double>(h, 0, {0, 0, 0}).x, 0.5);
    const auto [c, state] = blend_prefix<double>(h, {0, 0, 0});
    EXPECT_NEAR(solve_background(c, state.color[0], state.transmittance[0], 1e-9).x, 0.5, 1e-8);
    EXPECT_THROW(background_direct<double>(h, 2, {0, 0, 0}), InputError);
}

TEST(BackgroundDirect, AgreesWithBackSolve) {
    SplitMix64 rng(17);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto n = 1 + rng.below(64);
        const auto h = testing::random_list<double>(rng, n);
        const Vec3<double> bg{rng.uniform(), rng.uniform(), rng.uniform()};
        const auto [c, state] = blend_prefix<double>(h, bg);
        const auto k = rng.below(n);
        const double t = state.transmittance[k];
        const Vec3<double> solved = solve_background(c, state.color[k], t, 1e-9);
        const Vec3<double> direct = background_direct<double>(h, k, bg);
        const double eps_bound = std::sqrt(squared_norm(c - state.color[k])) * 1e-9 / (t * (t + 1e-9));
        EXPECT_LE(std::sqrt(squared_norm(solved - direct)), 1e-6 * std::sqrt(squared_norm(direct)) + eps_bound);
    }
}

TEST(LeaveOneOut, WorkedExample) {
    const CameraView view = identity_view(1, 1, 10.0);
    const auto scene = scene_of({isotropic(0, 0, 2, 0.1, 0.5, {1, 0, 0}), isotropic(0, 0, 3, 0.1, 0.5, {1, 0, 0})});
    EXPECT_NEAR(leave_one_out_se(scene, std::span(&view, 1), 0), 0.0625, 1e-7);
    EXPECT_NEAR(leave_one_out_se(scene, std::span(&view, 1), 1), 0.0625, 1e-7);
}

TEST(LeaveOneOut, NoCoverageIsZero) {
    const CameraView view = identity_view(8, 8, 10.0);
    const auto scene = scene_of({isotropic(0, 0, 2, 0.1, 0.5, {1, 0, 0}), isotropic(0, 0, -3, 0.1, 0.5, {1, 0, 0})});
    EXPECT_EQ(leave_one_out_se(scene, std::span(&view, 1), 1), 0.0);
    EXPECT_THROW(leave_one_out_se(scene, std::span(&view, 1), 2), InputError);
}

TEST(LeaveOneOut, CoincidentPairDoesNotCompensate) {
    SynthSpec spec;
    spec.count = 2;
    spec.mode = SynthMode::coincident_pairs;
    const auto s = generate(spec);
    ASSERT_EQ(s.scene[0], s.scene[1]);
    EXPECT_GT(leave_one_out_se(s.scene, s.views, 0), 0.0);
}

TEST(Audit, ExactOnUnclippedScene) {
    SynthSpec spec;
    spec.seed = 21;
    const auto s = generate(spec);
    const auto r32 = audit<float>(s.scene, s.views);
    const auto r64 = audit<double>(s.scene, s.views);
    EXPECT_EQ(r32.flagged_pixels, 0u);
    EXPECT_EQ(r32.precision_bits, 32);
    EXPECT_EQ(r64.precision_bits, 64);
    EXPECT_LE(r32.max_discrepancy, 1e-4);
    EXPECT_LE(r64.max_discrepancy, 1e-6);
    for (const auto& e : r64.entries) {
        EXPECT_GE(e.brute_se, 0.0);
        EXPECT_GE(e.epsilon_bound, 0.0);
    }
}

TEST(Audit, CapFlagsAffectedGaussians) {
    std::vector<Gaussian> gs;
    for (int i = 0; i < 70; ++i) gs.push_back(isotropic(0, 0, 2 + 0.01 * i, 0.2, 0.05, {1, 0.5, 0.2}));
    gs.push_back(isotropic(20, 20, 2, 0.1, 0.5, {1, 1, 1}));  // off-screen, never affected
    const CameraView view = identity_view(8, 8, 10.0);
    const auto r = audit<float>(scene_of(gs), std::span(&view, 1));
    EXPECT_GT(r.flagged_pixels, 0u);
    EXPECT_TRUE(r.entries[69].affected);
    EXPECT_FALSE(r.entries[70].affected);
    EXPECT_EQ(r.affected_gaussians, 70u);
    // The truncated tail has no analytic error but does change the full render.
    EXPECT_EQ(r.entries[69].analytic, 0.0);
    EXPECT_GT(r.entries[69].brute_se, 0.0);
    EXPECT_GE(r.max_discrepancy_all, r.max_discrepancy);
}

TEST(Audit, EmptyCoverageAllZero) {
    const CameraView view = identity_view(8, 8, 10.0);
    const auto scene = scene_of({isotropic(0, 0, -2, 0.1, 0.5, {1, 0, 0}), isotropic(30, 0, 2, 0.1, 0.5, {1, 0, 0})});
    const auto r = audit<double>(scene, std::span(&view, 1));
    for (const auto& e : r.entries) {
        EXPECT_EQ(e.analytic, 0.0);
        EXPECT_EQ(e.brute_se, 0.0);
        EXPECT_EQ(e.discrepancy, 0.0);
    }
}

TEST(Audit, SizeGuardAndOutputs) {
    SynthSpec spec;
    spec.count = 12;
    spec.width = spec.height = 24;
    const auto s = generate(spec);
    OracleOptions o;
    o.max_gaussians = 10;
    EXPECT_THROW(audit<float>(s.scene, s.views, {}, o), InputError);
    o.max_gaussians = 0;
    o.threads = 2;
    const auto r = audit<float>(s.scene, s.views, {}, o);
    std::ostringstream csv;
    write_oracle_csv(r, csv);
    const std::string text = csv.str();
    EXPECT_EQ(text.substr(0, text.find('\n')),
              "gaussian_id,brute_se,analytic_delta_se,epsilon_bound,relative_discrepancy,affected");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 13);
    const auto j = summary_json(r);
    EXPECT_EQ(j.at("gaussians"), 12);
    EXPECT_EQ(j.at("epsilon"), 1e-9);
    EXPECT_EQ(j.at("n_max"), 64);
}

}  // namespace
}  // namespace gspop
