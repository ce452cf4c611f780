// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
// Runs the gspop executable end to end.
//
#include <gspop/gspop.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <set>

#include "gtest/gtest.h"
#include "test_util.hpp"

namespace gspop {
namespace {

namespace fs = std::filesystem;

class Cli : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        dir = testing::scratch_dir(std::string("cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    }

    // Runs `gspop <args>` inside the scratch dir; returns the exit code.
    int run(const std::string& args) {
        const std::string cmd = "cd '" + dir.string() + "' && '" GSPOP_CLI_PATH "' " + args + " > stdout.txt 2> stderr.txt";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string read(const std::string& name) { return testing::read_file(dir / name); }

    nlohmann::json json_file(const std::string& name) { return nlohmann::json::parse(read(name)); }

    void synth(const std::string& extra = "") {
        ASSERT_EQ(run("synth --seed 3 --count 40 --width 32 --height 32 --out-scene s.ply --out-views v.json " + extra),
                  0)
            << read("stderr.txt");
    }
};

TEST_F(Cli, RenderWritesImagesAndManifest) {
    synth();
    ASSERT_EQ(run("render --scene s.ply --views v.json --out-dir out"), 0) << read("stderr.txt");
    for (int i = 0; i < 3; ++i) EXPECT_TRUE(fs::exists(dir / "out" / ("view_" + std::to_string(i) + ".png")));
    const auto m = json_file("out/manifest.json");
    EXPECT_EQ(m.at("command"), "render");
    EXPECT_EQ(m.at("version"), kVersion);
    EXPECT_EQ(m.at("outputs").at("images").size(), 3u);
    EXPECT_TRUE(m.at("timings").contains("total_seconds"));
}

TEST_F(Cli, RawRenderIsRepeatable) {
    synth();
    ASSERT_EQ(run("render --scene s.ply --views v.json --out-dir a --format raw --threads 1"), 0);
    ASSERT_EQ(run("render --scene s.ply --views v.json --out-dir b --format raw --threads 1"), 0);
    const std::string a = read("a/view_1.raw");
    EXPECT_EQ(a.size(), 32u * 32u * 3u * 4u);
    EXPECT_EQ(a, read("b/view_1.raw"));
    const Image<float> img = read_raw_f32(dir / "a" / "view_1.raw", 32, 32);
    const auto expect = render<float>(load_ply(dir / "s.ply"), load_views(dir / "v.json")[1], {0, 0, 0});
    EXPECT_EQ(img.data, expect.image.data);
}

TEST_F(Cli, BadPlyPathExitsTwoAndNamesPath) {
    synth();
    EXPECT_EQ(run("render --scene missing_scene.ply --views v.json --out-dir out"), 2);
    EXPECT_NE(read("stderr.txt").find("missing_scene.ply"), std::string::npos);
    EXPECT_EQ(run("quantify --scene missing_scene.ply --views v.json --out q.csv"), 2);
    std::ofstream(dir / "bad.ply") << "ply\nformat ascii 1.0\nend_header\n";
    EXPECT_EQ(run("quantify --scene bad.ply --views v.json --out q.csv"), 2);
    EXPECT_NE(read("stderr.txt").find("bad.ply"), std::string::npos);
}

TEST_F(Cli, QuantifyDefaultsAndDeterminism) {
    synth();
    ASSERT_EQ(run("quantify --scene s.ply --views v.json --out q1.csv --histogram h.csv"), 0) << read("stderr.txt");
    ASSERT_EQ(run("quantify --scene s.ply --views v.json --out q2.csv --threads 1"), 0);
    EXPECT_EQ(read("q1.csv"), read("q2.csv"));
    const auto m = json_file("q1.csv.manifest.json");
    EXPECT_EQ(m.at("parameters").at("epsilon"), 1e-9);
    EXPECT_EQ(m.at("parameters").at("n_max"), 64);
    EXPECT_EQ(m.at("parameters").at("threads"), 1);
    EXPECT_EQ(read("h.csv").substr(0, 23), "log10_lower_edge,count\n");

    ASSERT_EQ(run("quantify --scene s.ply --views v.json --out q3.csv --threads 3"), 0);
    const std::string a = read("q1.csv"), b = read("q3.csv");
    EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), std::count(b.begin(), b.end(), '\n'));
}

TEST_F(Cli, QuantifyZeroCoverage) {
    synth();
    // Same cameras turned around.
    ViewSet views = load_views(dir / "v.json");
    for (auto& v : views)
        for (std::size_t c = 0; c < 4; ++c) {
            v.world_to_camera[c] *= -1;
            v.world_to_camera[8 + c] *= -1;
        }
    save_views(views, dir / "away.json");
    ASSERT_EQ(run("quantify --scene s.ply --views away.json --out q.csv"), 0) << read("stderr.txt");
    std::ifstream in(dir / "q.csv");
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("gaussian_id", 0) == 0) continue;
        EXPECT_NE(line.find(",0,0"), std::string::npos) << line;
        ++rows;
    }
    EXPECT_EQ(rows, 40);
}

TEST_F(Cli, PruneRatio) {
    ASSERT_EQ(run("synth --count 100 --out-scene s.ply --out-views v.json"), 0);
    ASSERT_EQ(run("prune --scene s.ply --views v.json --out p.ply --ratio 0.5 --report r.json"), 0) << read("stderr.txt");
    EXPECT_EQ(load_ply(dir / "p.ply").size(), 50u);
    EXPECT_EQ(json_file("r.json").at("final_count"), 50);
    EXPECT_TRUE(fs::exists(dir / "p.ply.manifest.json"));
    ASSERT_EQ(run("prune --scene s.ply --views v.json --out p2.ply --ratio 0.5,0.5"), 0);
    EXPECT_EQ(load_ply(dir / "p2.ply").size(), 25u);
}

TEST_F(Cli, PruneBudgetCycles) {
    synth();
    ASSERT_EQ(run("prune --scene s.ply --views v.json --out p.ply --budget 0.5 --cycles 8 --report r.json"), 0)
        << read("stderr.txt");
    const auto report = json_file("r.json");
    ASSERT_EQ(report.at("cycles").size(), 8u);
    std::set<GaussianId> seen;
    std::size_t removed = 0;
    for (const auto& c : report.at("cycles"))
        for (GaussianId id : c.at("removed_ids").get<std::vector<GaussianId>>()) {
            EXPECT_TRUE(seen.insert(id).second);
            ++removed;
        }
    EXPECT_EQ(load_ply(dir / "p.ply").size(), 40 - removed);
    const auto m = json_file("p.ply.manifest.json");
    EXPECT_EQ(m.at("parameters").at("cycles"), 8);
    EXPECT_EQ(m.at("parameters").at("budget_rule"), "cumulative");
}

TEST_F(Cli, PruneUsageErrors) {
    synth();
    EXPECT_EQ(run("prune --scene s.ply --views v.json --out p.ply --ratio 0.5 --budget 1"), 2);
    EXPECT_EQ(run("prune --scene s.ply --views v.json --out p.ply"), 2);
    EXPECT_EQ(run("prune --scene s.ply --views v.json --out p.ply --ratio 0.5 --cycles 3"), 2);
    EXPECT_EQ(run("prune --scene s.ply --views v.json --out p.ply --ratio 1.5"), 2);
    EXPECT_EQ(run("prune --scene s.ply --views v.json --out p.ply --budget 1 --budget-rule other"), 2);
    EXPECT_FALSE(fs::exists(dir / "p.ply"));
}

TEST_F(Cli, Eval) {
    synth();
    ASSERT_EQ(run("eval --scene-a s.ply --scene-b s.ply --views v.json --out m.json"), 0) << read("stderr.txt");
    const auto m = json_file("m.json");
    EXPECT_EQ(m.at("mean_psnr"), "inf");
    EXPECT_EQ(m.at("views").size(), 3u);
    EXPECT_NE(read("stdout.txt").find("mean"), std::string::npos);
}

TEST_F(Cli, Audit) {
    synth();
    ASSERT_EQ(run("audit --scene s.ply --views v.json --out o.csv --summary o.json --precision 64"), 0)
        << read("stderr.txt");
    const auto summary = json_file("o.json");
    EXPECT_EQ(summary.at("gaussians"), 40);
    EXPECT_LE(summary.at("max_relative_discrepancy").get<double>(), 1e-6);
    EXPECT_EQ(run("audit --scene s.ply --views v.json --out o.csv --max-gaussians 10"), 2);
    EXPECT_EQ(run("audit --scene s.ply --views v.json --out o.csv --precision 16"), 2);
}

TEST_F(Cli, SynthSpecFileWithOverride) {
    std::ofstream(dir / "spec.json") << R"({"seed": 9, "count": 12, "mode": "coincident-pairs", "width": 16})";
    ASSERT_EQ(run("synth --spec spec.json --count 8 --out-scene s.ply --out-views v.json"), 0) << read("stderr.txt");
    const GaussianScene s = load_ply(dir / "s.ply");
    EXPECT_EQ(s.size(), 8u);
    EXPECT_EQ(s[0], s[1]);
    EXPECT_EQ(load_views(dir / "v.json")[0].width, 16);
    const auto m = json_file("s.ply.manifest.json");
    EXPECT_EQ(m.at("parameters").at("seed"), 9);
    EXPECT_EQ(m.at("parameters").at("mode"), "coincident-pairs");

    // Same flags, same bytes.
    ASSERT_EQ(run("synth --spec spec.json --count 8 --out-scene t.ply --out-views t.json"), 0);
    EXPECT_EQ(read("s.ply"), read("t.ply"));
    EXPECT_EQ(run("synth --mode nope --out-scene u.ply --out-views u.json"), 2);
}

TEST_F(Cli, UsageAndHelp) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run("--version"), 0);
    EXPECT_NE(read("stdout.txt").find(kVersion), std::string::npos);
}

}  // namespace
}  // namespace gspop
