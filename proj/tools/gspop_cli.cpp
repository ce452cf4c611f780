// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
// gspop command-line tool: render, quantify, prune, eval, audit, synth.
//
// Exit codes: 0 success, 1 internal error, 2 usage or input error.
//
#include <gspop/gspop.hpp>
#include <gspop/image_io.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Collects what a run did and writes it next to its outputs.
struct Manifest {
    json doc;
    Clock::time_point start = Clock::now();

    explicit Manifest(const std::string& command) {
        doc["tool"] = "gspop";
        doc["version"] = gspop::kVersion;
        doc["command"] = command;
        doc["started_at"] = utc_now();
        doc["parameters"] = json::object();
        doc["inputs"] = json::object();
        doc["outputs"] = json::object();
        doc["timings"] = json::object();
    }

    void stage(const std::string& name, double secs) { doc["timings"][name] = secs; }

    void write(const fs::path& path) {
        doc["timings"]["total_seconds"] = seconds_since(start);
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw gspop::Error("cannot open '" + path.string() + "' for writing");
        out << doc.dump(2) << "\n";
    }
};

fs::path manifest_for(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

gspop::Rgb parse_rgb(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw gspop::InputError("--background: '" + s + "' is not a number list");
        }
    }
    if (v.size() == 1) return {v[0], v[0], v[0]};
    if (v.size() != 3) throw gspop::InputError("--background expects one value or r,g,b");
    return {v[0], v[1], v[2]};
}

std::vector<double> parse_list(const std::string& s, const char* flag) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw gspop::InputError(std::string(flag) + ": '" + s + "' is not a number list");
        }
    }
    if (v.empty()) throw gspop::InputError(std::string(flag) + ": empty list");
    return v;
}

json rgb_json(const gspop::Rgb& c) { return json::array({c.x, c.y, c.z}); }

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::trunc | std::ios::binary);
    if (!out) throw gspop::Error("cannot open '" + p.string() + "' for writing");
    return out;
}

std::string safe_name(const std::string& name) {
    std::string out = name;
    for (char& c : out)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
    return out.empty() ? "view" : out;
}

void check_precision(int bits) {
    if (bits != 32 && bits != 64) throw gspop::InputError("--precision must be 32 or 64");
}

// Options shared by the commands that quantify.
struct QuantFlags {
    double epsilon = 1e-9;
    int n_max = gspop::kDefaultNMax;
    unsigned threads = 1;
    std::string background = "0,0,0";
    int sh_degree = gspop::kMaxShDegree;
    int precision = 32;

    void add(CLI::App* cmd) {
        cmd->add_option("--epsilon", epsilon, "Back-solve guard")->capture_default_str();
        cmd->add_option("--n-max", n_max, "Contributors recorded per pixel (<= 0 disables the cap)")
            ->capture_default_str();
        cmd->add_option("--threads", threads, "Worker threads, 0 = all cores, 1 = deterministic reference")
            ->capture_default_str();
        cmd->add_option("--background", background, "Background color r,g,b")->capture_default_str();
        cmd->add_option("--sh-degree", sh_degree, "SH degree used for color")->capture_default_str();
        cmd->add_option("--precision", precision, "Arithmetic precision of the quantifier, 32 or 64")
            ->capture_default_str();
    }

    gspop::QuantConstants consts() const { return {epsilon, n_max}; }

    gspop::QuantOptions options() const {
        gspop::QuantOptions o;
        o.background = parse_rgb(background);
        o.sh_degree = sh_degree;
        o.threads = threads;
        return o;
    }

    json to_json() const {
        return {{"epsilon", epsilon}, {"n_max", n_max},           {"threads", gspop::resolve_threads(threads)},
                {"background", rgb_json(parse_rgb(background))}, {"sh_degree", sh_degree}, {"precision", precision}};
    }

    void validate() const {
        check_precision(precision);
        if (!(epsilon >= 0)) throw gspop::InputError("--epsilon must be >= 0");
        if (sh_degree < 0 || sh_degree > gspop::kMaxShDegree) throw gspop::InputError("--sh-degree must be in [0, 3]");
    }
};

gspop::ErrorBuffer run_quantify(const gspop::GaussianScene& scene, const gspop::ViewSet& views, const QuantFlags& q) {
    return q.precision == 64 ? gspop::quantify_scene<double>(scene, views, q.consts(), q.options())
                             : gspop::quantify_scene<float>(scene, views, q.consts(), q.options());
}

// ---------------------------------------------------------------- render

struct RenderArgs {
    std::string scene, views, out_dir, background = "0,0,0", format = "png";
    unsigned threads = 1;
    int sh_degree = gspop::kMaxShDegree;
};

void cmd_render(const RenderArgs& a) {
    if (a.format != "png" && a.format != "raw") throw gspop::InputError("--format must be png or raw");
    Manifest m("render");
    const gspop::Rgb bg = parse_rgb(a.background);
    m.doc["parameters"] = {{"background", rgb_json(bg)},
                           {"format", a.format},
                           {"threads", gspop::resolve_threads(a.threads)},
                           {"sh_degree", a.sh_degree},
                           {"tile_size", gspop::kTileSize}};
    m.doc["inputs"] = {{"scene", a.scene}, {"views", a.views}};

    auto t0 = Clock::now();
    const auto scene = gspop::load_ply(a.scene);
    const auto views = gspop::load_views(a.views);
    m.stage("load_seconds", seconds_since(t0));

    fs::create_directories(a.out_dir);
    gspop::RasterOptions opts;
    opts.threads = a.threads;
    opts.sh_degree = a.sh_degree;
    json images = json::array();
    t0 = Clock::now();
    for (const auto& view : views) {
        const auto out = gspop::render<float>(scene, view, bg.cast<float>(), opts);
        const fs::path p = fs::path(a.out_dir) / (safe_name(view.name) + (a.format == "png" ? ".png" : ".raw"));
        if (a.format == "png")
            gspop::write_png(out.image, p);
        else
            gspop::write_raw_f32(out.image, p);
        images.push_back({{"view", view.name}, {"path", p.string()}, {"width", view.width}, {"height", view.height}});
        std::cout << "wrote " << p.string() << "\n";
    }
    m.stage("render_seconds", seconds_since(t0));
    m.doc["outputs"] = {{"images", images}};
    m.write(fs::path(a.out_dir) / "manifest.json");
}

// ---------------------------------------------------------------- quantify

struct QuantifyArgs {
    std::string scene, views, out, hist;
    int bins = 20;
    QuantFlags q;
};

void cmd_quantify(const QuantifyArgs& a) {
    a.q.validate();
    if (a.bins < 2) throw gspop::InputError("--bins must be >= 2");
    Manifest m("quantify");
    m.doc["parameters"] = a.q.to_json();
    m.doc["parameters"]["bins"] = a.bins;
    m.doc["inputs"] = {{"scene", a.scene}, {"views", a.views}};

    auto t0 = Clock::now();
    const auto scene = gspop::load_ply(a.scene);
    const auto views = gspop::load_views(a.views);
    m.stage("load_seconds", seconds_since(t0));

    t0 = Clock::now();
    const auto buffer = run_quantify(scene, views, a.q);
    m.stage("quantify_seconds", seconds_since(t0));

    {
        auto out = open_out(a.out);
        gspop::write_scores_csv(buffer, a.q.consts(), a.q.options(), out);
    }
    m.doc["outputs"]["scores"] = a.out;
    const auto hist = gspop::histogram(buffer, a.bins);
    if (!a.hist.empty()) {
        auto out = open_out(a.hist);
        gspop::write_histogram_csv(hist, out);
        m.doc["outputs"]["histogram"] = a.hist;
    }
    m.doc["results"] = {{"gaussians", buffer.size()},
                        {"views", buffer.view_count},
                        {"total_delta_se", buffer.total()},
                        {"zero_count", hist.zero_count},
                        {"capped_pixels", buffer.capped_pixels},
                        {"terminated_pixels", buffer.terminated_pixels}};
    std::cout << "quantified " << buffer.size() << " gaussians over " << buffer.view_count << " views; total "
              << gspop::format_double(buffer.total()) << "; " << hist.zero_count << " with zero error\n";
    m.write(manifest_for(a.out));
}

// ---------------------------------------------------------------- prune

struct PruneArgs {
    std::string scene, views, out, report, ratio, rule = "cumulative";
    double budget = -1;
    int cycles = 1;
    QuantFlags q;
};

void cmd_prune(const PruneArgs& a, bool has_ratio, bool has_budget, bool has_cycles) {
    a.q.validate();
    if (has_ratio == has_budget) throw CLI::ValidationError("prune", "give exactly one of --ratio or --budget");
    if (has_cycles && !has_budget) throw CLI::ValidationError("prune", "--cycles needs --budget");
    gspop::BudgetRule rule;
    if (a.rule == "cumulative")
        rule = gspop::BudgetRule::cumulative;
    else if (a.rule == "threshold")
        rule = gspop::BudgetRule::threshold;
    else
        throw gspop::InputError("--budget-rule must be cumulative or threshold");

    Manifest m("prune");
    m.doc["parameters"] = a.q.to_json();
    m.doc["inputs"] = {{"scene", a.scene}, {"views", a.views}};

    auto t0 = Clock::now();
    const auto scene = gspop::load_ply(a.scene);
    const auto views = gspop::load_views(a.views);
    m.stage("load_seconds", seconds_since(t0));

    t0 = Clock::now();
    gspop::PruneResult result;
    auto run = [&]<typename T>() {
        if (has_ratio) {
            const auto ratios = parse_list(a.ratio, "--ratio");
            m.doc["parameters"]["mode"] = "ratio";
            m.doc["parameters"]["ratios"] = ratios;
            result = gspop::iterative_ratio_prune<T>(scene, views, ratios, a.q.consts(), a.q.options());
        } else {
            gspop::PruneConfig cfg;
            cfg.mode = gspop::PruneMode::budget;
            cfg.budget = a.budget;
            cfg.cycles = a.cycles;
            cfg.rule = rule;
            cfg.validate();
            m.doc["parameters"]["mode"] = "budget";
            m.doc["parameters"]["budget"] = a.budget;
            m.doc["parameters"]["cycles"] = a.cycles;
            m.doc["parameters"]["budget_rule"] = a.rule;
            result = gspop::iterative_prune<T>(scene, views, a.budget, a.cycles, a.q.consts(), a.q.options(), rule);
        }
    };
    if (a.q.precision == 64)
        run.operator()<double>();
    else
        run.operator()<float>();
    m.stage("prune_seconds", seconds_since(t0));

    t0 = Clock::now();
    gspop::save_ply(result.scene, a.out);
    m.doc["outputs"]["scene"] = a.out;
    if (!a.report.empty()) {
        auto out = open_out(a.report);
        out << gspop::to_json(result.report).dump(2) << "\n";
        m.doc["outputs"]["report"] = a.report;
    }
    m.stage("save_seconds", seconds_since(t0));
    m.doc["results"] = {{"initial_count", result.report.initial_count},
                        {"final_count", result.report.final_count},
                        {"cycles", result.report.cycles.size()}};
    std::cout << "kept " << result.report.final_count << " of " << result.report.initial_count << " gaussians in "
              << result.report.cycles.size() << " cycle(s)\n";
    m.write(manifest_for(a.out));
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string scene_a, scene_b, views, out, background = "0,0,0";
    unsigned threads = 1;
    int sh_degree = gspop::kMaxShDegree;
};

void cmd_eval(const EvalArgs& a) {
    Manifest m("eval");
    const gspop::Rgb bg = parse_rgb(a.background);
    m.doc["parameters"] = {{"background", rgb_json(bg)},
                           {"threads", gspop::resolve_threads(a.threads)},
                           {"sh_degree", a.sh_degree}};
    m.doc["inputs"] = {{"scene_a", a.scene_a}, {"scene_b", a.scene_b}, {"views", a.views}};
    auto t0 = Clock::now();
    const auto sa = gspop::load_ply(a.scene_a);
    const auto sb = gspop::load_ply(a.scene_b);
    const auto views = gspop::load_views(a.views);
    m.stage("load_seconds", seconds_since(t0));
    t0 = Clock::now();
    const auto report = gspop::eval_views<float>(sa, sb, views, bg, a.threads, a.sh_degree);
    m.stage("eval_seconds", seconds_since(t0));
    gspop::print_table(report, std::cout);
    if (!a.out.empty()) {
        auto out = open_out(a.out);
        out << gspop::to_json(report).dump(2) << "\n";
        m.doc["outputs"]["metrics"] = a.out;
        m.write(manifest_for(a.out));
    }
}

// ---------------------------------------------------------------- audit

struct AuditArgs {
    std::string scene, views, out, summary;
    std::size_t max_gaussians = 200;
    QuantFlags q;
};

void cmd_audit(const AuditArgs& a) {
    a.q.validate();
    Manifest m("audit");
    m.doc["parameters"] = a.q.to_json();
    m.doc["parameters"]["max_gaussians"] = a.max_gaussians;
    m.doc["inputs"] = {{"scene", a.scene}, {"views", a.views}};
    auto t0 = Clock::now();
    const auto scene = gspop::load_ply(a.scene);
    const auto views = gspop::load_views(a.views);
    m.stage("load_seconds", seconds_since(t0));

    gspop::OracleOptions o;
    o.background = parse_rgb(a.q.background);
    o.sh_degree = a.q.sh_degree;
    o.threads = a.q.threads;
    o.max_gaussians = a.max_gaussians;
    t0 = Clock::now();
    const auto report = a.q.precision == 64 ? gspop::audit<double>(scene, views, a.q.consts(), o)
                                            : gspop::audit<float>(scene, views, a.q.consts(), o);
    m.stage("audit_seconds", seconds_since(t0));
    {
        auto out = open_out(a.out);
        gspop::write_oracle_csv(report, out);
    }
    m.doc["outputs"]["oracle"] = a.out;
    const json summary = gspop::summary_json(report);
    if (!a.summary.empty()) {
        auto out = open_out(a.summary);
        out << summary.dump(2) << "\n";
        m.doc["outputs"]["summary"] = a.summary;
    }
    m.doc["results"] = summary;
    std::cout << summary.dump(2) << "\n";
    m.write(manifest_for(a.out));
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::string out_scene, out_views, spec_path, mode;
    gspop::SynthSpec spec;
};

void cmd_synth(SynthArgs a, const std::vector<std::pair<std::string, CLI::Option*>>& flags) {
    gspop::SynthSpec spec;
    if (!a.spec_path.empty()) {
        std::ifstream in(a.spec_path);
        if (!in) throw gspop::InputError("cannot open spec file '" + a.spec_path + "'");
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw gspop::InputError(a.spec_path + ": invalid JSON: " + e.what());
        }
        spec = gspop::synth_spec_from_json(j);
    }
    // Flags given on the command line override the spec file.
    json overrides = json::object();
    const json parsed = gspop::to_json(a.spec);
    for (const auto& [key, opt] : flags)
        if (opt->count() > 0) overrides[key] = parsed.at(key);
    if (!a.mode.empty()) overrides["mode"] = a.mode;
    json merged = gspop::to_json(spec);
    merged.update(overrides);
    spec = gspop::synth_spec_from_json(merged);

    Manifest m("synth");
    m.doc["parameters"] = gspop::to_json(spec);
    if (!a.spec_path.empty()) m.doc["inputs"]["spec"] = a.spec_path;
    const auto t0 = Clock::now();
    const auto synth = gspop::generate(spec);
    gspop::save_ply(synth.scene, a.out_scene);
    gspop::save_views(synth.views, a.out_views);
    m.stage("generate_seconds", seconds_since(t0));
    m.doc["outputs"] = {{"scene", a.out_scene}, {"views", a.out_views}};
    m.doc["results"] = {{"gaussians", synth.scene.size()}, {"views", synth.views.size()}, {"hidden_ids", synth.hidden}};
    std::cout << "wrote " << synth.scene.size() << " gaussians to " << a.out_scene << " and " << synth.views.size()
              << " views to " << a.out_views << "\n";
    m.write(manifest_for(a.out_scene));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Per-Gaussian removal error, pruning and validation for Gaussian splatting scenes"};
    app.set_version_flag("--version", std::string(gspop::kVersion));
    app.require_subcommand(1);

    RenderArgs render;
    auto* c_render = app.add_subcommand("render", "Render every view to an image");
    c_render->add_option("--scene", render.scene, "Input PLY")->required();
    c_render->add_option("--views", render.views, "Views JSON")->required();
    c_render->add_option("--out-dir", render.out_dir, "Output directory")->required();
    c_render->add_option("--background", render.background, "Background color r,g,b")->capture_default_str();
    c_render->add_option("--format", render.format, "png or raw (float32)")->capture_default_str();
    c_render->add_option("--threads", render.threads, "Worker threads, 0 = all cores")->capture_default_str();
    c_render->add_option("--sh-degree", render.sh_degree, "SH degree used for color")->capture_default_str();

    QuantifyArgs quant;
    auto* c_quant = app.add_subcommand("quantify", "Accumulate per-Gaussian removal error over all views");
    c_quant->add_option("--scene", quant.scene, "Input PLY")->required();
    c_quant->add_option("--views", quant.views, "Views JSON")->required();
    c_quant->add_option("--out", quant.out, "Scores CSV")->required();
    c_quant->add_option("--histogram", quant.hist, "Histogram CSV");
    c_quant->add_option("--bins", quant.bins, "Histogram bins")->capture_default_str();
    quant.q.add(c_quant);

    PruneArgs prune;
    auto* c_prune = app.add_subcommand("prune", "Remove the Gaussians with the lowest removal error");
    c_prune->add_option("--scene", prune.scene, "Input PLY")->required();
    c_prune->add_option("--views", prune.views, "Views JSON")->required();
    c_prune->add_option("--out", prune.out, "Pruned PLY")->required();
    auto* o_ratio = c_prune->add_option("--ratio", prune.ratio, "Fraction to remove; a list re-quantifies between steps");
    auto* o_budget = c_prune->add_option("--budget", prune.budget, "Total error budget B");
    auto* o_cycles = c_prune->add_option("--cycles", prune.cycles, "Cycles C, each spending B / C")->capture_default_str();
    c_prune->add_option("--budget-rule", prune.rule, "cumulative or threshold")->capture_default_str();
    c_prune->add_option("--report", prune.report, "Report JSON");
    prune.q.add(c_prune);

    EvalArgs eval;
    auto* c_eval = app.add_subcommand("eval", "Compare renders of two scenes (MSE, PSNR, SSIM)");
    c_eval->add_option("--scene-a", eval.scene_a, "Reference PLY")->required();
    c_eval->add_option("--scene-b", eval.scene_b, "Compared PLY")->required();
    c_eval->add_option("--views", eval.views, "Views JSON")->required();
    c_eval->add_option("--out", eval.out, "Metrics JSON");
    c_eval->add_option("--background", eval.background, "Background color r,g,b")->capture_default_str();
    c_eval->add_option("--threads", eval.threads, "Worker threads, 0 = all cores")->capture_default_str();
    c_eval->add_option("--sh-degree", eval.sh_degree, "SH degree used for color")->capture_default_str();

    AuditArgs audit;
    auto* c_audit = app.add_subcommand("audit", "Check removal errors against leave-one-out re-renders");
    c_audit->add_option("--scene", audit.scene, "Input PLY")->required();
    c_audit->add_option("--views", audit.views, "Views JSON")->required();
    c_audit->add_option("--out", audit.out, "Per-Gaussian CSV")->required();
    c_audit->add_option("--summary", audit.summary, "Summary JSON");
    c_audit->add_option("--max-gaussians", audit.max_gaussians, "Refuse larger scenes, 0 = no limit")
        ->capture_default_str();
    audit.q.add(c_audit);

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a seeded synthetic scene and views");
    c_synth->add_option("--out-scene", synth.out_scene, "Output PLY")->required();
    c_synth->add_option("--out-views", synth.out_views, "Output views JSON")->required();
    c_synth->add_option("--spec", synth.spec_path, "Spec JSON; flags override its keys");
    c_synth->add_option("--mode", synth.mode, "random, layered, wall-occluder or coincident-pairs");
    auto& s = synth.spec;
    const std::vector<std::pair<std::string, CLI::Option*>> synth_flags = {
        {"seed", c_synth->add_option("--seed", s.seed, "PRNG seed")},
        {"count", c_synth->add_option("--count", s.count, "Number of Gaussians")},
        {"extent", c_synth->add_option("--extent", s.extent, "Half-size of the scene cube")},
        {"opacity_min", c_synth->add_option("--opacity-min", s.opacity_min)},
        {"opacity_max", c_synth->add_option("--opacity-max", s.opacity_max)},
        {"scale_min", c_synth->add_option("--scale-min", s.scale_min)},
        {"scale_max", c_synth->add_option("--scale-max", s.scale_max)},
        {"sh_degree", c_synth->add_option("--sh-degree", s.sh_degree)},
        {"layers", c_synth->add_option("--layers", s.layers, "Depth layers in layered mode")},
        {"view_count", c_synth->add_option("--view-count", s.view_count, "Cameras on the orbit")},
        {"width", c_synth->add_option("--width", s.width)},
        {"height", c_synth->add_option("--height", s.height)},
        {"fov_degrees", c_synth->add_option("--fov", s.fov_degrees, "Horizontal field of view")},
        {"camera_distance", c_synth->add_option("--camera-distance", s.camera_distance)},
        {"orbit_degrees", c_synth->add_option("--orbit", s.orbit_degrees, "Half-angle of the camera arc")},
    };

    try {
        app.parse(argc, argv);
        if (c_render->parsed()) cmd_render(render);
        if (c_quant->parsed()) cmd_quantify(quant);
        if (c_prune->parsed()) cmd_prune(prune, o_ratio->count() > 0, o_budget->count() > 0, o_cycles->count() > 0);
        if (c_eval->parsed()) cmd_eval(eval);
        if (c_audit->parsed()) cmd_audit(audit);
        if (c_synth->parsed()) cmd_synth(synth, synth_flags);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const gspop::InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
