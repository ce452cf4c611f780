// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force leave-one-out validation of the analytic removal error.
//
// The oracle re-renders every view with one Gaussian removed, in double
// precision and without the contribution cap, and sums ||C - C'||^2 over all
// pixels. It shares only the rasterizer with the analytic path; background
// terms are recomputed by direct summation without the epsilon guard.
//
#pragma once

#include <gspop/camera.hpp>
#include <gspop/model.hpp>
#include <gspop/quant.hpp>
#include <gspop/raster.hpp>

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <ostream>
#include <span>
#include <vector>

namespace gspop {

/// Composite of everything behind contributor `k` (0-based), normalized by the
/// transmittance in front of it:
///   sum_{j>k} (T_j / T_{k+1}) a_j c_j + (T_{N+1} / T_{k+1}) bg.
/// The ratio T_j / T_{k+1} is accumulated directly as prod_{k<i<j} (1 - a_i).
template <typename T>
Vec3<double> background_direct(std::span<const PixelContribution<T>> h, std::size_t k, const Vec3<double>& bg) {
    if (k >= h.size()) throw InputError("background_direct: contributor index out of range");
    Vec3<double> b{};
    double ratio = 1.0;
    for (std::size_t j = k + 1; j < h.size(); ++j) {
        const double a = static_cast<double>(h[j].a);
        b += (ratio * a) * h[j].c.template cast<double>();
        ratio *= 1.0 - a;
    }
    return b + ratio * bg;
}

struct OracleOptions {
    Rgb background{0, 0, 0};
    int sh_degree = kMaxShDegree;
    unsigned threads = 1;
    std::size_t max_gaussians = 200;  // size guard; 0 disables it
};

namespace oracle_detail {

inline double image_se(const Image<double>& a, const Image<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s;
}

inline RasterOptions full_render_options(const OracleOptions& o) {
    RasterOptions r;
    r.record = false;
    r.sh_degree = o.sh_degree;
    r.threads = 1;
    return r;
}

}  // namespace oracle_detail

/// Sum over all pixels of all views of the squared color change caused by
/// removing `id`, rendered in double precision.
inline double leave_one_out_se(const GaussianScene& scene, std::span<const CameraView> views, GaussianId id,
                               const OracleOptions& opts = {}) {
    if (id >= scene.size()) throw InputError("leave_one_out_se: unknown gaussian id " + std::to_string(id));
    const auto ropts = oracle_detail::full_render_options(opts);
    const GaussianId removed[] = {id};
    GaussianScene without;
    if (scene.size() > 1) without = remove_ids(scene, removed).scene;
    double se = 0;
    for (const auto& view : views) {
        const auto base = render<double>(scene, view, opts.background, ropts);
        if (without.empty()) {
            // Nothing left: every pixel shows the background.
            Image<double> bg(view.width, view.height);
            for (std::size_t i = 0; i < bg.data.size(); ++i) bg.data[i] = opts.background[i % 3];
            se += oracle_detail::image_se(base.image, bg);
        } else {
            se += oracle_detail::image_se(base.image, render<double>(without, view, opts.background, ropts).image);
        }
    }
    return se;
}

struct OracleEntry {
    GaussianId id = 0;
    double brute_se = 0;
    double analytic = 0;
    double epsilon_bound = 0;  // largest effect of the epsilon guard on the analytic value
    double discrepancy = 0;    // max(0, |analytic - brute| - epsilon_bound) / max(|analytic|, |brute|)
    bool affected = false;     // covers a pixel where the cap or early termination fired
};

struct OracleReport {
    std::vector<OracleEntry> entries;
    int precision_bits = 32;
    double epsilon = 0;
    int n_max = 0;
    std::size_t view_count = 0;
    std::uint64_t flagged_pixels = 0;
    std::size_t affected_gaussians = 0;
    double max_discrepancy = 0;   // over unaffected Gaussians
    double mean_discrepancy = 0;  // over unaffected Gaussians
    double max_discrepancy_all = 0;
    double seconds = 0;
};

/// Runs the analytic quantification in precision T and the double-precision
/// leave-one-out oracle for every Gaussian, and compares them. Gaussians that
/// overlap a capped or terminated pixel are flagged and kept out of the
/// summary maxima, since exact agreement is not expected there.
template <typename T = float>
OracleReport audit(const GaussianScene& scene, std::span<const CameraView> views, const QuantConstants& consts = {},
                   const OracleOptions& opts = {}) {
    if (scene.empty()) throw InputError("audit: scene is empty");
    if (views.empty()) throw InputError("audit: no views");
    if (opts.max_gaussians != 0 && scene.size() > opts.max_gaussians)
        throw InputError("audit: scene has " + std::to_string(scene.size()) + " gaussians, above the limit of " +
                         std::to_string(opts.max_gaussians));
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t m = scene.size();

    QuantOptions qopts;
    qopts.background = opts.background;
    qopts.sh_degree = opts.sh_degree;
    qopts.threads = opts.threads;
    const ErrorBuffer analytic = quantify_scene<T>(scene, views, consts, qopts);

    OracleReport report;
    report.precision_bits = sizeof(T) * 8;
    report.epsilon = consts.epsilon;
    report.n_max = consts.n_max;
    report.view_count = views.size();
    report.entries.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        report.entries[i].id = static_cast<GaussianId>(i);
        report.entries[i].analytic = analytic.delta_se[i];
    }

    // Flags and epsilon bounds from a recording pass in the analytic precision.
    std::vector<char> affected(m, 0);
    const Vec3<T> bg = opts.background.cast<T>();
    const double eps = consts.epsilon;
    const auto full = oracle_detail::full_render_options(opts);
    for (const auto& view : views) {
        const auto proj = project<T>(scene, view, std::min(opts.sh_degree, scene.sh_degree));
        const TileGrid grid = bin_tiles<T>(proj, view);
        RasterOptions ropts;
        ropts.record = true;
        ropts.n_max = consts.n_max;
        ropts.sh_degree = opts.sh_degree;
        const auto reference = render<double>(scene, view, opts.background, full);
        BlendState<T> state;
        rasterize<T>(proj, grid, view, bg, ropts,
                     [&](unsigned, int px, int py, std::span<const PixelContribution<T>> h, const Vec3<T>&, T,
                         std::uint8_t flags) {
                         const std::size_t p = static_cast<std::size_t>(py) * static_cast<std::size_t>(view.width) +
                                               static_cast<std::size_t>(px);
                         flags |= reference.flags[p];
                         if (flags != 0) {
                             ++report.flagged_pixels;
                             for (const auto& g : proj)
                                 if (pixel_alpha(g, px, py) > T(0)) affected[g.id] = 1;
                         }
                         if (h.empty()) return;
                         const Vec3<T> color = blend_prefix(h, bg, state);
                         for (std::size_t k = 0; k < h.size(); ++k) {
                             const double t_next = static_cast<double>(state.transmittance[k]);
                             const double t_k = k == 0 ? 1.0 : static_cast<double>(state.transmittance[k - 1]);
                             const Vec3<double> residual = (color - state.color[k]).template cast<double>();
                             const Vec3<double> b = residual / t_next;
                             const double w = t_k * static_cast<double>(h[k].a);
                             const double diff = std::sqrt(squared_norm(h[k].c.template cast<double>() - b));
                             const double shift = std::sqrt(squared_norm(residual)) * eps / (t_next * (t_next + eps));
                             report.entries[h[k].id].epsilon_bound += w * w * (2.0 * diff * shift + shift * shift);
                         }
                     });
    }

    // Leave-one-out renders, parallel over ids.
    std::vector<Image<double>> base;
    base.reserve(views.size());
    for (const auto& view : views) base.push_back(render<double>(scene, view, opts.background, full).image);
    parallel_chunks(m, opts.threads, [&](std::size_t begin, std::size_t end, unsigned) {
        for (std::size_t i = begin; i < end; ++i) {
            const GaussianId removed[] = {static_cast<GaussianId>(i)};
            double se = 0;
            if (m == 1) {
                for (std::size_t v = 0; v < views.size(); ++v) {
                    Image<double> bgimg(views[v].width, views[v].height);
                    for (std::size_t q = 0; q < bgimg.data.size(); ++q) bgimg.data[q] = opts.background[q % 3];
                    se += oracle_detail::image_se(base[v], bgimg);
                }
            } else {
                const GaussianScene without = remove_ids(scene, removed).scene;
                for (std::size_t v = 0; v < views.size(); ++v)
                    se += oracle_detail::image_se(base[v], render<double>(without, views[v], opts.background, full).image);
            }
            report.entries[i].brute_se = se;
        }
    });

    double sum = 0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < m; ++i) {
        OracleEntry& e = report.entries[i];
        e.affected = affected[i] != 0;
        const double scale = std::max(std::abs(e.analytic), std::abs(e.brute_se));
        const double excess = std::max(0.0, std::abs(e.analytic - e.brute_se) - e.epsilon_bound);
        e.discrepancy = scale > 0 ? excess / scale : 0.0;
        report.max_discrepancy_all = std::max(report.max_discrepancy_all, e.discrepancy);
        if (e.affected) {
            ++report.affected_gaussians;
            continue;
        }
        report.max_discrepancy = std::max(report.max_discrepancy, e.discrepancy);
        sum += e.discrepancy;
        ++counted;
    }
    report.mean_discrepancy = counted ? sum / static_cast<double>(counted) : 0.0;
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

inline void write_oracle_csv(const OracleReport& r, std::ostream& out) {
    out << "gaussian_id,brute_se,analytic_delta_se,epsilon_bound,relative_discrepancy,affected\n";
    for (const auto& e : r.entries)
        out << e.id << "," << format_double(e.brute_se) << "," << format_double(e.analytic) << ","
            << format_double(e.epsilon_bound) << "," << format_double(e.discrepancy) << "," << (e.affected ? 1 : 0)
            << "\n";
}

inline nlohmann::json summary_json(const OracleReport& r) {
    return {{"gaussians", r.entries.size()},
            {"views", r.view_count},
            {"precision_bits", r.precision_bits},
            {"epsilon", r.epsilon},
            {"n_max", r.n_max},
            {"flagged_pixels", r.flagged_pixels},
            {"affected_gaussians", r.affected_gaussians},
            {"max_relative_discrepancy", r.max_discrepancy},
            {"mean_relative_discrepancy", r.mean_discrepancy},
            {"max_relative_discrepancy_including_affected", r.max_discrepancy_all},
            {"seconds", r.seconds}};
}

}  // namespace gspop
