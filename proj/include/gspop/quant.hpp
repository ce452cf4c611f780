// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
// Render-once error quantification.
//
// For each pixel the recorded front-to-back list H = <(id, c_k, a_k)> is
// re-blended to obtain the pixel color C and the running sums
//   P_k = sum_{j<=k} T_j a_j c_j,    T_{k+1} = prod_{j<=k} (1 - a_j).
// Everything behind contributor k composites to b_{k+1} = (C - P_k) / T_{k+1},
// and removing k changes the pixel by exactly T_k a_k (c_k - b_{k+1}), so the
// squared error of the removal is ||T_k a_k (c_k - b_{k+1})||^2. Per-pixel
// errors are summed per Gaussian over all pixels of all views.
//
// The scene background is folded into C before the back-solve, so b_{k+1}
// includes the background seen through the residual transmittance.
//
#pragma once

#include <gspop/camera.hpp>
#include <gspop/core.hpp>
#include <gspop/model.hpp>
#include <gspop/raster.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gspop {

struct QuantConstants {
    double epsilon = 1e-9;  // guards the back-solve division
    int n_max = kDefaultNMax;
};

struct QuantOptions {
    Rgb background{0, 0, 0};
    int sh_degree = kMaxShDegree;
    unsigned threads = 1;  // 0 = all cores; 1 is the deterministic reference
};

/// Cumulative color and transmittance after each contributor of one pixel.
template <typename T>
struct BlendState {
    std::vector<Vec3<T>> color;        // P_k
    std::vector<T> transmittance;      // T_{k+1}

    std::size_t size() const { return color.size(); }
};

/// Re-blends `h` front to back. Returns C = P_N + T_{N+1} * background and
/// fills `state` (resized to |h|).
template <typename T>
Vec3<T> blend_prefix(std::span<const PixelContribution<T>> h, const Vec3<T>& background, BlendState<T>& state) {
    state.color.resize(h.size());
    state.transmittance.resize(h.size());
    Vec3<T> acc{};
    T trans = T(1);
    for (std::size_t k = 0; k < h.size(); ++k) {
        blend_step(acc, trans, h[k].c, h[k].a);
        state.color[k] = acc;
        state.transmittance[k] = trans;
    }
    return composite_background(acc, trans, background);
}

template <typename T>
std::pair<Vec3<T>, BlendState<T>> blend_prefix(std::span<const PixelContribution<T>> h, const Vec3<T>& background) {
    BlendState<T> state;
    const Vec3<T> c = blend_prefix(h, background, state);
    return {c, std::move(state)};
}

/// b_{k+1} = (C - P_k) / (T_{k+1} + eps). No clamping.
template <typename T>
inline Vec3<T> solve_background(const Vec3<T>& color, const Vec3<T>& prefix, T t_next, T eps) {
    const T denom = t_next + eps;
    return {(color.x - prefix.x) / denom, (color.y - prefix.y) / denom, (color.z - prefix.z) / denom};
}

/// ||T_k a_k (c_k - b_{k+1})||^2
template <typename T>
inline T delta_se(T t_k, T alpha_k, const Vec3<T>& c_k, const Vec3<T>& b_next) {
    const T w = t_k * alpha_k;
    const T dx = w * (c_k.x - b_next.x);
    const T dy = w * (c_k.y - b_next.y);
    const T dz = w * (c_k.z - b_next.z);
    return dx * dx + dy * dy + dz * dz;
}

/// Calls sink(k, delta_se_k) for every contributor of one pixel, given the
/// outputs of blend_prefix on the same list.
template <typename T, typename Sink>
void quantify_pixel(std::span<const PixelContribution<T>> h, const Vec3<T>& color, const BlendState<T>& state, T eps,
                    Sink&& sink) {
    for (std::size_t k = 0; k < h.size(); ++k) {
        const T t_before = k == 0 ? T(1) : state.transmittance[k - 1];
        const Vec3<T> b = solve_background(color, state.color[k], state.transmittance[k], eps);
        sink(k, delta_se(t_before, h[k].a, h[k].c, b));
    }
}

template <typename T>
std::vector<std::pair<GaussianId, T>> quantify_pixel(std::span<const PixelContribution<T>> h, const Vec3<T>& color,
                                                     const BlendState<T>& state, T eps) {
    std::vector<std::pair<GaussianId, T>> out;
    out.reserve(h.size());
    quantify_pixel(h, color, state, eps, [&](std::size_t k, T e) { out.emplace_back(h[k].id, e); });
    return out;
}

/// Per-Gaussian accumulated removal error.
struct ErrorBuffer {
    std::vector<double> delta_se;
    std::vector<std::uint64_t> touch_count;
    // Diagnostics of the passes that produced the buffer.
    std::size_t view_count = 0;
    std::uint64_t capped_pixels = 0;
    std::uint64_t terminated_pixels = 0;

    ErrorBuffer() = default;
    explicit ErrorBuffer(std::size_t m) : delta_se(m, 0.0), touch_count(m, 0) {}

    std::size_t size() const { return delta_se.size(); }

    ErrorBuffer& operator+=(const ErrorBuffer& o) {
        if (o.size() != size()) throw Error("ErrorBuffer: size mismatch in accumulation");
        for (std::size_t i = 0; i < size(); ++i) {
            delta_se[i] += o.delta_se[i];
            touch_count[i] += o.touch_count[i];
        }
        view_count += o.view_count;
        capped_pixels += o.capped_pixels;
        terminated_pixels += o.terminated_pixels;
        return *this;
    }

    double total() const {
        double s = 0;
        for (double v : delta_se) s += v;
        return s;
    }
};

/// Quantifies one view into a fresh buffer of the scene's size.
template <typename T>
ErrorBuffer quantify_view(const GaussianScene& scene, const CameraView& view, const QuantConstants& consts,
                          const QuantOptions& opts) {
    const auto proj = project<T>(scene, view, std::min(opts.sh_degree, scene.sh_degree));
    const TileGrid grid = bin_tiles<T>(proj, view);
    const Vec3<T> bg = opts.background.cast<T>();
    const T eps = static_cast<T>(consts.epsilon);
    RasterOptions ropts;
    ropts.record = true;
    ropts.n_max = consts.n_max;
    ropts.threads = opts.threads;

    const unsigned workers = resolve_threads(opts.threads);
    std::vector<ErrorBuffer> shards(workers, ErrorBuffer(scene.size()));
    std::vector<BlendState<T>> states(workers);
    rasterize<T>(proj, grid, view, bg, ropts,
                 [&](unsigned worker, int, int, std::span<const PixelContribution<T>> h, const Vec3<T>&, T,
                     std::uint8_t flags) {
                     ErrorBuffer& shard = shards[worker];
                     if (flags & kPixelCapped) ++shard.capped_pixels;
                     if (flags & kPixelTerminated) ++shard.terminated_pixels;
                     if (h.empty()) return;
                     BlendState<T>& state = states[worker];
                     const Vec3<T> color = blend_prefix(h, bg, state);
                     quantify_pixel(h, color, state, eps, [&](std::size_t k, T e) {
                         const GaussianId id = h[k].id;
                         shard.delta_se[id] += static_cast<double>(e);
                         ++shard.touch_count[id];
                     });
                 });
    ErrorBuffer out = std::move(shards[0]);
    for (unsigned w = 1; w < workers; ++w) out += shards[w];
    out.view_count = 1;
    return out;
}

/// Sums per-Gaussian removal error over every pixel of every view. Ground
/// truth images are never consulted; the baseline is the scene's own render.
/// Views are reduced in order, so with one thread the result is bit-exact
/// reproducible and additive over view prefixes.
template <typename T = float>
ErrorBuffer quantify_scene(const GaussianScene& scene, std::span<const CameraView> views, const QuantConstants& consts = {},
                           const QuantOptions& opts = {}) {
    if (scene.empty()) throw InputError("quantify: scene is empty");
    if (views.empty()) throw InputError("quantify: no views");
    if (!(consts.epsilon >= 0)) throw InputError("quantify: epsilon must be >= 0");
    ErrorBuffer total(scene.size());
    for (const auto& view : views) total += quantify_view<T>(scene, view, consts, opts);
    return total;
}

/// Log-scale histogram of accumulated errors; exact zeros are counted apart.
struct Histogram {
    std::uint64_t zero_count = 0;
    double log10_min = 0;  // lower edge of the first bin
    double bin_width = 0;  // in decades
    std::vector<std::uint64_t> counts;

    double lower_edge(std::size_t i) const { return log10_min + bin_width * static_cast<double>(i); }
};

/// Bins positive values evenly in log10 between the decade floor of the
/// smallest and the decade ceiling above the largest value.
inline Histogram histogram(std::span<const double> values, int bins) {
    if (bins < 2) throw InputError("histogram: bins must be >= 2");
    Histogram h;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : values) {
        if (v > 0) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        } else {
            ++h.zero_count;
        }
    }
    if (!(lo <= hi)) return h;  // nothing positive
    h.log10_min = std::floor(std::log10(lo));
    const double top = std::floor(std::log10(hi)) + 1.0;
    h.bin_width = (top - h.log10_min) / bins;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    for (double v : values) {
        if (!(v > 0)) continue;
        const double pos = (std::log10(v) - h.log10_min) / h.bin_width;
        const auto i = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, bins - 1.0));
        ++h.counts[i];
    }
    return h;
}

inline Histogram histogram(const ErrorBuffer& buffer, int bins) { return histogram(buffer.delta_se, bins); }

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// CSV rows `log10_lower_edge,count`; the zero bin comes first with edge -inf.
inline void write_histogram_csv(const Histogram& h, std::ostream& out) {
    out << "log10_lower_edge,count\n";
    out << "-inf," << h.zero_count << "\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) out << format_double(h.lower_edge(i)) << "," << h.counts[i] << "\n";
}

/// Scores CSV: `#` metadata lines, header, one row per Gaussian.
inline void write_scores_csv(const ErrorBuffer& buffer, const QuantConstants& consts, const QuantOptions& opts,
                             std::ostream& out) {
    out << "# epsilon=" << format_double(consts.epsilon) << "\n";
    out << "# n_max=" << consts.n_max << "\n";
    out << "# views=" << buffer.view_count << "\n";
    out << "# background=" << format_double(opts.background.x) << "," << format_double(opts.background.y) << ","
        << format_double(opts.background.z) << "\n";
    out << "# capped_pixels=" << buffer.capped_pixels << "\n";
    out << "# terminated_pixels=" << buffer.terminated_pixels << "\n";
    out << "gaussian_id,delta_se,touch_count\n";
    for (std::size_t i = 0; i < buffer.size(); ++i)
        out << i << "," << format_double(buffer.delta_se[i]) << "," << buffer.touch_count[i] << "\n";
}

}  // namespace gspop
