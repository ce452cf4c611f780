// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
// Tile-based front-to-back alpha-blending rasterizer.
//
// Every pixel walks the depth-sorted list of its tile. A Gaussian contributes
// alpha = min(0.99, opacity * exp(-0.5 d^T conic d)); contributions below 1/255
// are skipped, and blending stops before the contribution that would push
// transmittance below 1e-4. Recording passes additionally cap the per-pixel
// contribution list at n_max entries and leave the truncated tail out of the
// pixel color, so that the color is always exactly the blend of the list plus
// the residual-transmittance background.
//
#pragma once

#include <gspop/camera.hpp>
#include <gspop/core.hpp>
#include <gspop/model.hpp>

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

namespace gspop {

inline constexpr double kAlphaMin = 1.0 / 255.0;
inline constexpr double kAlphaMax = 0.99;
inline constexpr double kMinTransmittance = 1e-4;
inline constexpr int kTileSize = 16;
inline constexpr int kDefaultNMax = 64;

template <typename T>
struct PixelContribution {
    GaussianId id = 0;
    Vec3<T> c;
    T a{};
};

enum PixelFlag : std::uint8_t {
    kPixelTerminated = 1,  // early termination dropped at least one contributor
    kPixelCapped = 2,      // the n_max cap dropped at least one contributor
};

struct RasterOptions {
    bool record = false;
    int n_max = kDefaultNMax;  // applies to recording passes only; <= 0 disables the cap
    int sh_degree = kMaxShDegree;
    unsigned threads = 1;  // 0 = all cores
};

/// One front-to-back compositing step: acc += trans * a * c; trans *= 1 - a.
/// The rasterizer and the quantifier both go through this function so that a
/// re-blend of a recorded list reproduces the rendered pixel bit for bit.
template <typename T>
inline void blend_step(Vec3<T>& acc, T& trans, const Vec3<T>& c, T a) {
    const T weight = trans * a;
    acc.x += weight * c.x;
    acc.y += weight * c.y;
    acc.z += weight * c.z;
    trans = trans * (T(1) - a);
}

/// Adds the residual-transmittance background: acc + trans * bg.
template <typename T>
inline Vec3<T> composite_background(const Vec3<T>& acc, T trans, const Vec3<T>& bg) {
    return {acc.x + trans * bg.x, acc.y + trans * bg.y, acc.z + trans * bg.z};
}

/// Per-tile lists of projected-Gaussian indices, sorted front to back
/// (depth, then id).
struct TileGrid {
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::vector<std::uint32_t>> lists;

    const std::vector<std::uint32_t>& at(int tx, int ty) const {
        return lists[static_cast<std::size_t>(ty) * static_cast<std::size_t>(tiles_x) + static_cast<std::size_t>(tx)];
    }
};

template <typename T>
TileGrid bin_tiles(std::span<const ProjectedGaussian<T>> proj, const CameraView& view) {
    TileGrid grid;
    grid.tiles_x = (view.width + kTileSize - 1) / kTileSize;
    grid.tiles_y = (view.height + kTileSize - 1) / kTileSize;
    grid.lists.resize(static_cast<std::size_t>(grid.tiles_x) * static_cast<std::size_t>(grid.tiles_y));
    for (std::size_t i = 0; i < proj.size(); ++i) {
        const auto& g = proj[i];
        // Pixel px is sampled at px + 0.5.
        const double lo_x = std::ceil(static_cast<double>(g.mean_x) - g.radius - 0.5);
        const double hi_x = std::floor(static_cast<double>(g.mean_x) + g.radius - 0.5);
        const double lo_y = std::ceil(static_cast<double>(g.mean_y) - g.radius - 0.5);
        const double hi_y = std::floor(static_cast<double>(g.mean_y) + g.radius - 0.5);
        const int x0 = static_cast<int>(std::max(lo_x, 0.0)), x1 = static_cast<int>(std::min(hi_x, view.width - 1.0));
        const int y0 = static_cast<int>(std::max(lo_y, 0.0)), y1 = static_cast<int>(std::min(hi_y, view.height - 1.0));
        if (x0 > x1 || y0 > y1) continue;
        for (int ty = y0 / kTileSize; ty <= y1 / kTileSize; ++ty)
            for (int tx = x0 / kTileSize; tx <= x1 / kTileSize; ++tx)
                grid.lists[static_cast<std::size_t>(ty) * static_cast<std::size_t>(grid.tiles_x) +
                           static_cast<std::size_t>(tx)]
                    .push_back(static_cast<std::uint32_t>(i));
    }
    for (auto& list : grid.lists)
        std::sort(list.begin(), list.end(), [&](std::uint32_t a, std::uint32_t b) {
            if (proj[a].depth != proj[b].depth) return proj[a].depth < proj[b].depth;
            return proj[a].id < proj[b].id;
        });
    return grid;
}

/// Pixel-opacity of a projected Gaussian at pixel (px, py), clamped to
/// kAlphaMax; returns 0 where the Gaussian falls below kAlphaMin.
template <typename T>
inline T pixel_alpha(const ProjectedGaussian<T>& g, int px, int py) {
    const T dx = (static_cast<T>(px) + T(0.5)) - g.mean_x;
    const T dy = (static_cast<T>(py) + T(0.5)) - g.mean_y;
    const T power = T(-0.5) * (g.conic.xx * dx * dx + g.conic.yy * dy * dy) - g.conic.xy * dx * dy;
    if (power > T(0)) return T(0);
    const T alpha = std::min(static_cast<T>(kAlphaMax), g.opacity * std::exp(power));
    return alpha < static_cast<T>(kAlphaMin) ? T(0) : alpha;
}

/// Walks every pixel and hands its contribution list and color to
/// visit(worker, px, py, span<const PixelContribution<T>>, const Vec3<T>& color,
///       T residual_transmittance, std::uint8_t flags).
/// Rows are split into contiguous bands, one per worker; each worker visits its
/// band in row-major order. With one thread the walk is fully row-major.
template <typename T, typename Visitor>
void rasterize(std::span<const ProjectedGaussian<T>> proj, const TileGrid& grid, const CameraView& view,
               const Vec3<T>& background, const RasterOptions& opts, Visitor&& visit) {
    const std::size_t cap = (opts.record && opts.n_max > 0) ? static_cast<std::size_t>(opts.n_max) : SIZE_MAX;
    const T t_min = static_cast<T>(kMinTransmittance);
    parallel_chunks(static_cast<std::size_t>(view.height), opts.threads,
                    [&](std::size_t row_begin, std::size_t row_end, unsigned worker) {
                        std::vector<PixelContribution<T>> h;
                        for (std::size_t row = row_begin; row < row_end; ++row) {
                            const int py = static_cast<int>(row);
                            for (int px = 0; px < view.width; ++px) {
                                h.clear();
                                std::uint8_t flags = 0;
                                Vec3<T> acc{};
                                T trans = T(1);
                                for (const std::uint32_t idx : grid.at(px / kTileSize, py / kTileSize)) {
                                    const auto& g = proj[idx];
                                    const T alpha = pixel_alpha(g, px, py);
                                    if (alpha == T(0)) continue;
                                    if (h.size() >= cap) {
                                        flags |= kPixelCapped;
                                        break;
                                    }
                                    if (trans * (T(1) - alpha) < t_min) {
                                        flags |= kPixelTerminated;
                                        break;
                                    }
                                    blend_step(acc, trans, g.color, alpha);
                                    h.push_back({g.id, g.color, alpha});
                                }
                                visit(worker, px, py, std::span<const PixelContribution<T>>(h),
                                      composite_background(acc, trans, background), trans, flags);
                            }
                        }
                    });
}

/// H x W x 3 linear RGB image, row-major, channel-interleaved.
template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3) {}

    T& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3 +
                    static_cast<std::size_t>(c)];
    }
    T at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3 +
                    static_cast<std::size_t>(c)];
    }
    Vec3<T> pixel(int x, int y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
};

template <typename T>
struct RenderOutput {
    Image<T> image;  // unclamped
    Vec3<T> background;
    std::vector<T> residual_transmittance;  // per pixel, after the last blended contributor
    std::vector<std::uint8_t> flags;        // per pixel, PixelFlag bits
    // Recorded contribution lists in CSR form (empty unless record was set).
    std::vector<std::size_t> offsets;
    std::vector<PixelContribution<T>> entries;

    bool recorded() const { return !offsets.empty(); }

    std::span<const PixelContribution<T>> contributions(int x, int y) const {
        const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(image.width) + static_cast<std::size_t>(x);
        return {entries.data() + offsets[p], offsets[p + 1] - offsets[p]};
    }
};

template <typename T>
RenderOutput<T> render(const GaussianScene& scene, const CameraView& view, const Vec3<T>& background,
                       const RasterOptions& opts = {}) {
    const auto proj = project<T>(scene, view, std::min(opts.sh_degree, scene.sh_degree));
    const TileGrid grid = bin_tiles<T>(proj, view);

    RenderOutput<T> out;
    out.image = Image<T>(view.width, view.height);
    out.background = background;
    out.residual_transmittance.resize(view.pixel_count());
    out.flags.resize(view.pixel_count());

    // Per-worker CSR pieces; bands are contiguous so concatenation in worker
    // order restores global row-major order.
    const unsigned workers = resolve_threads(opts.threads);
    std::vector<std::vector<std::size_t>> counts(workers);
    std::vector<std::vector<PixelContribution<T>>> pieces(workers);
    rasterize<T>(proj, grid, view, background, opts,
                 [&](unsigned worker, int px, int py, std::span<const PixelContribution<T>> h, const Vec3<T>& color,
                     T trans, std::uint8_t flags) {
                     const std::size_t p = static_cast<std::size_t>(py) * static_cast<std::size_t>(view.width) +
                                           static_cast<std::size_t>(px);
                     out.image.data[3 * p + 0] = color.x;
                     out.image.data[3 * p + 1] = color.y;
                     out.image.data[3 * p + 2] = color.z;
                     out.residual_transmittance[p] = trans;
                     out.flags[p] = flags;
                     if (opts.record) {
                         counts[worker].push_back(h.size());
                         pieces[worker].insert(pieces[worker].end(), h.begin(), h.end());
                     }
                 });
    if (opts.record) {
        out.offsets.reserve(view.pixel_count() + 1);
        out.offsets.push_back(0);
        for (unsigned w = 0; w < workers; ++w) {
            for (std::size_t n : counts[w]) out.offsets.push_back(out.offsets.back() + n);
            out.entries.insert(out.entries.end(), pieces[w].begin(), pieces[w].end());
        }
    }
    return out;
}

/// Clamps to [0, 1] and converts to double, the domain used for metrics.
template <typename T>
Image<double> clamped(const Image<T>& img) {
    Image<double> out(img.width, img.height);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = std::clamp(static_cast<double>(img.data[i]), 0.0, 1.0);
    return out;
}

}  // namespace gspop
