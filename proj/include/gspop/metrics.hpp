// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
// Image-quality metrics. Inputs are clamped to [0, 1] first; comparisons happen
// in the rasterizer's linear color space.
//
#pragma once

#include <gspop/camera.hpp>
#include <gspop/raster.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace gspop {

namespace metrics_detail {

template <typename A, typename B>
void check_same_size(const Image<A>& a, const Image<B>& b, const char* who) {
    if (a.width != b.width || a.height != b.height)
        throw InputError(std::string(who) + ": image sizes differ (" + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" + std::to_string(b.height) +
                         ")");
}

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace metrics_detail

template <typename A, typename B>
double mse(const Image<A>& a, const Image<B>& b) {
    metrics_detail::check_same_size(a, b, "mse");
    if (a.data.empty()) throw InputError("mse: empty images");
    double sum = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = metrics_detail::clamp01(static_cast<double>(a.data[i])) -
                         metrics_detail::clamp01(static_cast<double>(b.data[i]));
        sum += d * d;
    }
    return sum / static_cast<double>(a.data.size());
}

/// 10 log10(1 / MSE); +infinity for identical images.
inline double psnr_from_mse(double m) {
    return m == 0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / m);
}

template <typename A, typename B>
double psnr(const Image<A>& a, const Image<B>& b) {
    return psnr_from_mse(mse(a, b));
}

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Mean local SSIM of the luma (0.299 R + 0.587 G + 0.114 B) over every
/// position where the Gaussian window fits entirely inside the image.
template <typename A, typename B>
double ssim(const Image<A>& a, const Image<B>& b, const SsimParams& p = {}) {
    metrics_detail::check_same_size(a, b, "ssim");
    if (a.width < p.window || a.height < p.window)
        throw InputError("ssim: images smaller than the " + std::to_string(p.window) + "x" + std::to_string(p.window) +
                         " window");
    const int w = a.width, h = a.height;
    auto luma = [&](const auto& img) {
        std::vector<double> y(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] = 0.299 * metrics_detail::clamp01(static_cast<double>(img.data[3 * i])) +
                   0.587 * metrics_detail::clamp01(static_cast<double>(img.data[3 * i + 1])) +
                   0.114 * metrics_detail::clamp01(static_cast<double>(img.data[3 * i + 2]));
        return y;
    };
    const std::vector<double> ya = luma(a), yb = luma(b);

    std::vector<double> kernel(static_cast<std::size_t>(p.window));
    double ksum = 0;
    for (int i = 0; i < p.window; ++i) {
        const double d = i - (p.window - 1) / 2.0;
        kernel[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * p.sigma * p.sigma));
        ksum += kernel[static_cast<std::size_t>(i)];
    }
    for (double& k : kernel) k /= ksum;

    // Separable valid-mode filtering of the five moment images.
    const int ow = w - p.window + 1, oh = h - p.window + 1;
    auto filter = [&](auto&& value) {
        std::vector<double> horiz(static_cast<std::size_t>(ow) * static_cast<std::size_t>(h));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < ow; ++x) {
                double s = 0;
                for (int k = 0; k < p.window; ++k)
                    s += kernel[static_cast<std::size_t>(k)] * value(static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x + k));
                horiz[static_cast<std::size_t>(y) * static_cast<std::size_t>(ow) + static_cast<std::size_t>(x)] = s;
            }
        std::vector<double> out(static_cast<std::size_t>(ow) * static_cast<std::size_t>(oh));
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double s = 0;
                for (int k = 0; k < p.window; ++k)
                    s += kernel[static_cast<std::size_t>(k)] *
                         horiz[static_cast<std::size_t>(y + k) * static_cast<std::size_t>(ow) + static_cast<std::size_t>(x)];
                out[static_cast<std::size_t>(y) * static_cast<std::size_t>(ow) + static_cast<std::size_t>(x)] = s;
            }
        return out;
    };
    const auto mu_a = filter([&](std::size_t i) { return ya[i]; });
    const auto mu_b = filter([&](std::size_t i) { return yb[i]; });
    const auto aa = filter([&](std::size_t i) { return ya[i] * ya[i]; });
    const auto bb = filter([&](std::size_t i) { return yb[i] * yb[i]; });
    const auto ab = filter([&](std::size_t i) { return ya[i] * yb[i]; });

    const double c1 = (p.k1 * 1.0) * (p.k1 * 1.0), c2 = (p.k2 * 1.0) * (p.k2 * 1.0);
    double total = 0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = aa[i] - ma * ma, vb = bb[i] - mb * mb, cov = ab[i] - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(mu_a.size());
}

struct ViewMetrics {
    std::string name;
    double mse = 0;
    double psnr = 0;
    double ssim = 0;
};

struct MetricReport {
    std::vector<ViewMetrics> views;
    double mean_mse = 0;
    double mean_psnr = 0;
    double mean_ssim = 0;

    std::size_t view_count() const { return views.size(); }
};

/// Renders both scenes from every view and compares them; `a` is the
/// reference (typically the unpruned scene).
template <typename T = float>
MetricReport eval_views(const GaussianScene& a, const GaussianScene& b, std::span<const CameraView> views,
                        const Rgb& background = {0, 0, 0}, unsigned threads = 1, int sh_degree = kMaxShDegree) {
    if (views.empty()) throw InputError("eval: no views");
    RasterOptions opts;
    opts.threads = threads;
    opts.sh_degree = sh_degree;
    const Vec3<T> bg = background.cast<T>();
    MetricReport report;
    for (const auto& view : views) {
        const auto ra = render<T>(a, view, bg, opts);
        const auto rb = render<T>(b, view, bg, opts);
        ViewMetrics m;
        m.name = view.name;
        m.mse = mse(ra.image, rb.image);
        m.psnr = psnr_from_mse(m.mse);
        m.ssim = ssim(ra.image, rb.image);
        report.mean_mse += m.mse;
        report.mean_psnr += m.psnr;
        report.mean_ssim += m.ssim;
        report.views.push_back(std::move(m));
    }
    const double n = static_cast<double>(report.views.size());
    report.mean_mse /= n;
    report.mean_psnr /= n;
    report.mean_ssim /= n;
    return report;
}

/// JSON cannot hold infinities; they are written as the string "inf".
inline nlohmann::json json_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    return v;
}

inline nlohmann::json to_json(const MetricReport& r) {
    nlohmann::json views = nlohmann::json::array();
    for (const auto& v : r.views)
        views.push_back({{"name", v.name}, {"mse", v.mse}, {"psnr", json_number(v.psnr)}, {"ssim", v.ssim}});
    return {{"view_count", r.view_count()},
            {"mean_mse", r.mean_mse},
            {"mean_psnr", json_number(r.mean_psnr)},
            {"mean_ssim", r.mean_ssim},
            {"views", views}};
}

inline void print_table(const MetricReport& r, std::ostream& out) {
    char line[256];
    std::snprintf(line, sizeof line, "%-24s %14s %10s %8s\n", "view", "mse", "psnr_db", "ssim");
    out << line;
    for (const auto& v : r.views) {
        std::snprintf(line, sizeof line, "%-24s %14.6e %10.4f %8.5f\n", v.name.c_str(), v.mse, v.psnr, v.ssim);
        out << line;
    }
    std::snprintf(line, sizeof line, "%-24s %14.6e %10.4f %8.5f\n", "mean", r.mean_mse, r.mean_psnr, r.mean_ssim);
    out << line;
}

}  // namespace gspop
