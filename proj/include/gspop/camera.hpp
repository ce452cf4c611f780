// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <gspop/core.hpp>
#include <gspop/model.hpp>

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace gspop {

/// Pinhole camera. Pixel (px, py) is sampled at image coordinate
/// (px + 0.5, py + 0.5); camera axes follow the OpenCV convention
/// (x right, y down, z forward).
struct CameraView {
    std::string name;
    int width = 0;
    int height = 0;
    double fx = 0, fy = 0;
    double cx = 0, cy = 0;
    std::array<double, 16> world_to_camera{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};  // row-major

    template <typename T = double>
    Mat3<T> rotation() const {
        Mat3<T> r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = static_cast<T>(world_to_camera[static_cast<std::size_t>(4 * i + j)]);
        return r;
    }

    template <typename T = double>
    Vec3<T> translation() const {
        return {static_cast<T>(world_to_camera[3]), static_cast<T>(world_to_camera[7]),
                static_cast<T>(world_to_camera[11])};
    }

    /// Camera center in world coordinates, -R^T t.
    template <typename T = double>
    Vec3<T> center() const {
        const Vec3<T> c = rotation<T>().transposed() * translation<T>();
        return {-c.x, -c.y, -c.z};
    }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
};

using ViewSet = std::vector<CameraView>;

inline constexpr double kOrthonormalTolerance = 1e-4;

/// Throws InputError if the camera violates its invariants.
inline void validate_view(const CameraView& v) {
    const std::string who = "view '" + v.name + "': ";
    if (v.width < 1 || v.height < 1) throw InputError(who + "width and height must be >= 1");
    if (!(v.fx > 0) || !(v.fy > 0)) throw InputError(who + "fx and fy must be > 0");
    for (double x : v.world_to_camera)
        if (!std::isfinite(x)) throw InputError(who + "world_to_camera has non-finite entries");
    if (!std::isfinite(v.cx) || !std::isfinite(v.cy)) throw InputError(who + "principal point is not finite");
    const Mat3<double> r = v.rotation();
    const Mat3<double> rrt = r * r.transposed();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (std::abs(rrt(i, j) - (i == j ? 1.0 : 0.0)) > kOrthonormalTolerance)
                throw InputError(who + "rotation block of world_to_camera is not orthonormal");
    const double det = r(0, 0) * (r(1, 1) * r(2, 2) - r(1, 2) * r(2, 1)) -
                       r(0, 1) * (r(1, 0) * r(2, 2) - r(1, 2) * r(2, 0)) +
                       r(0, 2) * (r(1, 0) * r(2, 1) - r(1, 1) * r(2, 0));
    if (det < 0) throw InputError(who + "rotation block of world_to_camera is a reflection");
    const auto& m = v.world_to_camera;
    if (std::abs(m[12]) > kOrthonormalTolerance || std::abs(m[13]) > kOrthonormalTolerance ||
        std::abs(m[14]) > kOrthonormalTolerance || std::abs(m[15] - 1.0) > kOrthonormalTolerance)
        throw InputError(who + "world_to_camera bottom row must be [0, 0, 0, 1]");
}

inline void validate_views(const ViewSet& views) {
    if (views.empty()) throw InputError("view set is empty");
    std::set<std::string> names;
    for (const auto& v : views) {
        validate_view(v);
        if (!names.insert(v.name).second) throw InputError("duplicate view name '" + v.name + "'");
    }
}

inline nlohmann::json views_to_json(const ViewSet& views) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& v : views)
        arr.push_back({{"name", v.name},
                       {"width", v.width},
                       {"height", v.height},
                       {"fx", v.fx},
                       {"fy", v.fy},
                       {"cx", v.cx},
                       {"cy", v.cy},
                       {"world_to_camera", v.world_to_camera}});
    return arr;
}

inline ViewSet views_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw InputError("views: top-level value must be an array");
    ViewSet views;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto& o = j[i];
        const std::string where = "views[" + std::to_string(i) + "]";
        if (!o.is_object()) throw InputError(where + " is not an object");
        auto require = [&](const char* key) -> const nlohmann::json& {
            if (!o.contains(key)) throw InputError(where + " is missing '" + key + "'");
            return o.at(key);
        };
        auto number = [&](const char* key) {
            const auto& v = require(key);
            if (!v.is_number()) throw InputError(where + "." + key + " must be a number");
            return v.get<double>();
        };
        auto integer = [&](const char* key) {
            const auto& v = require(key);
            if (!v.is_number_integer()) throw InputError(where + "." + key + " must be an integer");
            return v.get<long long>();
        };
        CameraView v;
        const auto& name = require("name");
        if (!name.is_string()) throw InputError(where + ".name must be a string");
        v.name = name.get<std::string>();
        const long long w = integer("width"), h = integer("height");
        if (w < 1 || h < 1 || w > 1 << 16 || h > 1 << 16) throw InputError(where + ": image size out of range");
        v.width = static_cast<int>(w);
        v.height = static_cast<int>(h);
        v.fx = number("fx");
        v.fy = number("fy");
        v.cx = number("cx");
        v.cy = number("cy");
        const auto& m = require("world_to_camera");
        if (!m.is_array() || m.size() != 16) throw InputError(where + ".world_to_camera must hold 16 numbers");
        for (std::size_t k = 0; k < 16; ++k) {
            if (!m[k].is_number()) throw InputError(where + ".world_to_camera must hold 16 numbers");
            v.world_to_camera[k] = m[k].get<double>();
        }
        views.push_back(std::move(v));
    }
    validate_views(views);
    return views;
}

inline ViewSet load_views(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open views file '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path.string() + ": invalid JSON: " + e.what());
    }
    try {
        return views_from_json(j);
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

inline void save_views(const ViewSet& views, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << views_to_json(views).dump(2) << "\n";
}

/// Real spherical-harmonics basis constants used by 3DGS.
namespace sh {
inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kC2{1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                           -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> kC3{-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                           -0.5900435899266435};
}  // namespace sh

/// View-dependent color of a Gaussian seen along unit direction `dir`
/// (from the camera toward the Gaussian), evaluated up to `degree`.
/// Adds the 0.5 offset and clamps negative channels to 0.
template <typename T>
Vec3<T> eval_sh_color(const Gaussian& g, int scene_degree, int degree, const Vec3<T>& dir) {
    const int rest = (scene_degree + 1) * (scene_degree + 1) - 1;  // coefficients per channel
    degree = std::min(degree, scene_degree);
    Vec3<T> out;
    const T x = dir.x, y = dir.y, z = dir.z;
    for (std::size_t c = 0; c < 3; ++c) {
        auto k = [&](int i) { return static_cast<T>(g.sh_rest[c * static_cast<std::size_t>(rest) + static_cast<std::size_t>(i - 1)]); };
        T v = static_cast<T>(sh::kC0) * static_cast<T>(g.sh_dc[c]);
        if (degree > 0) {
            const T c1 = static_cast<T>(sh::kC1);
            v = v - c1 * y * k(1) + c1 * z * k(2) - c1 * x * k(3);
            if (degree > 1) {
                const T xx = x * x, yy = y * y, zz = z * z;
                const T xy = x * y, yz = y * z, xz = x * z;
                v = v + static_cast<T>(sh::kC2[0]) * xy * k(4) + static_cast<T>(sh::kC2[1]) * yz * k(5) +
                    static_cast<T>(sh::kC2[2]) * (T(2) * zz - xx - yy) * k(6) +
                    static_cast<T>(sh::kC2[3]) * xz * k(7) + static_cast<T>(sh::kC2[4]) * (xx - yy) * k(8);
                if (degree > 2) {
                    v = v + static_cast<T>(sh::kC3[0]) * y * (T(3) * xx - yy) * k(9) +
                        static_cast<T>(sh::kC3[1]) * xy * z * k(10) +
                        static_cast<T>(sh::kC3[2]) * y * (T(4) * zz - xx - yy) * k(11) +
                        static_cast<T>(sh::kC3[3]) * z * (T(2) * zz - T(3) * xx - T(3) * yy) * k(12) +
                        static_cast<T>(sh::kC3[4]) * x * (T(4) * zz - xx - yy) * k(13) +
                        static_cast<T>(sh::kC3[5]) * z * (xx - yy) * k(14) +
                        static_cast<T>(sh::kC3[6]) * x * (xx - T(3) * yy) * k(15);
                }
            }
        }
        v += T(0.5);
        out[c] = std::max(v, T(0));
    }
    return out;
}

/// Rotation matrix of a (not necessarily normalized) quaternion w, x, y, z.
template <typename T>
Mat3<T> quaternion_to_rotation(const std::array<float, 4>& q) {
    T w = q[0], x = q[1], y = q[2], z = q[3];
    const T n = std::sqrt(w * w + x * x + y * y + z * z);
    if (n > T(0)) {
        w /= n;
        x /= n;
        y /= n;
        z /= n;
    } else {
        w = T(1);
    }
    return {{T(1) - T(2) * (y * y + z * z), T(2) * (x * y - w * z), T(2) * (x * z + w * y),
             T(2) * (x * y + w * z), T(1) - T(2) * (x * x + z * z), T(2) * (y * z - w * x),
             T(2) * (x * z - w * y), T(2) * (y * z + w * x), T(1) - T(2) * (x * x + y * y)}};
}

/// World-space covariance R diag(exp(s))^2 R^T.
template <typename T>
Mat3<T> world_covariance(const Gaussian& g) {
    const Mat3<T> r = quaternion_to_rotation<T>(g.rotation);
    const Vec3<T> s = g.scale<T>();
    Mat3<T> rs = r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rs(i, j) = r(i, j) * s[static_cast<std::size_t>(j)];
    return rs * rs.transposed();
}

/// Symmetric 2x2 matrix [[xx, xy], [xy, yy]].
template <typename T>
struct Sym2 {
    T xx{}, xy{}, yy{};
    T det() const { return xx * yy - xy * xy; }
};

/// Screen-space covariance J W Sigma W^T J^T of a Gaussian whose center sits at
/// view-space point `p`, before the low-pass floor.
template <typename T>
Sym2<T> screen_covariance(const Mat3<T>& sigma_world, const Mat3<T>& w, const Vec3<T>& p, T fx, T fy) {
    const T iz = T(1) / p.z;
    // Rows of the 2x3 perspective Jacobian.
    const Vec3<T> j0{fx * iz, T(0), -fx * p.x * iz * iz};
    const Vec3<T> j1{T(0), fy * iz, -fy * p.y * iz * iz};
    const Mat3<T> sigma_view = w * sigma_world * w.transposed();
    const Vec3<T> s0 = sigma_view * j0;
    const Vec3<T> s1 = sigma_view * j1;
    return {dot(j0, s0), dot(j0, s1), dot(j1, s1)};
}

inline constexpr double kNearPlane = 0.2;
inline constexpr double kLowPassFloor = 0.3;

template <typename T>
struct ProjectedGaussian {
    GaussianId id = 0;
    T mean_x{}, mean_y{};  // pixels
    Sym2<T> cov;           // pixels^2, low-pass floor included
    Sym2<T> conic;         // inverse of cov
    T depth{};             // view-space z
    Vec3<T> color;
    T opacity{};
    int radius = 0;  // 3-sigma extent in pixels
};

/// Projects every visible Gaussian into `view`. Gaussians behind the near
/// plane, with degenerate screen covariance, or whose 3-sigma box lies fully
/// off-screen are dropped. Output is in id order.
template <typename T>
std::vector<ProjectedGaussian<T>> project(const GaussianScene& scene, const CameraView& view, int sh_degree) {
    if (sh_degree < 0 || sh_degree > kMaxShDegree)
        throw InputError("project: sh_degree must be in [0, 3], got " + std::to_string(sh_degree));
    const Mat3<T> w = view.rotation<T>();
    const Vec3<T> t = view.translation<T>();
    const Vec3<T> cam = view.center<T>();
    const T fx = static_cast<T>(view.fx), fy = static_cast<T>(view.fy);
    const T cx = static_cast<T>(view.cx), cy = static_cast<T>(view.cy);

    std::vector<ProjectedGaussian<T>> out;
    out.reserve(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Gaussian& g = scene.gaussians[i];
        const Vec3<T> pw{static_cast<T>(g.position[0]), static_cast<T>(g.position[1]),
                         static_cast<T>(g.position[2])};
        const Vec3<T> p = w * pw + t;
        if (!(p.z > static_cast<T>(kNearPlane))) continue;

        Sym2<T> cov = screen_covariance(world_covariance<T>(g), w, p, fx, fy);
        cov.xx += static_cast<T>(kLowPassFloor);
        cov.yy += static_cast<T>(kLowPassFloor);
        const T det = cov.det();
        if (!(det > T(0)) || !std::isfinite(det)) continue;

        ProjectedGaussian<T> pg;
        pg.id = static_cast<GaussianId>(i);
        pg.mean_x = fx * p.x / p.z + cx;
        pg.mean_y = fy * p.y / p.z + cy;
        pg.cov = cov;
        pg.conic = {cov.yy / det, -cov.xy / det, cov.xx / det};
        pg.depth = p.z;

        const T mid = T(0.5) * (cov.xx + cov.yy);
        const T lambda = mid + std::sqrt(std::max(T(0.1), mid * mid - det));
        const double r = std::ceil(3.0 * std::sqrt(static_cast<double>(lambda)));
        if (!(r < 1e6)) continue;
        pg.radius = static_cast<int>(r);
        // 3-sigma box fully outside [0, width] x [0, height] means no pixel center is covered.
        if (pg.mean_x + T(pg.radius) < T(0) || pg.mean_x - T(pg.radius) > T(view.width) ||
            pg.mean_y + T(pg.radius) < T(0) || pg.mean_y - T(pg.radius) > T(view.height))
            continue;

        pg.color = eval_sh_color<T>(g, scene.sh_degree, sh_degree, normalized(pw - cam));
        pg.opacity = g.opacity<T>();
        out.push_back(pg);
    }
    return out;
}

}  // namespace gspop
