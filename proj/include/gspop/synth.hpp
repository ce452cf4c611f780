// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic scenes for tests and acceptance runs.
//
// All randomness comes from SplitMix64 (see core.hpp), consumed in a fixed
// order, so a spec always yields the same scene bytes. Cameras sit on an arc
// of radius `camera_distance` around the origin in the y = 0 plane, spread
// evenly over [-orbit_degrees, +orbit_degrees] of azimuth, all looking at the
// origin along +z when the azimuth is zero.
//
#pragma once

#include <gspop/camera.hpp>
#include <gspop/core.hpp>
#include <gspop/model.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace gspop {

enum class SynthMode { random, layered, wall_occluder, coincident_pairs };

inline std::string to_string(SynthMode m) {
    switch (m) {
        case SynthMode::random: return "random";
        case SynthMode::layered: return "layered";
        case SynthMode::wall_occluder: return "wall-occluder";
        case SynthMode::coincident_pairs: return "coincident-pairs";
    }
    return "random";
}

inline SynthMode parse_synth_mode(const std::string& s) {
    if (s == "random") return SynthMode::random;
    if (s == "layered") return SynthMode::layered;
    if (s == "wall-occluder") return SynthMode::wall_occluder;
    if (s == "coincident-pairs") return SynthMode::coincident_pairs;
    throw InputError("unknown synth mode '" + s + "' (random, layered, wall-occluder, coincident-pairs)");
}

struct SynthSpec {
    std::uint64_t seed = 0;
    std::size_t count = 50;
    SynthMode mode = SynthMode::layered;
    double extent = 1.0;  // Gaussians live in [-extent, extent]^3
    double opacity_min = 0.1, opacity_max = 0.5;  // activated
    double scale_min = 0.1, scale_max = 0.35;     // activated, world units
    int sh_degree = 3;
    double sh_rest_amplitude = 0.05;
    int layers = 5;  // layered mode
    int view_count = 3;
    int width = 64, height = 64;
    double fov_degrees = 50.0;
    double camera_distance = 4.0;
    double orbit_degrees = 10.0;

    void validate() const {
        if (count < 1) throw InputError("synth: count must be >= 1");
        if (mode == SynthMode::wall_occluder && count < 4)
            throw InputError("synth: wall-occluder mode needs count >= 4 (3 wall Gaussians + hidden ones)");
        if (!(opacity_min > 0 && opacity_min <= opacity_max && opacity_max < 1))
            throw InputError("synth: need 0 < opacity_min <= opacity_max < 1");
        if (!(scale_min > 0 && scale_min <= scale_max)) throw InputError("synth: need 0 < scale_min <= scale_max");
        if (sh_degree < 0 || sh_degree > kMaxShDegree) throw InputError("synth: sh_degree must be in [0, 3]");
        if (view_count < 1 || width < 1 || height < 1) throw InputError("synth: need >= 1 view of >= 1x1 pixels");
        if (layers < 1) throw InputError("synth: layers must be >= 1");
        if (!(extent > 0) || !(camera_distance > extent)) throw InputError("synth: need 0 < extent < camera_distance");
        if (!(fov_degrees > 0 && fov_degrees < 180)) throw InputError("synth: fov_degrees must be in (0, 180)");
    }
};

struct SynthScene {
    GaussianScene scene;
    ViewSet views;
    std::vector<GaussianId> hidden;  // wall-occluder mode: ids placed behind the wall
};

/// Camera at `eye` looking at `target`, OpenCV axes, world +y is image down.
inline CameraView look_at(const std::string& name, const Vec3<double>& eye, const Vec3<double>& target, int width,
                          int height, double fov_degrees) {
    const Vec3<double> f = normalized(target - eye);
    const Vec3<double> right = normalized(cross(Vec3<double>{0, 1, 0}, f));
    const Vec3<double> down = cross(f, right);
    CameraView v;
    v.name = name;
    v.width = width;
    v.height = height;
    v.fx = v.fy = 0.5 * width / std::tan(0.5 * fov_degrees * std::numbers::pi / 180.0);
    v.cx = 0.5 * width;
    v.cy = 0.5 * height;
    const Vec3<double> rows[3] = {right, down, f};
    for (int r = 0; r < 3; ++r) {
        v.world_to_camera[static_cast<std::size_t>(4 * r + 0)] = rows[r].x;
        v.world_to_camera[static_cast<std::size_t>(4 * r + 1)] = rows[r].y;
        v.world_to_camera[static_cast<std::size_t>(4 * r + 2)] = rows[r].z;
        v.world_to_camera[static_cast<std::size_t>(4 * r + 3)] = -dot(rows[r], eye);
    }
    v.world_to_camera[12] = v.world_to_camera[13] = v.world_to_camera[14] = 0;
    v.world_to_camera[15] = 1;
    return v;
}

namespace synth_detail {

inline float logit(double p) { return static_cast<float>(std::log(p / (1.0 - p))); }

struct Builder {
    const SynthSpec& spec;
    SplitMix64 rng;

    void color(Gaussian& g) {
        for (std::size_t c = 0; c < 3; ++c) g.sh_dc[c] = static_cast<float>((rng.uniform() - 0.5) / sh::kC0);
        const int rest = sh_rest_count(spec.sh_degree);
        for (int i = 0; i < rest; ++i)
            g.sh_rest[static_cast<std::size_t>(i)] = static_cast<float>(rng.uniform(-1, 1) * spec.sh_rest_amplitude);
    }

    void opacity(Gaussian& g) { g.opacity_logit = logit(rng.uniform(spec.opacity_min, spec.opacity_max)); }

    float log_scale() { return static_cast<float>(std::log(rng.uniform(spec.scale_min, spec.scale_max))); }

    // Uniform random rotation (Shoemake).
    void random_rotation(Gaussian& g) {
        const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
        const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
        const double t2 = 2 * std::numbers::pi * u2, t3 = 2 * std::numbers::pi * u3;
        g.rotation = {static_cast<float>(b * std::cos(t3)), static_cast<float>(a * std::sin(t2)),
                      static_cast<float>(a * std::cos(t2)), static_cast<float>(b * std::sin(t3))};
    }

    // Rotation about the z axis only, so discs stay parallel to the image plane.
    void spin_z(Gaussian& g) {
        const double angle = rng.uniform(0, std::numbers::pi);
        g.rotation = {static_cast<float>(std::cos(0.5 * angle)), 0.0f, 0.0f, static_cast<float>(std::sin(0.5 * angle))};
    }

    Gaussian random_gaussian() {
        Gaussian g;
        for (auto& p : g.position) p = static_cast<float>(rng.uniform(-spec.extent, spec.extent));
        for (auto& s : g.log_scale) s = log_scale();
        random_rotation(g);
        opacity(g);
        color(g);
        return g;
    }

    // A disc parallel to the image plane at depth z.
    Gaussian disc(double x, double y, double z) {
        Gaussian g;
        g.position = {static_cast<float>(x), static_cast<float>(y), static_cast<float>(z)};
        g.log_scale = {log_scale(), log_scale(), static_cast<float>(std::log(0.25 * spec.scale_min))};
        spin_z(g);
        opacity(g);
        color(g);
        return g;
    }
};

}  // namespace synth_detail

inline SynthScene generate(const SynthSpec& spec) {
    spec.validate();
    synth_detail::Builder b{spec, SplitMix64(spec.seed)};
    SynthScene out;
    out.scene.sh_degree = spec.sh_degree;
    auto& gs = out.scene.gaussians;
    const double e = spec.extent;

    switch (spec.mode) {
        case SynthMode::random:
            for (std::size_t i = 0; i < spec.count; ++i) gs.push_back(b.random_gaussian());
            break;
        case SynthMode::layered: {
            // Layers front to back; the first disc of every layer sits near the
            // optical axis so the image center always sees several layers.
            const auto layers = static_cast<std::size_t>(std::min<std::size_t>(spec.count, static_cast<std::size_t>(spec.layers)));
            for (std::size_t i = 0; i < spec.count; ++i) {
                const std::size_t layer = i % layers;
                const double z = layers == 1 ? 0.0 : -e + 2 * e * static_cast<double>(layer) / static_cast<double>(layers - 1);
                const bool anchor = i < layers;
                const double r = anchor ? 0.05 * e : 0.8 * e;
                const double x = b.rng.uniform(-r, r), y = b.rng.uniform(-r, r);
                gs.push_back(b.disc(x, y, z));
            }
            break;
        }
        case SynthMode::wall_occluder: {
            // Three near-opaque, very wide walls around z = 0; every pixel of every
            // camera reaches the transmittance floor inside the wall.
            for (int w = 0; w < 3; ++w) {
                Gaussian g;
                g.position = {0.0f, 0.0f, static_cast<float>(0.02 * w * e)};
                g.log_scale = {static_cast<float>(std::log(40.0 * e)), static_cast<float>(std::log(40.0 * e)),
                               static_cast<float>(std::log(0.01 * e))};
                g.opacity_logit = 20.0f;
                b.color(g);
                gs.push_back(g);
            }
            // Remaining Gaussians alternate between behind the wall (hidden) and
            // in front of it (visible).
            for (std::size_t i = 3; i < spec.count; ++i) {
                Gaussian g = b.random_gaussian();
                const bool hidden = (i - 3) % 2 == 0;
                g.position[0] = static_cast<float>(b.rng.uniform(-0.5 * e, 0.5 * e));
                g.position[1] = static_cast<float>(b.rng.uniform(-0.5 * e, 0.5 * e));
                g.position[2] = static_cast<float>(hidden ? b.rng.uniform(0.4 * e, e) : b.rng.uniform(-e, -0.4 * e));
                for (auto& s : g.log_scale) s = std::min(s, static_cast<float>(std::log(0.1 * e)));
                if (hidden) out.hidden.push_back(static_cast<GaussianId>(gs.size()));
                gs.push_back(g);
            }
            break;
        }
        case SynthMode::coincident_pairs:
            while (gs.size() < spec.count) {
                const Gaussian g = b.random_gaussian();
                gs.push_back(g);
                if (gs.size() < spec.count) gs.push_back(g);
            }
            break;
    }

    for (int i = 0; i < spec.view_count; ++i) {
        const double t = spec.view_count == 1 ? 0.0 : -1.0 + 2.0 * i / (spec.view_count - 1);
        const double az = t * spec.orbit_degrees * std::numbers::pi / 180.0;
        const Vec3<double> eye{spec.camera_distance * std::sin(az), 0.0, -spec.camera_distance * std::cos(az)};
        out.views.push_back(look_at("view_" + std::to_string(i), eye, {0, 0, 0}, spec.width, spec.height, spec.fov_degrees));
    }
    return out;
}

inline nlohmann::json to_json(const SynthSpec& s) {
    return {{"seed", s.seed},
            {"count", s.count},
            {"mode", to_string(s.mode)},
            {"extent", s.extent},
            {"opacity_min", s.opacity_min},
            {"opacity_max", s.opacity_max},
            {"scale_min", s.scale_min},
            {"scale_max", s.scale_max},
            {"sh_degree", s.sh_degree},
            {"sh_rest_amplitude", s.sh_rest_amplitude},
            {"layers", s.layers},
            {"view_count", s.view_count},
            {"width", s.width},
            {"height", s.height},
            {"fov_degrees", s.fov_degrees},
            {"camera_distance", s.camera_distance},
            {"orbit_degrees", s.orbit_degrees}};
}

/// Reads a spec; absent keys keep their defaults.
inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InputError("synth spec must be a JSON object");
    SynthSpec s;
    try {
        s.seed = j.value("seed", s.seed);
        s.count = j.value("count", s.count);
        if (j.contains("mode")) s.mode = parse_synth_mode(j.at("mode").get<std::string>());
        s.extent = j.value("extent", s.extent);
        s.opacity_min = j.value("opacity_min", s.opacity_min);
        s.opacity_max = j.value("opacity_max", s.opacity_max);
        s.scale_min = j.value("scale_min", s.scale_min);
        s.scale_max = j.value("scale_max", s.scale_max);
        s.sh_degree = j.value("sh_degree", s.sh_degree);
        s.sh_rest_amplitude = j.value("sh_rest_amplitude", s.sh_rest_amplitude);
        s.layers = j.value("layers", s.layers);
        s.view_count = j.value("view_count", s.view_count);
        s.width = j.value("width", s.width);
        s.height = j.value("height", s.height);
        s.fov_degrees = j.value("fov_degrees", s.fov_degrees);
        s.camera_distance = j.value("camera_distance", s.camera_distance);
        s.orbit_degrees = j.value("orbit_degrees", s.orbit_degrees);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("synth spec: ") + e.what());
    }
    s.validate();
    return s;
}

}  // namespace gspop
