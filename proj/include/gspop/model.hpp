// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <gspop/core.hpp>

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace gspop {

inline constexpr int kMaxShDegree = 3;
inline constexpr int kMaxShRest = 45;

/// Number of f_rest coefficients stored for a given SH degree (all channels).
constexpr int sh_rest_count(int degree) { return 3 * ((degree + 1) * (degree + 1) - 1); }

/// One 3D Gaussian in raw 3DGS parameterization. Attributes are stored exactly
/// as they appear in the PLY file; activations are applied by the accessors.
struct Gaussian {
    std::array<float, 3> position{};
    std::array<float, 3> normal{};  // carried through the codec, never used
    std::array<float, 3> sh_dc{};
    // Channel-major, as in the PLY: [R coeffs..., G coeffs..., B coeffs...].
    std::array<float, kMaxShRest> sh_rest{};
    float opacity_logit = 0.0f;
    std::array<float, 3> log_scale{};
    std::array<float, 4> rotation{1.0f, 0.0f, 0.0f, 0.0f};  // w, x, y, z

    template <typename T = double>
    T opacity() const {
        return T(1) / (T(1) + std::exp(-static_cast<T>(opacity_logit)));
    }

    template <typename T = double>
    Vec3<T> scale() const {
        return {std::exp(static_cast<T>(log_scale[0])), std::exp(static_cast<T>(log_scale[1])),
                std::exp(static_cast<T>(log_scale[2]))};
    }

    friend bool operator==(const Gaussian&, const Gaussian&) = default;
};

/// The ordered set of Gaussians. A Gaussian's id is its index.
struct GaussianScene {
    std::vector<Gaussian> gaussians;
    int sh_degree = kMaxShDegree;
    bool has_normals = true;  // written to PLY as nx ny nz

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }
    const Gaussian& operator[](GaussianId id) const { return gaussians[id]; }
};

inline constexpr GaussianId kRemovedId = std::numeric_limits<GaussianId>::max();

struct SubsetResult {
    GaussianScene scene;
    /// old id -> new id, or kRemovedId for dropped Gaussians.
    std::vector<GaussianId> new_id;
};

/// Keeps exactly the listed ids in their original relative order and assigns
/// new dense ids. Duplicate ids in `keep` are ignored.
inline SubsetResult subset(const GaussianScene& scene, std::span<const GaussianId> keep) {
    std::vector<char> kept(scene.size(), 0);
    for (const GaussianId id : keep) {
        if (id >= scene.size())
            throw InputError("subset: unknown gaussian id " + std::to_string(id) + " (scene has " +
                             std::to_string(scene.size()) + ")");
        kept[id] = 1;
    }
    SubsetResult out;
    out.scene.sh_degree = scene.sh_degree;
    out.scene.has_normals = scene.has_normals;
    out.new_id.assign(scene.size(), kRemovedId);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (!kept[i]) continue;
        out.new_id[i] = static_cast<GaussianId>(out.scene.gaussians.size());
        out.scene.gaussians.push_back(scene.gaussians[i]);
    }
    if (out.scene.empty()) throw InputError("subset: result would be an empty scene");
    return out;
}

/// Convenience: every id except those listed.
inline SubsetResult remove_ids(const GaussianScene& scene, std::span<const GaussianId> removed) {
    std::vector<char> drop(scene.size(), 0);
    for (const GaussianId id : removed) {
        if (id >= scene.size()) throw InputError("remove_ids: unknown gaussian id " + std::to_string(id));
        drop[id] = 1;
    }
    std::vector<GaussianId> keep;
    keep.reserve(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i)
        if (!drop[i]) keep.push_back(static_cast<GaussianId>(i));
    return subset(scene, keep);
}

}  // namespace gspop
