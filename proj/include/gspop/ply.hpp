// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
// Binary little-endian PLY codec for 3DGS scenes.
//
// Canonical vertex layout (all float32, in this order):
//   x y z nx ny nz f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3
// Files with SH degree 0, 1 or 2 (0, 9 or 24 f_rest properties) are accepted
// and written back with the same degree. Normals may be absent on input; they
// are always written.
//
#pragma once

#include <gspop/model.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace gspop {

static_assert(std::endian::native == std::endian::little, "PLY codec assumes a little-endian host");

/// Malformed or unsupported PLY input. `offset` is the byte position at which
/// the problem was detected.
class PlyError : public InputError {
public:
    PlyError(const std::string& what, std::size_t offset)
        : InputError(what + " (at byte " + std::to_string(offset) + ")"), detail_(what), offset_(offset) {}

    std::size_t offset() const { return offset_; }
    const std::string& detail() const { return detail_; }

private:
    std::string detail_;
    std::size_t offset_;
};

namespace ply_detail {

inline std::vector<std::string> property_names(int sh_degree, bool with_normals = true) {
    std::vector<std::string> names{"x", "y", "z"};
    if (with_normals) names.insert(names.end(), {"nx", "ny", "nz"});
    names.insert(names.end(), {"f_dc_0", "f_dc_1", "f_dc_2"});
    for (int i = 0; i < sh_rest_count(sh_degree); ++i) names.push_back("f_rest_" + std::to_string(i));
    names.push_back("opacity");
    names.insert(names.end(), {"scale_0", "scale_1", "scale_2"});
    names.insert(names.end(), {"rot_0", "rot_1", "rot_2", "rot_3"});
    return names;
}

// Pointer to the float field that backs a canonical property name.
template <typename G>
auto field(G& g, std::string_view name) -> decltype(&g.opacity_logit) {
    auto idx = [&](std::string_view prefix) -> std::optional<int> {
        if (name.substr(0, prefix.size()) != prefix) return std::nullopt;
        const std::string_view rest = name.substr(prefix.size());
        if (rest.empty() || rest.size() > 2) return std::nullopt;
        int v = 0;
        for (char c : rest) {
            if (c < '0' || c > '9') return std::nullopt;
            v = v * 10 + (c - '0');
        }
        return v;
    };
    if (name == "x") return &g.position[0];
    if (name == "y") return &g.position[1];
    if (name == "z") return &g.position[2];
    if (name == "nx") return &g.normal[0];
    if (name == "ny") return &g.normal[1];
    if (name == "nz") return &g.normal[2];
    if (name == "opacity") return &g.opacity_logit;
    if (auto i = idx("f_dc_"); i && *i < 3) return &g.sh_dc[*i];
    if (auto i = idx("f_rest_"); i && *i < kMaxShRest) return &g.sh_rest[*i];
    if (auto i = idx("scale_"); i && *i < 3) return &g.log_scale[*i];
    if (auto i = idx("rot_"); i && *i < 4) return &g.rotation[*i];
    return nullptr;
}

}  // namespace ply_detail

/// Parses an in-memory PLY file.
inline GaussianScene parse_ply(std::span<const char> bytes) {
    std::size_t pos = 0;
    auto next_line = [&]() -> std::pair<std::string_view, std::size_t> {
        const std::size_t start = pos;
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        if (pos >= bytes.size()) throw PlyError("unterminated PLY header", start);
        std::string_view line(bytes.data() + start, pos - start);
        ++pos;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        return {line, start};
    };
    auto split = [](std::string_view line) {
        std::vector<std::string> toks;
        std::istringstream in{std::string(line)};
        for (std::string t; in >> t;) toks.push_back(t);
        return toks;
    };

    if (auto [magic, at] = next_line(); magic != "ply") throw PlyError("missing 'ply' magic", at);

    bool have_format = false;
    std::optional<std::size_t> vertex_count;
    std::vector<std::string> props;
    std::map<std::string, std::size_t> seen;
    bool in_vertex = false;
    for (;;) {
        auto [line, at] = next_line();
        const auto toks = split(line);
        if (toks.empty()) continue;
        const std::string& kw = toks[0];
        if (kw == "end_header") break;
        if (kw == "comment" || kw == "obj_info") continue;
        if (kw == "format") {
            if (toks.size() != 3 || toks[1] != "binary_little_endian" || toks[2] != "1.0")
                throw PlyError("unsupported format '" + std::string(line) + "', expected binary_little_endian 1.0",
                               at);
            have_format = true;
        } else if (kw == "element") {
            if (toks.size() != 3) throw PlyError("malformed element line", at);
            if (toks[1] != "vertex") throw PlyError("unsupported element '" + toks[1] + "'", at);
            if (vertex_count) throw PlyError("duplicate vertex element", at);
            try {
                std::size_t used = 0;
                const unsigned long long n = std::stoull(toks[2], &used);
                if (used != toks[2].size()) throw std::invalid_argument("trailing");
                vertex_count = static_cast<std::size_t>(n);
            } catch (const std::exception&) {
                throw PlyError("malformed vertex count '" + toks[2] + "'", at);
            }
            in_vertex = true;
        } else if (kw == "property") {
            if (!in_vertex) throw PlyError("property outside of vertex element", at);
            if (toks.size() != 3) throw PlyError("malformed or list property '" + std::string(line) + "'", at);
            if (toks[1] != "float" && toks[1] != "float32")
                throw PlyError("property '" + toks[2] + "' has unsupported type '" + toks[1] + "'", at);
            Gaussian probe;
            if (ply_detail::field(probe, toks[2]) == nullptr)
                throw PlyError("unsupported property '" + toks[2] + "'", at);
            if (!seen.emplace(toks[2], props.size()).second)
                throw PlyError("duplicate property '" + toks[2] + "'", at);
            props.push_back(toks[2]);
        } else {
            throw PlyError("unexpected header keyword '" + kw + "'", at);
        }
    }
    const std::size_t header_end = pos;
    if (!have_format) throw PlyError("missing format line", header_end);
    if (!vertex_count) throw PlyError("missing vertex element", header_end);

    int rest = 0;
    while (seen.count("f_rest_" + std::to_string(rest))) ++rest;
    int degree = -1;
    for (int d = 0; d <= kMaxShDegree; ++d)
        if (sh_rest_count(d) == rest) degree = d;
    if (degree < 0)
        throw PlyError("f_rest properties must number 0, 9, 24 or 45 contiguous entries, found " +
                           std::to_string(rest),
                       header_end);
    const bool with_normals = seen.count("nx") || seen.count("ny") || seen.count("nz");
    for (const auto& name : ply_detail::property_names(degree, with_normals))
        if (!seen.count(name)) throw PlyError("missing required property '" + name + "'", header_end);
    if (props.size() != ply_detail::property_names(degree, with_normals).size())
        throw PlyError("unexpected extra f_rest properties", header_end);

    const std::size_t stride = props.size() * sizeof(float);
    const std::size_t available = bytes.size() - header_end;
    if (*vertex_count == 0) throw PlyError("vertex element is empty", header_end);
    if (*vertex_count > available / stride) {
        const std::size_t rows = available / stride;
        throw PlyError("truncated payload: header declares " + std::to_string(*vertex_count) + " vertices but only " +
                           std::to_string(rows) + " complete rows present",
                       bytes.size());
    }
    const std::size_t need = *vertex_count * stride;
    if (available > need) throw PlyError("trailing bytes after vertex payload", header_end + need);

    GaussianScene scene;
    scene.sh_degree = degree;
    scene.has_normals = with_normals;
    scene.gaussians.resize(*vertex_count);
    const char* row = bytes.data() + header_end;
    for (auto& g : scene.gaussians) {
        for (std::size_t p = 0; p < props.size(); ++p) std::memcpy(ply_detail::field(g, props[p]), row + 4 * p, 4);
        row += stride;
    }
    return scene;
}

/// Serializes a scene in the canonical layout; normals only if the scene has them.
inline std::string serialize_ply(const GaussianScene& scene) {
    if (scene.empty()) throw InputError("save_ply: refusing to write an empty scene");
    const auto names = ply_detail::property_names(scene.sh_degree, scene.has_normals);
    std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(scene.size()) + "\n";
    for (const auto& n : names) out += "property float " + n + "\n";
    out += "end_header\n";
    const std::size_t header = out.size();
    out.resize(header + scene.size() * names.size() * 4);
    char* dst = out.data() + header;
    for (const auto& g : scene.gaussians) {
        for (const auto& n : names) {
            std::memcpy(dst, ply_detail::field(g, n), 4);
            dst += 4;
        }
    }
    return out;
}

inline GaussianScene load_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open PLY file '" + path.string() + "'");
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse_ply(bytes);
    } catch (const PlyError& e) {
        throw PlyError(path.string() + ": " + e.detail(), e.offset());
    }
}

inline void save_ply(const GaussianScene& scene, const std::filesystem::path& path) {
    const std::string bytes = serialize_ply(scene);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace gspop
