#ifndef TA_GLTF_HPP
#define TA_GLTF_HPP

// Binary glTF 2.0 (GLB) and Wavefront OBJ output for tagged meshes.
// glTF is Y-up: local (x, y, z) is written as (x, z, -y).

#include "ta/error.hpp"
#include "ta/reconstruct.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace ta {

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

inline std::uint32_t get_u32(const std::string& s, std::size_t at) {
    if (at + 4 > s.size()) throw ParseError("truncated GLB", s.size());
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(s[at + k]);
    return v;
}

inline std::array<float, 4> kind_color(const std::string& kind) {
    static const std::map<std::string, std::array<float, 4>> colors{
        {"extrusion", {0.82f, 0.78f, 0.70f, 1.0f}}, {"window", {0.35f, 0.50f, 0.65f, 1.0f}},
        {"window_sill", {0.65f, 0.62f, 0.58f, 1.0f}}, {"cornice", {0.70f, 0.66f, 0.60f, 1.0f}},
        {"roof_cornice", {0.55f, 0.50f, 0.45f, 1.0f}}, {"storefront", {0.30f, 0.42f, 0.50f, 1.0f}},
        {"entry", {0.45f, 0.32f, 0.22f, 1.0f}},       {"stair", {0.60f, 0.60f, 0.60f, 1.0f}},
    };
    const auto it = colors.find(kind);
    return it == colors.end() ? std::array<float, 4>{0.8f, 0.8f, 0.8f, 1.0f} : it->second;
}

} // namespace detail

/// One primitive per component tag, one material per kind. Output is byte-deterministic.
inline std::string to_glb(const Mesh& m) {
    validate_mesh(m);
    if (m.vertices.empty() || m.triangles.empty()) throw ValidationError("cannot export an empty mesh");
    std::vector<ComponentTag> tags = m.tags;
    if (tags.empty()) tags.push_back({"mesh", 0, static_cast<std::uint32_t>(m.triangles.size())});

    std::string bin;
    float lo[3], hi[3];
    for (int k = 0; k < 3; ++k) {
        lo[k] = std::numeric_limits<float>::infinity();
        hi[k] = -std::numeric_limits<float>::infinity();
    }
    for (const Vec3& v : m.vertices) {
        const float p[3]{static_cast<float>(v.x), static_cast<float>(v.z), static_cast<float>(-v.y)};
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], p[k]);
            hi[k] = std::max(hi[k], p[k]);
            std::uint32_t bits;
            std::memcpy(&bits, &p[k], 4);
            detail::put_u32(bin, bits);
        }
    }
    const std::size_t pos_bytes = bin.size();
    for (const Tri& t : m.triangles) {
        for (const auto i : t) detail::put_u32(bin, i);
    }
    const std::size_t idx_bytes = bin.size() - pos_bytes;

    using nlohmann::json;
    json accessors = json::array(), primitives = json::array(), materials = json::array();
    accessors.push_back({{"bufferView", 0},
                         {"componentType", 5126},
                         {"count", m.vertices.size()},
                         {"type", "VEC3"},
                         {"min", {lo[0], lo[1], lo[2]}},
                         {"max", {hi[0], hi[1], hi[2]}}});
    std::map<std::string, std::size_t> material_of;
    for (const auto& tag : tags) {
        if (tag.count == 0) continue;
        auto [it, fresh] = material_of.try_emplace(tag.kind, materials.size());
        if (fresh) {
            const auto c = detail::kind_color(tag.kind);
            materials.push_back({{"name", tag.kind},
                                 {"pbrMetallicRoughness",
                                  {{"baseColorFactor", {c[0], c[1], c[2], c[3]}},
                                   {"metallicFactor", 0.0},
                                   {"roughnessFactor", 1.0}}}});
        }
        primitives.push_back({{"attributes", {{"POSITION", 0}}},
                              {"indices", accessors.size()},
                              {"material", it->second},
                              {"mode", 4},
                              {"extras", {{"kind", tag.kind}}}});
        accessors.push_back({{"bufferView", 1},
                             {"byteOffset", std::size_t{tag.first} * 12},
                             {"componentType", 5125},
                             {"count", std::size_t{tag.count} * 3},
                             {"type", "SCALAR"}});
    }
    const json doc{
        {"asset", {{"version", "2.0"}, {"generator", "ta"}, {"extras", {{"merc_x", m.anchor.x}, {"merc_y", m.anchor.y}}}}},
        {"scene", 0},
        {"scenes", {{{"nodes", {0}}}}},
        {"nodes", {{{"mesh", 0}}}},
        {"meshes", {{{"name", "building"}, {"primitives", primitives}}}},
        {"materials", materials},
        {"accessors", accessors},
        {"bufferViews",
         {{{"buffer", 0}, {"byteOffset", 0}, {"byteLength", pos_bytes}, {"target", 34962}},
          {{"buffer", 0}, {"byteOffset", pos_bytes}, {"byteLength", idx_bytes}, {"target", 34963}}}},
        {"buffers", {{{"byteLength", bin.size()}}}},
    };
    std::string js = doc.dump();
    while (js.size() % 4) js.push_back(' ');
    while (bin.size() % 4) bin.push_back('\0');

    std::string out;
    detail::put_u32(out, 0x46546C67); // "glTF"
    detail::put_u32(out, 2);
    detail::put_u32(out, static_cast<std::uint32_t>(12 + 8 + js.size() + 8 + bin.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(js.size()));
    detail::put_u32(out, 0x4E4F534A); // "JSON"
    out += js;
    detail::put_u32(out, static_cast<std::uint32_t>(bin.size()));
    detail::put_u32(out, 0x004E4942); // "BIN\0"
    out += bin;
    return out;
}

/// Reads a GLB back into local Z-up coordinates. Triangle-list primitives only.
inline Mesh from_glb(const std::string& data) {
    using nlohmann::json;
    if (data.size() < 20) throw ParseError("GLB shorter than its header", data.size());
    if (detail::get_u32(data, 0) != 0x46546C67) throw ParseError("missing glTF magic", 0);
    if (detail::get_u32(data, 4) != 2) throw ParseError("unsupported glTF container version", 4);
    const std::uint32_t total = detail::get_u32(data, 8);
    if (total > data.size() || total < 20) throw ParseError("GLB length field disagrees with the data", 8);
    const std::uint32_t json_len = detail::get_u32(data, 12);
    if (detail::get_u32(data, 16) != 0x4E4F534A) throw ParseError("first GLB chunk is not JSON", 16);
    if (std::size_t{json_len} + 20 > total) throw ParseError("JSON chunk overruns the file", 12);
    json doc;
    try {
        doc = json::parse(data.substr(20, json_len));
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid glTF JSON: ") + e.what(), 20);
    }
    std::string bin;
    const std::size_t bin_at = 20 + std::size_t{json_len};
    if (bin_at + 8 <= total) {
        const std::uint32_t len = detail::get_u32(data, bin_at);
        if (detail::get_u32(data, bin_at + 4) != 0x004E4942) throw ParseError("second GLB chunk is not BIN", bin_at + 4);
        if (bin_at + 8 + std::size_t{len} > total) throw ParseError("BIN chunk overruns the file", bin_at);
        bin = data.substr(bin_at + 8, len);
    }

    Mesh m;
    try {
        if (doc.contains("asset") && doc["asset"].contains("extras")) {
            const auto& ex = doc["asset"]["extras"];
            m.anchor = {ex.value("merc_x", 0.0), ex.value("merc_y", 0.0)};
        }
        const auto& views = doc.at("bufferViews");
        const auto& accs = doc.at("accessors");
        // Returns the byte span of accessor `a` after bounds checks.
        auto span_of = [&](std::size_t a, std::size_t elem_bytes, std::size_t& count) {
            const auto& acc = accs.at(a);
            count = acc.at("count").get<std::size_t>();
            const auto& view = views.at(acc.at("bufferView").get<std::size_t>());
            if (view.value("buffer", 0) != 0) throw ParseError("only the GLB buffer is supported", 0);
            if (view.contains("byteStride") && view["byteStride"].get<std::size_t>() != elem_bytes) {
                throw ParseError("interleaved buffer views are not supported", 0);
            }
            const std::size_t off = view.value("byteOffset", std::size_t{0}) + acc.value("byteOffset", std::size_t{0});
            const std::size_t view_end = view.value("byteOffset", std::size_t{0}) + view.at("byteLength").get<std::size_t>();
            if (count > bin.size() || off + count * elem_bytes > view_end || view_end > bin.size()) {
                throw ParseError("accessor " + std::to_string(a) + " overruns its buffer", bin_at);
            }
            return off;
        };
        std::map<std::size_t, std::uint32_t> base_of;
        const auto& mesh = doc.at("meshes").at(0);
        for (const auto& prim : mesh.at("primitives")) {
            if (prim.value("mode", 4) != 4) throw ParseError("only triangle lists are supported", 0);
            const auto pa = prim.at("attributes").at("POSITION").get<std::size_t>();
            if (!base_of.count(pa)) {
                const auto& acc = accs.at(pa);
                if (acc.at("componentType").get<int>() != 5126 || acc.at("type").get<std::string>() != "VEC3") {
                    throw ParseError("POSITION must be float VEC3", 0);
                }
                std::size_t n = 0;
                const std::size_t off = span_of(pa, 12, n);
                base_of[pa] = static_cast<std::uint32_t>(m.vertices.size());
                for (std::size_t i = 0; i < n; ++i) {
                    float p[3];
                    std::memcpy(p, bin.data() + off + 12 * i, 12);
                    m.vertices.push_back({p[0], -static_cast<double>(p[2]), p[1]});
                }
            }
            const std::uint32_t base = base_of[pa];
            std::size_t nv = 0;
            span_of(pa, 12, nv);
            const auto first = static_cast<std::uint32_t>(m.triangles.size());
            std::vector<std::uint32_t> idx;
            if (prim.contains("indices")) {
                const auto ia = prim["indices"].get<std::size_t>();
                const int ct = accs.at(ia).at("componentType").get<int>();
                const std::size_t w = ct == 5121 ? 1 : ct == 5123 ? 2 : ct == 5125 ? 4 : 0;
                if (w == 0) throw ParseError("unsupported index component type", 0);
                std::size_t n = 0;
                const std::size_t off = span_of(ia, w, n);
                for (std::size_t i = 0; i < n; ++i) {
                    std::uint32_t v = 0;
                    for (std::size_t b = 0; b < w; ++b) {
                        v |= std::uint32_t{static_cast<unsigned char>(bin[off + i * w + b])} << (8 * b);
                    }
                    idx.push_back(v);
                }
            } else {
                for (std::size_t i = 0; i < nv; ++i) idx.push_back(static_cast<std::uint32_t>(i));
            }
            if (idx.size() % 3) throw ParseError("index count is not a multiple of 3", 0);
            for (std::size_t i = 0; i < idx.size(); i += 3) {
                for (std::size_t k = 0; k < 3; ++k) {
                    if (idx[i + k] >= nv) throw ParseError("vertex index out of range", 0);
                }
                m.triangles.push_back({base + idx[i], base + idx[i + 1], base + idx[i + 2]});
            }
            std::string kind = "mesh";
            if (prim.contains("extras") && prim["extras"].contains("kind")) kind = prim["extras"]["kind"].get<std::string>();
            m.tags.push_back({kind, first, static_cast<std::uint32_t>(m.triangles.size() - first)});
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed glTF document: ") + e.what(), 20);
    }
    if (m.triangles.empty()) throw ParseError("glTF has no triangles", 0);
    return m;
}

/// Wavefront OBJ in the same Y-up convention, one group per component tag.
inline std::string to_obj(const Mesh& m) {
    validate_mesh(m);
    std::ostringstream out;
    out.precision(17);
    out << "# anchor " << m.anchor.x << ' ' << m.anchor.y << '\n';
    for (const Vec3& v : m.vertices) out << "v " << v.x << ' ' << v.z << ' ' << -v.y << '\n';
    std::vector<ComponentTag> tags = m.tags;
    if (tags.empty()) tags.push_back({"mesh", 0, static_cast<std::uint32_t>(m.triangles.size())});
    for (std::size_t k = 0; k < tags.size(); ++k) {
        out << "g " << tags[k].kind << '_' << k << '\n';
        for (std::uint32_t i = tags[k].first; i < tags[k].first + tags[k].count; ++i) {
            const Tri& t = m.triangles[i];
            out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
        }
    }
    return out.str();
}

} // namespace ta

#endif
