#ifndef TA_RECONSTRUCT_HPP
#define TA_RECONSTRUCT_HPP

// Building meshes: footprint extrusion, procedural facade components and
// assembly into one tagged mesh.
//
// Mesh coordinates are local meters (x east, y north, z up) measured from a
// Mercator anchor at the footprint centroid. Local offsets are raw Mercator
// differences, so anchor + (x, y) is the absolute Mercator position.

#include "ta/error.hpp"
#include "ta/facade.hpp"
#include "ta/feature.hpp"
#include "ta/geo.hpp"
#include "ta/planar.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ta {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) { return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x}; }
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

using Tri = std::array<std::uint32_t, 3>;

/// A contiguous triangle range produced by one component.
struct ComponentTag {
    std::string kind;
    std::uint32_t first = 0;
    std::uint32_t count = 0;
    friend bool operator==(const ComponentTag&, const ComponentTag&) = default;
};

struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<Tri> triangles;
    std::vector<ComponentTag> tags;
    Vec2 anchor; // Mercator meters of the local origin

    bool empty() const { return triangles.empty(); }

    std::uint32_t add_vertex(Vec3 v) {
        vertices.push_back(v);
        return static_cast<std::uint32_t>(vertices.size() - 1);
    }

    /// Appends another mesh as one tagged component, transforming its vertices.
    template <class F>
    void append(const Mesh& other, const std::string& kind, F&& transform) {
        const auto base = static_cast<std::uint32_t>(vertices.size());
        const auto first = static_cast<std::uint32_t>(triangles.size());
        for (const Vec3& v : other.vertices) vertices.push_back(transform(v));
        for (const Tri& t : other.triangles) triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
        tags.push_back({kind, first, static_cast<std::uint32_t>(other.triangles.size())});
    }
    void append(const Mesh& other, const std::string& kind) {
        append(other, kind, [](Vec3 v) { return v; });
    }

    friend bool operator==(const Mesh&, const Mesh&) = default;
};

inline void validate_mesh(const Mesh& m) {
    for (const Vec3& v : m.vertices) {
        if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z)) {
            throw ValidationError("mesh vertex is not finite");
        }
    }
    for (const Tri& t : m.triangles) {
        for (const auto i : t) {
            if (i >= m.vertices.size()) throw ValidationError("triangle index out of range");
        }
    }
    std::uint32_t next = 0;
    for (const auto& tag : m.tags) {
        if (tag.first != next) throw ValidationError("component tags must cover the triangles contiguously");
        next += tag.count;
    }
    if (!m.tags.empty() && next != m.triangles.size()) {
        throw ValidationError("component tags must cover every triangle");
    }
}

/// Divergence-theorem volume; positive for closed meshes with outward normals.
inline double signed_volume(const Mesh& m) {
    double s = 0;
    for (const Tri& t : m.triangles) {
        s += dot(m.vertices[t[0]], cross(m.vertices[t[1]], m.vertices[t[2]]));
    }
    return s / 6.0;
}

/// True when every undirected edge is used by exactly two triangles, once in each direction.
inline bool is_watertight(const Mesh& m) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
    for (const Tri& t : m.triangles) {
        for (int k = 0; k < 3; ++k) ++directed[{t[k], t[(k + 1) % 3]}];
    }
    for (const auto& [e, n] : directed) {
        if (n != 1) return false;
        const auto rev = directed.find({e.second, e.first});
        if (rev == directed.end() || rev->second != 1) return false;
    }
    return !m.triangles.empty();
}

struct ReconstructParams {
    double floor_height = 3.0;
    int default_floors = 2;
    double recess_depth = 0.12;
    double sill_protrusion = 0.05;
    double stair_rise = 0.18;
    double stair_run = 0.28;
    double frame_width = 0.06;

    void validate() const {
        if (!(floor_height > 0) || default_floors < 1 || !(recess_depth > 0) || !(sill_protrusion > 0) ||
            !(stair_rise > 0) || !(stair_run > 0) || !(frame_width > 0)) {
            throw ValidationError("reconstruction parameters must be positive");
        }
    }
};

inline ReconstructParams reconstruct_params_from_json(const nlohmann::json& j) {
    ReconstructParams p;
    try {
        p.floor_height = j.value("floor_height", p.floor_height);
        p.default_floors = j.value("default_floors", p.default_floors);
        p.recess_depth = j.value("recess_depth", p.recess_depth);
        p.sill_protrusion = j.value("sill_protrusion", p.sill_protrusion);
        p.stair_rise = j.value("stair_rise", p.stair_rise);
        p.stair_run = j.value("stair_run", p.stair_run);
        p.frame_width = j.value("frame_width", p.frame_width);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("reconstruction parameters: ") + e.what());
    }
    p.validate();
    return p;
}

/// height_m, else floors x floor_height, else default_floors x floor_height.
inline double building_height(const nlohmann::json& props, const ReconstructParams& params) {
    if (props.is_object() && props.contains("height_m")) {
        const auto& h = props["height_m"];
        if (!h.is_number() || !(h.get<double>() > 0) || !std::isfinite(h.get<double>())) {
            throw ValidationError("height_m must be a positive number");
        }
        return h.get<double>();
    }
    if (props.is_object() && props.contains("floors")) {
        const auto& f = props["floors"];
        if (!f.is_number_integer() || f.get<std::int64_t>() < 1) {
            throw ValidationError("floors must be an integer >= 1");
        }
        return static_cast<double>(f.get<std::int64_t>()) * params.floor_height;
    }
    return params.default_floors * params.floor_height;
}

/// Building outline with a counter-clockwise exterior and clockwise holes, all open.
struct Footprint {
    std::vector<GeoPoint> exterior;
    std::vector<std::vector<GeoPoint>> holes;
    nlohmann::json properties = nlohmann::json::object();
};

namespace detail {
inline double lonlat_area(const std::vector<GeoPoint>& ring) {
    std::vector<Vec2> v;
    for (const auto& p : ring) v.push_back({p.lon, p.lat});
    return signed_area(v);
}

inline std::vector<GeoPoint> open_geo(std::vector<GeoPoint> r) {
    if (r.size() >= 2 && r.front() == r.back()) r.pop_back();
    return r;
}
} // namespace detail

inline Footprint make_footprint(const Geometry& g, nlohmann::json properties = nlohmann::json::object()) {
    if (g.type != GeometryType::polygon || g.parts.empty()) throw GeometryError("footprint must be a polygon");
    Footprint fp;
    fp.exterior = detail::open_geo(g.parts[0]);
    if (detail::lonlat_area(fp.exterior) < 0) std::reverse(fp.exterior.begin(), fp.exterior.end());
    for (std::size_t i = 1; i < g.parts.size(); ++i) {
        auto h = detail::open_geo(g.parts[i]);
        if (detail::lonlat_area(h) > 0) std::reverse(h.begin(), h.end());
        fp.holes.push_back(std::move(h));
    }
    fp.properties = std::move(properties);
    return fp;
}

inline Footprint footprint_from_feature(const Feature& f) { return make_footprint(f.geometry, f.properties); }

/// Accepts a GeoJSON Feature (dates optional) or a bare Polygon geometry.
inline Footprint footprint_from_geojson(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("footprint must be a JSON object");
    if (j.value("type", "") == "Feature") {
        if (!j.contains("geometry")) throw ValidationError("footprint feature has no geometry");
        nlohmann::json props = j.value("properties", nlohmann::json::object());
        if (props.is_null()) props = nlohmann::json::object();
        return make_footprint(geometry_from_geojson(j["geometry"]), props);
    }
    return make_footprint(geometry_from_geojson(j));
}

/// Footprint rings in local Mercator meters around the exterior's area centroid.
struct LocalFootprint {
    Vec2 anchor;
    Ring exterior;
    std::vector<Ring> holes;
};

inline LocalFootprint localize(const Footprint& fp) {
    auto project = [](const std::vector<GeoPoint>& ring) {
        Ring r;
        for (const auto& p : ring) {
            if (!is_valid(p)) throw ValidationError("footprint coordinate out of range");
            const MercatorPoint m = lonlat_to_mercator(p);
            r.push_back({m.x, m.y});
        }
        return r;
    };
    LocalFootprint lf;
    Ring ext = project(fp.exterior);
    if (distinct_vertex_count(ext) < 3) throw GeometryError("footprint needs at least 3 distinct vertices");
    // Centroid relative to the first vertex keeps products small.
    const Vec2 o = ext[0];
    double a2 = 0, cx = 0, cy = 0;
    for (std::size_t i = 0; i < ext.size(); ++i) {
        const Vec2 p = ext[i] - o, q = ext[(i + 1) % ext.size()] - o;
        const double c = cross(p, q);
        a2 += c;
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    if (!(std::abs(a2) > 0)) throw GeometryError("footprint has zero area");
    lf.anchor = {o.x + cx / (3 * a2), o.y + cy / (3 * a2)};
    auto shift = [&](Ring r) {
        for (auto& p : r) p = p - lf.anchor;
        return r;
    };
    lf.exterior = shift(ext);
    if (const auto problem = ring_simplicity_problem(lf.exterior); !problem.empty()) {
        throw GeometryError("footprint exterior " + problem);
    }
    for (const auto& h : fp.holes) {
        Ring r = shift(project(h));
        if (distinct_vertex_count(r) < 3) throw GeometryError("footprint hole needs at least 3 distinct vertices");
        if (const auto problem = ring_simplicity_problem(r); !problem.empty()) {
            throw GeometryError("footprint hole " + problem);
        }
        lf.holes.push_back(std::move(r));
    }
    return lf;
}

/// Prism of height h: walls as two triangles per edge, ear-clipped roof and floor.
inline Mesh extrude_footprint(const Footprint& fp, double h) {
    if (!(h > 0) || !std::isfinite(h)) throw DomainError("extrusion height must be positive");
    const LocalFootprint lf = localize(fp);
    Mesh m;
    m.anchor = lf.anchor;
    std::vector<const Ring*> rings{&lf.exterior};
    for (const auto& r : lf.holes) rings.push_back(&r);

    std::size_t total = 0;
    for (const Ring* r : rings) total += r->size();
    for (const Ring* r : rings) {
        for (const Vec2 p : *r) m.add_vertex({p.x, p.y, 0.0});
    }
    for (const Ring* r : rings) {
        for (const Vec2 p : *r) m.add_vertex({p.x, p.y, h});
    }
    const auto top = static_cast<std::uint32_t>(total);
    std::uint32_t base = 0;
    for (const Ring* r : rings) {
        const auto n = static_cast<std::uint32_t>(r->size());
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::uint32_t a = base + i, b = base + (i + 1) % n;
            // Exterior is counter-clockwise and holes clockwise, so the solid lies to the left.
            m.triangles.push_back({a, b, top + b});
            m.triangles.push_back({a, top + b, top + a});
        }
        base += n;
    }
    const auto tris = triangulate(lf.exterior, lf.holes);
    for (const auto& t : tris) m.triangles.push_back({top + t[0], top + t[1], top + t[2]});
    for (const auto& t : tris) m.triangles.push_back({t[0], t[2], t[1]});
    m.tags.push_back({"extrusion", 0, static_cast<std::uint32_t>(m.triangles.size())});
    return m;
}

/// Linear map from facade coordinates (u right, v up, in units of a W x H rect) onto a wall.
struct FacadeFrame {
    Vec3 origin;  // edge start at ground level
    Vec3 u_step;  // world offset per facade unit along u
    Vec3 v_step;  // world offset per facade unit along v
    Vec3 outward; // unit wall normal

    Vec3 apply(double u, double v, double offset = 0.0) const {
        return origin + u * u_step + v * v_step + offset * outward;
    }
};

/// Maps facade rect (0,0) to the edge start at z=0, (W,0) to the edge end and v=H to z=h.
inline FacadeFrame facade_to_world(double rect_w, double rect_h, std::size_t edge, const LocalFootprint& lf,
                                   double h) {
    if (!(rect_w > 0) || !(rect_h > 0)) throw DomainError("facade rect must have positive area");
    if (edge >= lf.exterior.size()) {
        throw DomainError("footprint has no edge " + std::to_string(edge) + " (" +
                          std::to_string(lf.exterior.size()) + " edges)");
    }
    const Vec2 a = lf.exterior[edge];
    const Vec2 b = lf.exterior[(edge + 1) % lf.exterior.size()];
    const Vec2 d = b - a;
    const double len = ta::norm(d);
    if (!(len > 0)) throw DegeneracyError("footprint edge " + std::to_string(edge) + " has zero length");
    return {{a.x, a.y, 0.0}, {d.x / rect_w, d.y / rect_w, 0.0}, {0.0, 0.0, h / rect_h}, {d.y / len, -d.x / len, 0.0}};
}

inline FacadeFrame facade_to_world(double rect_w, double rect_h, std::size_t edge, const Footprint& fp, double h) {
    return facade_to_world(rect_w, rect_h, edge, localize(fp), h);
}

namespace detail {

/// Emits quad a-b-c-d as two triangles facing `outward`.
inline void quad(Mesh& m, Vec3 a, Vec3 b, Vec3 c, Vec3 d, Vec3 outward) {
    if (dot(cross(b - a, c - a), outward) < 0) std::swap(b, d);
    const auto ia = m.add_vertex(a), ib = m.add_vertex(b), ic = m.add_vertex(c), id = m.add_vertex(d);
    m.triangles.push_back({ia, ib, ic});
    m.triangles.push_back({ia, ic, id});
}

/// Closed box [x0,x1] x [y0,y1] x [z0,z1] with 8 shared vertices and 12 triangles.
inline void box(Mesh& m, Vec3 lo, Vec3 hi) {
    const auto base = static_cast<std::uint32_t>(m.vertices.size());
    for (int k = 0; k < 8; ++k) {
        m.add_vertex({k & 1 ? hi.x : lo.x, k & 2 ? hi.y : lo.y, k & 4 ? hi.z : lo.z});
    }
    // Corner index bits: 1 = x, 2 = y, 4 = z. Each face listed counter-clockwise from outside.
    static constexpr std::array<std::array<int, 4>, 6> faces{{
        {0, 4, 6, 2}, // -x
        {1, 3, 7, 5}, // +x
        {0, 1, 5, 4}, // -y
        {2, 6, 7, 3}, // +y
        {0, 2, 3, 1}, // -z
        {4, 5, 7, 6}, // +z
    }};
    for (const auto& f : faces) {
        m.triangles.push_back({base + f[0], base + f[1], base + f[2]});
        m.triangles.push_back({base + f[0], base + f[2], base + f[3]});
    }
}

} // namespace detail

/// Canonical component mesh. Local frame: x along the facade in [0, width], z up in
/// [0, height], y into the wall with the front face at y = -depth.
inline Mesh generate_component(facade::Label kind, double width, double height, const ReconstructParams& params) {
    using facade::Label;
    if (!(width > 0) || !(height > 0) || !std::isfinite(width) || !std::isfinite(height)) {
        throw DomainError(std::string(facade::label_name(kind)) + " must have positive width and height");
    }
    Mesh m;
    switch (kind) {
    case Label::window:
    case Label::entry:
    case Label::storefront: {
        // Frame ring on the front plane, outer sides, inner reveal and the recessed pane: 26 triangles.
        const double d = params.recess_depth;
        const double f = std::min(params.frame_width, 0.25 * std::min(width, height));
        const std::array<Vec2, 4> outer{Vec2{0, 0}, Vec2{width, 0}, Vec2{width, height}, Vec2{0, height}};
        const std::array<Vec2, 4> inner{Vec2{f, f}, Vec2{width - f, f}, Vec2{width - f, height - f},
                                        Vec2{f, height - f}};
        // Outward direction of side k (bottom, right, top, left) in the facade plane.
        const std::array<Vec3, 4> side{Vec3{0, 0, -1}, Vec3{1, 0, 0}, Vec3{0, 0, 1}, Vec3{-1, 0, 0}};
        auto at = [](Vec2 p, double y) { return Vec3{p.x, y, p.y}; };
        const Vec3 front{0, -1, 0};
        for (int k = 0; k < 4; ++k) {
            const int n = (k + 1) % 4;
            detail::quad(m, at(outer[k], -d), at(outer[n], -d), at(inner[n], -d), at(inner[k], -d), front);
        }
        for (int k = 0; k < 4; ++k) {
            const int n = (k + 1) % 4;
            detail::quad(m, at(outer[k], 0), at(outer[n], 0), at(outer[n], -d), at(outer[k], -d), side[k]);
        }
        for (int k = 0; k < 4; ++k) {
            const int n = (k + 1) % 4;
            detail::quad(m, at(inner[k], -d), at(inner[n], -d), at(inner[n], 0), at(inner[k], 0), -1.0 * side[k]);
        }
        detail::quad(m, at(inner[0], 0), at(inner[1], 0), at(inner[2], 0), at(inner[3], 0), front);
        break;
    }
    case Label::stair: {
        const int steps = static_cast<int>(std::ceil(height / params.stair_rise - 1e-9));
        for (int k = 0; k < steps; ++k) {
            const double z0 = k * params.stair_rise;
            const double z1 = std::min((k + 1) * params.stair_rise, height);
            detail::box(m, {0, -(steps - k) * params.stair_run, z0}, {width, 0, z1});
        }
        break;
    }
    case Label::window_sill:
    case Label::cornice:
    case Label::roof_cornice:
        detail::box(m, {0, -params.sill_protrusion, 0}, {width, 0, height});
        break;
    }
    m.tags.push_back({facade::label_name(kind), 0, static_cast<std::uint32_t>(m.triangles.size())});
    return m;
}

inline Mesh generate_component(const std::string& kind, double width, double height, const ReconstructParams& params) {
    facade::Label label;
    try {
        label = facade::parse_label(kind);
    } catch (const ValidationError&) {
        throw KindError("unsupported component kind '" + kind + "'");
    }
    return generate_component(label, width, height, params);
}

/// Parsed facade attached to one exterior edge of the normalized footprint.
struct FacadeSpec {
    facade::FacadeParams params;
    std::size_t edge = 0;
};

/// Components sit this far in front of the wall to avoid coplanar faces.
inline constexpr double component_offset_m = 0.001;

/// Extrusion plus every facade component, ordered by edge, row, then column.
inline Mesh assemble_building(const Footprint& fp, double h, std::vector<FacadeSpec> facades,
                              const ReconstructParams& params, std::vector<std::string>* warnings = nullptr) {
    params.validate();
    Mesh mesh = extrude_footprint(fp, h);
    const LocalFootprint lf = localize(fp);
    std::stable_sort(facades.begin(), facades.end(),
                     [](const FacadeSpec& a, const FacadeSpec& b) { return a.edge < b.edge; });
    auto warn = [&](const std::string& s) {
        if (warnings) warnings->push_back(s);
    };
    for (const FacadeSpec& spec : facades) {
        const auto& p = spec.params;
        const FacadeFrame frame = facade_to_world(p.width, p.height, spec.edge, lf, h);
        const std::string where = "edge " + std::to_string(spec.edge);
        auto place = [&](facade::Label kind, double u0, double v0, double w, double ht, const std::string& what) {
            const double cu0 = std::clamp(u0, 0.0, p.width), cu1 = std::clamp(u0 + w, 0.0, p.width);
            const double cv0 = std::clamp(v0, 0.0, p.height), cv1 = std::clamp(v0 + ht, 0.0, p.height);
            if (cu0 != u0 || cu1 != u0 + w || cv0 != v0 || cv1 != v0 + ht) {
                warn(what + " on " + where + " overflows the wall face and was clamped");
            }
            if (!(cu1 - cu0 > 0) || !(cv1 - cv0 > 0)) {
                warn(what + " on " + where + " lies outside the wall face and was skipped");
                return;
            }
            Mesh c;
            try {
                c = generate_component(kind, cu1 - cu0, cv1 - cv0, params);
            } catch (const Error& e) {
                throw ValidationError(what + " on " + where + ": " + e.what());
            }
            mesh.append(c, facade::label_name(kind), [&](Vec3 v) {
                return frame.apply(cu0 + v.x, cv0 + v.z, -v.y + component_offset_m);
            });
        };
        for (const auto& [r, col] : p.windows) {
            if (r >= p.rows.size() || col >= p.columns.size()) {
                throw ValidationError("window cell outside the grid on " + where);
            }
            const auto& row = p.rows[r];
            const auto& column = p.columns[col];
            const double u0 = column.center * p.width - 0.5 * column.width;
            const std::string what = "window (" + std::to_string(r) + ", " + std::to_string(col) + ")";
            place(facade::Label::window, u0, row.bottom, column.width, row.height, what);
            if (row.sill) place(facade::Label::window_sill, u0, row.bottom - *row.sill, column.width, *row.sill, "sill of " + what);
            if (row.cornice) place(facade::Label::cornice, u0, row.bottom + row.height, column.width, *row.cornice, "cornice of " + what);
        }
        for (const auto& e : p.elements) {
            place(e.kind, e.center * p.width - 0.5 * e.width, e.base, e.width, e.height, facade::label_name(e.kind));
        }
    }
    return mesh;
}

struct BuildingResult {
    Mesh mesh;
    std::vector<FacadeSpec> facades;
    std::vector<std::string> warnings;
};

/// Full pipeline: each annotation is rectified and regularized, sized to its wall
/// (edge length x building height) and placed on the edge named by its link.
inline BuildingResult reconstruct_building(const Footprint& fp, const std::vector<facade::Annotation>& annotations,
                                           const ReconstructParams& params, std::optional<double> height = std::nullopt) {
    params.validate();
    BuildingResult out;
    const double h = height ? *height : building_height(fp.properties, params);
    const LocalFootprint lf = localize(fp);
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        const auto& a = annotations[i];
        const std::size_t edge = a.link ? a.link->edge_index : 0;
        if (edge >= lf.exterior.size()) {
            throw DomainError("annotation " + std::to_string(i) + " names edge " + std::to_string(edge) +
                              " but the footprint has " + std::to_string(lf.exterior.size()));
        }
        const double len = norm(lf.exterior[(edge + 1) % lf.exterior.size()] - lf.exterior[edge]);
        out.facades.push_back({facade::parse_facade(a, len, h).params, edge});
    }
    out.mesh = assemble_building(fp, h, out.facades, params, &out.warnings);
    return out;
}

} // namespace ta

#endif
