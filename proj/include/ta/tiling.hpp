#ifndef TA_TILING_HPP
#define TA_TILING_HPP

// Feature -> vector tile: project, clip to the buffered tile, quantize, encode.

#include "ta/feature.hpp"
#include "ta/mvt.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace ta {

struct TileConfig {
    std::uint32_t extent = 4096;
    std::uint32_t buffer = 64;

    void validate() const {
        if (extent == 0 || (extent & (extent - 1)) != 0) throw ValidationError("tile extent must be a power of two");
        if (buffer > extent) throw ValidationError("tile buffer larger than the extent");
    }
};

/// Geometry in Mercator meters. Polygon rings are closed, as in GeoJSON.
struct MercatorGeometry {
    GeometryType type = GeometryType::point;
    std::vector<std::vector<Vec2>> parts;

    bool empty() const { return parts.empty(); }
    friend bool operator==(const MercatorGeometry&, const MercatorGeometry&) = default;
};

inline MercatorGeometry project(const Geometry& g) {
    MercatorGeometry m{g.type, {}};
    for (const auto& part : g.parts) {
        std::vector<Vec2> out;
        for (const GeoPoint& p : part) {
            const MercatorPoint q = lonlat_to_mercator(p);
            out.push_back({q.x, q.y});
        }
        m.parts.push_back(std::move(out));
    }
    return m;
}

/// Tile bounds grown by `buffer` tile units on every side.
inline MercatorBox clip_window(const TileAddress& t, const TileConfig& cfg) {
    const MercatorBox b = tile_mercator_bounds(t);
    return b.expanded(b.width() * cfg.buffer / cfg.extent);
}

/// Lon/lat box covering the buffered tile, for spatial prefiltering.
inline LonLatBox tile_query_box(const TileAddress& t, const TileConfig& cfg) {
    const MercatorBox w = clip_window(t, cfg);
    const double h = EarthModel::half_extent;
    const GeoPoint sw = mercator_to_lonlat({std::max(w.min_x, -h), std::max(w.min_y, -h)});
    const GeoPoint ne = mercator_to_lonlat({std::min(w.max_x, h), std::min(w.max_y, h)});
    return {sw.lon, sw.lat, ne.lon, ne.lat};
}

inline MercatorGeometry clip_geometry(const MercatorGeometry& g, const MercatorBox& window) {
    const Rect r{window.min_x, window.min_y, window.max_x, window.max_y};
    MercatorGeometry out{g.type, {}};
    switch (g.type) {
    case GeometryType::point:
        for (const auto& part : g.parts) {
            std::vector<Vec2> kept;
            for (const Vec2 p : part) {
                if (r.contains(p)) kept.push_back(p);
            }
            if (!kept.empty()) out.parts.push_back(std::move(kept));
        }
        break;
    case GeometryType::linestring:
        for (const auto& part : g.parts) {
            for (auto& run : clip_polyline_to_rect(part, r)) out.parts.push_back(std::move(run));
        }
        break;
    case GeometryType::polygon:
        for (std::size_t i = 0; i < g.parts.size(); ++i) {
            const auto& ring = g.parts[i];
            if (ring.size() < 4 || ring.front() != ring.back()) {
                throw ValidationError("polygon ring " + std::to_string(i) + " is not closed");
            }
            Ring c = clip_ring_to_rect(open_ring(ring), r);
            if (c.empty()) {
                if (i == 0) return {g.type, {}};
                continue;
            }
            out.parts.push_back(close_ring(c));
        }
        break;
    }
    return out;
}

namespace detail {

inline std::int64_t area2(const mvt::Path& p) {
    std::int64_t s = 0;
    for (std::size_t i = 0, j = p.size() - 1; i < p.size(); j = i++) {
        s += std::int64_t{p[j].x} * p[i].y - std::int64_t{p[i].x} * p[j].y;
    }
    return s;
}

inline mvt::Path dedupe(mvt::Path p, bool ring) {
    p.erase(std::unique(p.begin(), p.end()), p.end());
    if (ring) {
        while (p.size() > 1 && p.front() == p.back()) p.pop_back();
    }
    return p;
}

} // namespace detail

/// Maps tile bounds onto [0, extent]^2 with y growing southward and rounds to the
/// nearest integer. Drops collapsed rings and lines; orients polygon exteriors to
/// positive y-down area and holes to negative.
inline std::vector<mvt::Path> quantize_geometry(const MercatorGeometry& g, const TileAddress& t, std::uint32_t extent) {
    const MercatorBox b = tile_mercator_bounds(t);
    const double sx = extent / b.width();
    const double sy = extent / b.height();
    auto q = [&](Vec2 p) {
        return mvt::IPoint{static_cast<std::int32_t>(std::llround((p.x - b.min_x) * sx)),
                           static_cast<std::int32_t>(std::llround((b.max_y - p.y) * sy))};
    };
    std::vector<mvt::Path> out;
    switch (g.type) {
    case GeometryType::point: {
        mvt::Path pts;
        for (const auto& part : g.parts) {
            for (const Vec2 p : part) pts.push_back(q(p));
        }
        if (!pts.empty()) out.push_back(std::move(pts));
        break;
    }
    case GeometryType::linestring:
        for (const auto& part : g.parts) {
            mvt::Path p;
            for (const Vec2 v : part) p.push_back(q(v));
            p = detail::dedupe(std::move(p), false);
            if (p.size() >= 2) out.push_back(std::move(p));
        }
        break;
    case GeometryType::polygon:
        for (std::size_t i = 0; i < g.parts.size(); ++i) {
            mvt::Path p;
            for (const Vec2 v : g.parts[i]) p.push_back(q(v));
            p = detail::dedupe(std::move(p), true);
            const std::int64_t a = p.size() >= 3 ? detail::area2(p) : 0;
            if (a == 0) {
                if (i == 0) return {};
                continue;
            }
            const bool exterior = i == 0;
            if ((a > 0) != exterior) std::reverse(p.begin(), p.end());
            out.push_back(std::move(p));
        }
        break;
    }
    return out;
}

inline const char* layer_name(FeatureKind k) {
    switch (k) {
    case FeatureKind::building: return "buildings";
    case FeatureKind::road: return "roads";
    case FeatureKind::other: return "other";
    }
    return "other";
}

inline mvt::GeomType mvt_type(GeometryType t) {
    switch (t) {
    case GeometryType::point: return mvt::GeomType::point;
    case GeometryType::linestring: return mvt::GeomType::linestring;
    case GeometryType::polygon: return mvt::GeomType::polygon;
    }
    return mvt::GeomType::unknown;
}

/// Tag list for a feature: start_date, end_date (when bounded), then properties by key.
inline std::vector<std::pair<std::string, mvt::Value>> feature_attributes(const Feature& f) {
    std::vector<std::pair<std::string, mvt::Value>> attrs;
    attrs.emplace_back("start_date", f.span.start.iso());
    if (f.span.end) attrs.emplace_back("end_date", f.span.end->iso());
    for (const auto& [k, v] : f.properties.items()) {
        if (v.is_string()) attrs.emplace_back(k, v.get<std::string>());
        else if (v.is_boolean()) attrs.emplace_back(k, v.get<bool>());
        else if (v.is_number()) attrs.emplace_back(k, v.get<double>());
    }
    return attrs;
}

inline std::vector<mvt::Layer> build_tile_layers(const std::vector<Feature>& features, const TileAddress& t,
                                                 const TileConfig& cfg = {}) {
    cfg.validate();
    const MercatorBox window = clip_window(t, cfg);
    std::map<FeatureKind, mvt::LayerBuilder> layers;
    for (const auto& f : features) {
        std::vector<mvt::Path> paths;
        try {
            paths = quantize_geometry(clip_geometry(project(f.geometry), window), t, cfg.extent);
        } catch (const ValidationError& e) {
            throw ValidationError("feature " + std::to_string(f.id) + ": " + e.what());
        }
        if (paths.empty()) continue;
        mvt::Feature mf;
        mf.id = f.id;
        mf.type = mvt_type(f.geometry.type);
        mf.paths = std::move(paths);
        layers.try_emplace(f.kind, layer_name(f.kind), cfg.extent).first->second.add(std::move(mf), feature_attributes(f));
    }
    std::vector<mvt::Layer> out;
    for (auto& [kind, builder] : layers) out.push_back(builder.release());
    return out;
}

inline std::string build_tile(const std::vector<Feature>& features, const TileAddress& t, const TileConfig& cfg = {}) {
    return mvt::encode_tile(build_tile_layers(features, t, cfg));
}

/// Reads the date tags a tile carries for `f`.
inline std::optional<TimeSpan> tile_feature_span(const mvt::Layer& l, const mvt::Feature& f) {
    auto date = [&](std::string_view key) -> std::optional<Date> {
        const mvt::Value* v = mvt::find_tag(l, f, key);
        if (!v || !std::holds_alternative<std::string>(*v)) return std::nullopt;
        return Date::parse(std::get<std::string>(*v));
    };
    const auto start = date("start_date");
    if (!start) return std::nullopt;
    return TimeSpan{*start, date("end_date")};
}

/// Client-side temporal filter over a decoded tile.
inline std::vector<mvt::Layer> filter_tile(std::vector<mvt::Layer> layers, Date at) {
    std::vector<mvt::Layer> out;
    for (auto& l : layers) {
        std::vector<mvt::Feature> kept;
        for (auto& f : l.features) {
            const auto span = tile_feature_span(l, f);
            if (span && span->contains(at)) kept.push_back(std::move(f));
        }
        l.features = std::move(kept);
        if (!l.features.empty()) out.push_back(std::move(l));
    }
    return out;
}

/// Every tile at zoom `z` whose bounds intersect `box`.
inline std::vector<TileAddress> tiles_covering(const LonLatBox& box, std::uint32_t z) {
    const TileAddress nw = lonlat_to_tile({box.min_lon, box.max_lat}, z);
    const TileAddress se = lonlat_to_tile({box.max_lon, box.min_lat}, z);
    std::vector<TileAddress> out;
    for (std::uint32_t y = nw.y; y <= se.y; ++y) {
        for (std::uint32_t x = nw.x; x <= se.x; ++x) out.push_back({z, x, y});
    }
    return out;
}

} // namespace ta

#endif // TA_TILING_HPP
