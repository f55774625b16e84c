#ifndef TA_FEATURE_HPP
#define TA_FEATURE_HPP

// Time-stamped map features and their GeoJSON document form.

#include "ta/date.hpp"
#include "ta/error.hpp"
#include "ta/geo.hpp"
#include "ta/planar.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace ta {

enum class FeatureKind { building, road, other };

inline const char* kind_name(FeatureKind k) {
    switch (k) {
    case FeatureKind::building: return "building";
    case FeatureKind::road: return "road";
    case FeatureKind::other: return "other";
    }
    return "other";
}

inline FeatureKind parse_kind(std::string_view s) {
    if (s == "building") return FeatureKind::building;
    if (s == "road") return FeatureKind::road;
    if (s == "other") return FeatureKind::other;
    throw ValidationError("unknown feature kind '" + std::string(s) + "' (expected building, road or other)");
}

enum class GeometryType { point, linestring, polygon };

/// Point: one part holding one position. LineString: one part. Polygon: exterior ring
/// then holes, each closed (first position repeated last) as in GeoJSON.
struct Geometry {
    GeometryType type = GeometryType::point;
    std::vector<std::vector<GeoPoint>> parts;

    friend bool operator==(const Geometry&, const Geometry&) = default;
};

struct Feature {
    std::uint64_t id = 0;
    FeatureKind kind = FeatureKind::other;
    Geometry geometry;
    TimeSpan span;
    /// Scalar values only (string, number, bool); excludes kind and dates.
    nlohmann::json properties = nlohmann::json::object();

    friend bool operator==(const Feature&, const Feature&) = default;
};

inline LonLatBox bbox(const Geometry& g) {
    LonLatBox b = LonLatBox::empty();
    for (const auto& part : g.parts) {
        for (const GeoPoint& p : part) b.expand(p);
    }
    return b;
}

inline MercatorBox mercator_bbox(const Geometry& g) {
    const LonLatBox b = bbox(g);
    const MercatorPoint lo = lonlat_to_mercator({b.min_lon, b.min_lat});
    const MercatorPoint hi = lonlat_to_mercator({b.max_lon, b.max_lat});
    return {lo.x, lo.y, hi.x, hi.y};
}

/// Projected parts; polygon rings come back open.
inline std::vector<std::vector<Vec2>> mercator_parts(const Geometry& g, Vec2 origin = {}) {
    std::vector<std::vector<Vec2>> out;
    for (const auto& part : g.parts) {
        std::vector<Vec2> ring;
        for (const GeoPoint& p : part) {
            const MercatorPoint m = lonlat_to_mercator(p);
            ring.push_back(Vec2{m.x, m.y} - origin);
        }
        if (g.type == GeometryType::polygon) ring = open_ring(ring);
        out.push_back(std::move(ring));
    }
    return out;
}

/// Throws GeometryError (or ValidationError for coordinates) describing the first problem.
inline void validate_geometry(const Geometry& g) {
    for (const auto& part : g.parts) {
        for (const GeoPoint& p : part) {
            if (!is_valid(p)) {
                try {
                    require_valid(p);
                } catch (const DomainError& e) {
                    throw ValidationError(e.what());
                }
            }
        }
    }
    switch (g.type) {
    case GeometryType::point:
        if (g.parts.size() != 1 || g.parts[0].size() != 1) throw GeometryError("point must have exactly one position");
        return;
    case GeometryType::linestring: {
        if (g.parts.size() != 1) throw GeometryError("linestring must have one part");
        std::vector<Vec2> pts;
        for (const GeoPoint& p : g.parts[0]) pts.push_back({p.lon, p.lat});
        if (distinct_vertex_count(pts) < 2) throw GeometryError("linestring needs at least 2 distinct positions");
        return;
    }
    case GeometryType::polygon: break;
    }
    if (g.parts.empty()) throw GeometryError("polygon has no rings");
    const auto rings = mercator_parts(g);
    for (std::size_t i = 0; i < g.parts.size(); ++i) {
        const auto& raw = g.parts[i];
        if (raw.size() < 4 || raw.front() != raw.back()) {
            throw GeometryError("polygon ring " + std::to_string(i) + " is not closed (first position must repeat last)");
        }
        if (distinct_vertex_count(rings[i]) < 3) {
            throw GeometryError("polygon ring " + std::to_string(i) + " has fewer than 3 distinct vertices");
        }
        if (const auto why = ring_simplicity_problem(rings[i]); !why.empty()) {
            throw GeometryError("polygon ring " + std::to_string(i) + " is not simple: " + why);
        }
    }
    for (std::size_t i = 0; i < rings.size(); ++i) {
        for (std::size_t j = i + 1; j < rings.size(); ++j) {
            const auto& a = rings[i];
            const auto& b = rings[j];
            for (std::size_t p = 0; p < a.size(); ++p) {
                for (std::size_t q = 0; q < b.size(); ++q) {
                    if (segments_intersect(a[p], a[(p + 1) % a.size()], b[q], b[(q + 1) % b.size()])) {
                        throw GeometryError("polygon rings " + std::to_string(i) + " and " + std::to_string(j) + " intersect");
                    }
                }
            }
        }
        if (i > 0 && !point_in_ring(rings[i][0], rings[0])) {
            throw GeometryError("polygon hole " + std::to_string(i) + " lies outside the exterior ring");
        }
    }
}

namespace detail {

inline GeoPoint parse_position(const nlohmann::json& j) {
    if (!j.is_array() || j.size() < 2 || !j[0].is_number() || !j[1].is_number()) {
        throw ValidationError("position must be an array of at least two numbers");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

inline std::vector<GeoPoint> parse_positions(const nlohmann::json& j) {
    if (!j.is_array()) throw ValidationError("expected an array of positions");
    std::vector<GeoPoint> out;
    for (const auto& p : j) out.push_back(parse_position(p));
    return out;
}

inline nlohmann::json positions_json(const std::vector<GeoPoint>& pts) {
    auto a = nlohmann::json::array();
    for (const GeoPoint& p : pts) a.push_back({p.lon, p.lat});
    return a;
}

} // namespace detail

inline Geometry geometry_from_geojson(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
        throw ValidationError("geometry must be an object with a string 'type'");
    }
    if (!j.contains("coordinates")) throw ValidationError("geometry has no 'coordinates'");
    const std::string type = j["type"];
    const auto& c = j["coordinates"];
    Geometry g;
    if (type == "Point") {
        g.type = GeometryType::point;
        g.parts = {{detail::parse_position(c)}};
    } else if (type == "LineString") {
        g.type = GeometryType::linestring;
        g.parts = {detail::parse_positions(c)};
    } else if (type == "Polygon") {
        g.type = GeometryType::polygon;
        if (!c.is_array()) throw ValidationError("polygon coordinates must be an array of rings");
        for (const auto& ring : c) g.parts.push_back(detail::parse_positions(ring));
    } else {
        throw ValidationError("unsupported geometry type '" + type + "' (expected Point, LineString or Polygon)");
    }
    return g;
}

inline nlohmann::json geometry_to_geojson(const Geometry& g) {
    switch (g.type) {
    case GeometryType::point:
        return {{"type", "Point"}, {"coordinates", {g.parts.at(0).at(0).lon, g.parts.at(0).at(0).lat}}};
    case GeometryType::linestring:
        return {{"type", "LineString"}, {"coordinates", detail::positions_json(g.parts.at(0))}};
    case GeometryType::polygon: {
        auto rings = nlohmann::json::array();
        for (const auto& r : g.parts) rings.push_back(detail::positions_json(r));
        return {{"type", "Polygon"}, {"coordinates", rings}};
    }
    }
    return nullptr;
}

/// Parses and validates one GeoJSON Feature. A numeric top-level `id` is kept; the
/// store overwrites it on ingest.
inline Feature feature_from_geojson(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.value("type", "") != "Feature") throw ValidationError("document is not a GeoJSON Feature");
    if (!doc.contains("geometry") || doc["geometry"].is_null()) throw ValidationError("feature has no geometry");
    if (!doc.contains("properties") || !doc["properties"].is_object()) throw ValidationError("feature has no properties object");
    Feature f;
    if (doc.contains("id") && doc["id"].is_number_unsigned()) f.id = doc["id"].get<std::uint64_t>();
    f.geometry = geometry_from_geojson(doc["geometry"]);
    validate_geometry(f.geometry);

    const auto& props = doc["properties"];
    auto date_prop = [&](const char* key) -> std::optional<Date> {
        if (!props.contains(key) || props[key].is_null()) return std::nullopt;
        if (!props[key].is_string()) throw ValidationError(std::string("property '") + key + "' must be an ISO-8601 date string");
        return Date::parse(props[key].get<std::string>());
    };
    const auto start = date_prop("start_date");
    if (!start) throw ValidationError("property 'start_date' is required");
    f.span = TimeSpan::make(*start, date_prop("end_date"));
    if (props.contains("kind")) {
        if (!props["kind"].is_string()) throw ValidationError("property 'kind' must be a string");
        f.kind = parse_kind(props["kind"].get<std::string>());
    }
    for (const auto& [k, v] : props.items()) {
        if (k == "kind" || k == "start_date" || k == "end_date" || v.is_null()) continue;
        if (!v.is_primitive()) throw ValidationError("property '" + k + "' must be a string, number or boolean");
        if (v.is_number_float() && !std::isfinite(v.get<double>())) throw ValidationError("property '" + k + "' is not finite");
        f.properties[k] = v;
    }
    return f;
}

inline nlohmann::json feature_to_geojson(const Feature& f) {
    nlohmann::json props = f.properties;
    props["kind"] = kind_name(f.kind);
    props["start_date"] = f.span.start.iso();
    if (f.span.end) props["end_date"] = f.span.end->iso();
    return {{"type", "Feature"}, {"id", f.id}, {"geometry", geometry_to_geojson(f.geometry)}, {"properties", props}};
}

struct DocumentError {
    std::size_t index = 0;
    std::string message;
};

/// Validation failure of a batch; one entry per rejected document.
class BatchValidationError : public ValidationError {
public:
    explicit BatchValidationError(std::vector<DocumentError> errors)
        : ValidationError(summarize(errors)), errors_(std::move(errors)) {}

    const std::vector<DocumentError>& errors() const { return errors_; }

private:
    static std::string summarize(const std::vector<DocumentError>& errors) {
        std::string s = std::to_string(errors.size()) + " invalid document(s)";
        for (const auto& e : errors) s += "\n  document " + std::to_string(e.index) + ": " + e.message;
        return s;
    }
    std::vector<DocumentError> errors_;
};

/// Accepts a Feature or a FeatureCollection. Reports every bad document at once.
inline std::vector<Feature> features_from_geojson(const nlohmann::json& body) {
    std::vector<const nlohmann::json*> docs;
    if (body.is_object() && body.value("type", "") == "FeatureCollection") {
        if (!body.contains("features") || !body["features"].is_array()) {
            throw BatchValidationError({{0, "FeatureCollection has no 'features' array"}});
        }
        for (const auto& d : body["features"]) docs.push_back(&d);
    } else {
        docs.push_back(&body);
    }
    std::vector<Feature> out;
    std::vector<DocumentError> errors;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        try {
            out.push_back(feature_from_geojson(*docs[i]));
        } catch (const Error& e) {
            errors.push_back({i, e.what()});
        }
    }
    if (!errors.empty()) throw BatchValidationError(std::move(errors));
    return out;
}

inline nlohmann::json feature_collection(const std::vector<Feature>& features) {
    auto arr = nlohmann::json::array();
    for (const auto& f : features) arr.push_back(feature_to_geojson(f));
    return {{"type", "FeatureCollection"}, {"features", arr}};
}

} // namespace ta

#endif // TA_FEATURE_HPP
