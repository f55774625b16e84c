#ifndef TA_GEO_HPP
#define TA_GEO_HPP

// Spherical Web Mercator (EPSG:3857) projection and slippy-map tile addressing.

#include "ta/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>

namespace ta {

struct EarthModel {
    static constexpr double radius = 6378137.0;
    static constexpr double max_lat = 85.05112878;
    /// Half of the projected world width, pi * R.
    static constexpr double half_extent = std::numbers::pi * radius;
};

/// WGS84 degrees.
struct GeoPoint {
    double lon = 0.0;
    double lat = 0.0;

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// EPSG:3857 meters.
struct MercatorPoint {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const MercatorPoint&, const MercatorPoint&) = default;
};

struct LonLatBox {
    double min_lon = 0.0;
    double min_lat = 0.0;
    double max_lon = 0.0;
    double max_lat = 0.0;

    bool contains(const GeoPoint& p) const {
        return p.lon >= min_lon && p.lon <= max_lon && p.lat >= min_lat && p.lat <= max_lat;
    }
    bool intersects(const LonLatBox& o) const {
        return min_lon <= o.max_lon && o.min_lon <= max_lon && min_lat <= o.max_lat &&
               o.min_lat <= max_lat;
    }
    void expand(const GeoPoint& p) {
        min_lon = std::min(min_lon, p.lon);
        max_lon = std::max(max_lon, p.lon);
        min_lat = std::min(min_lat, p.lat);
        max_lat = std::max(max_lat, p.lat);
    }
    static LonLatBox empty() {
        return {INFINITY, INFINITY, -INFINITY, -INFINITY};
    }
    bool is_empty() const { return !(min_lon <= max_lon && min_lat <= max_lat); }

    friend bool operator==(const LonLatBox&, const LonLatBox&) = default;
};

struct MercatorBox {
    double min_x = 0.0;
    double min_y = 0.0;
    double max_x = 0.0;
    double max_y = 0.0;

    double width() const { return max_x - min_x; }
    double height() const { return max_y - min_y; }
    bool contains(const MercatorPoint& p) const {
        return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
    }
    bool intersects(const MercatorBox& o) const {
        return min_x <= o.max_x && o.min_x <= max_x && min_y <= o.max_y && o.min_y <= max_y;
    }
    MercatorBox expanded(double margin) const {
        return {min_x - margin, min_y - margin, max_x + margin, max_y + margin};
    }

    friend bool operator==(const MercatorBox&, const MercatorBox&) = default;
};

inline bool is_valid(const GeoPoint& p) {
    return std::isfinite(p.lon) && std::isfinite(p.lat) && p.lon >= -180.0 && p.lon <= 180.0 &&
           p.lat >= -EarthModel::max_lat && p.lat <= EarthModel::max_lat;
}

inline void require_valid(const GeoPoint& p) {
    if (!is_valid(p)) {
        std::ostringstream os;
        os.precision(17);
        os << "coordinate (" << p.lon << ", " << p.lat
           << ") outside the projectable range |lon| <= 180, |lat| <= " << EarthModel::max_lat;
        throw DomainError(os.str());
    }
}

namespace detail {
// max_lat is a rounded constant and projects 2.5e-4 m past pi*R.
inline constexpr double mercator_slack = 1e-3;

constexpr double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
constexpr double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }
} // namespace detail

inline bool is_valid(const MercatorPoint& p) {
    constexpr double lim = EarthModel::half_extent + detail::mercator_slack;
    return std::isfinite(p.x) && std::isfinite(p.y) && std::abs(p.x) <= lim &&
           std::abs(p.y) <= lim;
}

inline MercatorPoint lonlat_to_mercator(const GeoPoint& p) {
    require_valid(p);
    const double lat = detail::deg2rad(p.lat);
    return {EarthModel::radius * detail::deg2rad(p.lon),
            EarthModel::radius * std::atanh(std::sin(lat))};
}

inline GeoPoint mercator_to_lonlat(const MercatorPoint& p) {
    if (!is_valid(p)) {
        std::ostringstream os;
        os.precision(17);
        os << "mercator point (" << p.x << ", " << p.y << ") outside |x|,|y| <= pi*R";
        throw DomainError(os.str());
    }
    const double lon = detail::rad2deg(p.x / EarthModel::radius);
    const double lat = detail::rad2deg(std::atan(std::sinh(p.y / EarthModel::radius)));
    return {std::clamp(lon, -180.0, 180.0), lat};
}

/// z/x/y slippy tile, y = 0 at the north edge.
struct TileAddress {
    std::uint32_t z = 0;
    std::uint32_t x = 0;
    std::uint32_t y = 0;

    static constexpr std::uint32_t max_zoom = 30;

    std::uint32_t dim() const { return std::uint32_t{1} << z; }
    bool valid() const { return z <= max_zoom && x < dim() && y < dim(); }
    std::string path() const {
        return std::to_string(z) + "/" + std::to_string(x) + "/" + std::to_string(y);
    }

    friend auto operator<=>(const TileAddress&, const TileAddress&) = default;
};

inline void require_valid(const TileAddress& t) {
    if (!t.valid()) {
        throw DomainError("invalid tile address " + t.path());
    }
}

inline TileAddress lonlat_to_tile(const GeoPoint& p, std::uint32_t z) {
    require_valid(p);
    if (z > TileAddress::max_zoom) {
        throw DomainError("zoom " + std::to_string(z) + " exceeds maximum " +
                          std::to_string(TileAddress::max_zoom));
    }
    const double n = std::ldexp(1.0, static_cast<int>(z));
    const double lat = detail::deg2rad(p.lat);
    const double fx = std::floor((p.lon + 180.0) / 360.0 * n);
    const double fy =
        std::floor((1.0 - std::log(std::tan(lat) + 1.0 / std::cos(lat)) / std::numbers::pi) /
                   2.0 * n);
    const double hi = n - 1.0;
    return {z, static_cast<std::uint32_t>(std::clamp(fx, 0.0, hi)),
            static_cast<std::uint32_t>(std::clamp(fy, 0.0, hi))};
}

struct TileBounds {
    LonLatBox lonlat;
    MercatorBox mercator;
};

inline MercatorBox tile_mercator_bounds(const TileAddress& t) {
    require_valid(t);
    const double world = 2.0 * EarthModel::half_extent;
    const double size = world / static_cast<double>(t.dim());
    const double h = EarthModel::half_extent;
    return {-h + size * t.x, h - size * (t.y + 1.0), -h + size * (t.x + 1.0), h - size * t.y};
}

inline TileBounds tile_bounds(const TileAddress& t) {
    const MercatorBox m = tile_mercator_bounds(t);
    const GeoPoint sw = mercator_to_lonlat({m.min_x, m.min_y});
    const GeoPoint ne = mercator_to_lonlat({m.max_x, m.max_y});
    return {{sw.lon, sw.lat, ne.lon, ne.lat}, m};
}

inline std::array<TileAddress, 4> tile_children(const TileAddress& t) {
    require_valid(t);
    if (t.z >= TileAddress::max_zoom) {
        throw DomainError("tile " + t.path() + " has no children below the maximum zoom");
    }
    const std::uint32_t z = t.z + 1;
    const std::uint32_t x = 2 * t.x;
    const std::uint32_t y = 2 * t.y;
    return {TileAddress{z, x, y}, TileAddress{z, x + 1, y}, TileAddress{z, x, y + 1},
            TileAddress{z, x + 1, y + 1}};
}

} // namespace ta

#endif // TA_GEO_HPP
