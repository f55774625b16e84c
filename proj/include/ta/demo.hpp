#ifndef TA_DEMO_HPP
#define TA_DEMO_HPP

// Synthetic "two blocks, 1900-1960" dataset: twelve building footprints on ten
// lots, two streets, and three annotated facade photos.

#include "ta/facade.hpp"
#include "ta/feature.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace ta::demo {

inline constexpr double origin_lon = -74.0050;
inline constexpr double origin_lat = 40.7200;

/// Local meters east/north of the demo origin to lon/lat.
inline GeoPoint at(double east, double north) {
    const double k = 111320.0;
    return {origin_lon + east / (k * std::cos(origin_lat * std::numbers::pi / 180)), origin_lat + north / k};
}

struct Building {
    std::string name;
    int block = 0; // 0 = south block, 1 = north block
    int lot = 0;
    int start = 0;
    int end = 0; // 0 = still standing
    int floors = 0;
};

inline const std::vector<Building>& buildings() {
    static const std::vector<Building> list{
        {"A0", 0, 0, 1900, 0, 4},    {"A1", 0, 1, 1900, 1921, 3}, {"A1b", 0, 1, 1923, 0, 6},
        {"A2", 0, 2, 1910, 0, 3},    {"A3", 0, 3, 1905, 1950, 2}, {"A4", 0, 4, 1920, 0, 5},
        {"B0", 1, 0, 1900, 1940, 3}, {"B0b", 1, 0, 1941, 0, 8},  {"B1", 1, 1, 1915, 0, 4},
        {"B2", 1, 2, 1900, 0, 4},    {"B3", 1, 3, 1930, 0, 3},   {"B4", 1, 4, 1908, 1958, 2},
    };
    return list;
}

inline constexpr double lot_width = 22.0;
inline constexpr double building_width = 20.0;
inline constexpr double building_depth = 15.0;
inline constexpr double block_gap = 40.0;

inline nlohmann::json building_feature(const Building& b) {
    const double x0 = b.lot * lot_width, y0 = b.block * block_gap;
    const std::vector<GeoPoint> ring{at(x0, y0), at(x0 + building_width, y0), at(x0 + building_width, y0 + building_depth),
                                     at(x0, y0 + building_depth), at(x0, y0)};
    nlohmann::json props{{"kind", "building"}, {"start_date", std::to_string(b.start)}, {"name", b.name}, {"floors", b.floors}};
    if (b.end) props["end_date"] = std::to_string(b.end);
    return {{"type", "Feature"},
            {"geometry", geometry_to_geojson({GeometryType::polygon, {ring}})},
            {"properties", props}};
}

/// Buildings in list order, then the two streets; ids on a fresh store are 1..14 in this order.
inline nlohmann::json feature_collection() {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& b : buildings()) features.push_back(building_feature(b));
    auto street = [](const std::string& name, GeoPoint a, GeoPoint b) {
        return nlohmann::json{{"type", "Feature"},
                              {"geometry", geometry_to_geojson({GeometryType::linestring, {{a, b}}})},
                              {"properties", {{"kind", "road"}, {"start_date", "1900"}, {"name", name}}}};
    };
    features.push_back(street("Cross Street", at(-10, 27.5), at(5 * lot_width + 10, 27.5)));
    features.push_back(street("Side Avenue", at(-6, -10), at(-6, block_gap + building_depth + 10)));
    return {{"type", "FeatureCollection"}, {"features", features}};
}

/// Viewport covering both blocks and the streets.
inline LonLatBox viewport() {
    const GeoPoint sw = at(-20, -20), ne = at(5 * lot_width + 20, block_gap + building_depth + 20);
    return {sw.lon, sw.lat, ne.lon, ne.lat};
}

struct FacadePhoto {
    std::string building;
    std::uint64_t feature_id = 0;
    nlohmann::json annotation;
};

/// Frontal facade photo: the facade fills (40, 40)-(760, 560) of an 800 x 600 image.
/// Window boxes carry +-1 px deterministic jitter so regularization has work to do.
inline nlohmann::json facade_annotation(int rows, int cols, bool sills, bool entry, std::uint64_t feature_id,
                                        std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto jitter = [&]() { return static_cast<double>(static_cast<int>(rng() % 3) - 1); };
    const double fx = 40, fy = 40, fw = 720, fh = 520;
    nlohmann::json boxes = nlohmann::json::array();
    const double cell_w = fw / cols, cell_h = (entry ? fh * 0.8 : fh) / rows;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double w = 0.45 * cell_w, h = 0.55 * cell_h;
            const double x = fx + (c + 0.5) * cell_w - w / 2, y = fy + (r + 0.3) * cell_h;
            boxes.push_back({{"label", "window"}, {"x", x + jitter()}, {"y", y + jitter()}, {"w", w + jitter()},
                             {"h", h + jitter()}, {"confidence", 0.9}});
            if (sills) {
                boxes.push_back({{"label", "window_sill"}, {"x", x - 4}, {"y", y + h + 1}, {"w", w + 8}, {"h", 6},
                                 {"confidence", 0.8}});
            }
        }
    }
    if (entry) {
        boxes.push_back({{"label", "entry"}, {"x", fx + fw / 2 - 35}, {"y", fy + fh - 102}, {"w", 70}, {"h", 90}, {"confidence", 0.95}});
        boxes.push_back({{"label", "stair"}, {"x", fx + fw / 2 - 45}, {"y", fy + fh - 12}, {"w", 90}, {"h", 12}, {"confidence", 0.7}});
    }
    boxes.push_back({{"label", "roof_cornice"}, {"x", fx}, {"y", fy}, {"w", fw}, {"h", 10}, {"confidence", 0.85}});
    return {{"image", {{"width", 800}, {"height", 600}}},
            {"boxes", boxes},
            {"facade", {{"x", fx}, {"y", fy}, {"w", fw}, {"h", fh}}},
            {"link", {{"feature_id", feature_id}, {"edge_index", 0}}}};
}

inline std::vector<FacadePhoto> facade_photos() {
    auto id_of = [](const std::string& name) -> std::uint64_t {
        const auto& list = buildings();
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (list[i].name == name) return i + 1;
        }
        return 0;
    };
    return {
        {"A0", id_of("A0"), facade_annotation(2, 3, false, false, id_of("A0"), 1)},
        {"B2", id_of("B2"), facade_annotation(3, 4, true, false, id_of("B2"), 2)},
        {"A1b", id_of("A1b"), facade_annotation(4, 3, true, true, id_of("A1b"), 3)},
    };
}

} // namespace ta::demo

#endif
