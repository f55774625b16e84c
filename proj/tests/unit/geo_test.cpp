#include "ta/date.hpp"
#include "ta/geo.hpp"

#include <gtest/gtest.h>

#include <random>

namespace {

using ta::Date;
using ta::GeoPoint;
using ta::MercatorPoint;
using ta::TileAddress;
using ta::TimeSpan;

// Frozen from a 40-digit mpmath evaluation of R*pi and R*ln(tan(pi/4 + phi/2)).
constexpr double kHalfWorld = 20037508.342789243;
constexpr double kMaxLatY = 20037508.343038818;

TEST(Mercator, OriginMapsToOrigin) {
    const MercatorPoint m = ta::lonlat_to_mercator({0, 0});
    EXPECT_EQ(m.x, 0.0);
    EXPECT_EQ(m.y, 0.0);
    const GeoPoint g = ta::mercator_to_lonlat({0, 0});
    EXPECT_EQ(g.lon, 0.0);
    EXPECT_EQ(g.lat, 0.0);
}

TEST(Mercator, AntimeridianIsHalfWorld) {
    const MercatorPoint m = ta::lonlat_to_mercator({180, 0});
    EXPECT_NEAR(m.x, kHalfWorld, 1e-6);
    EXPECT_NEAR(m.y, 0.0, 1e-9);
    const GeoPoint g = ta::mercator_to_lonlat({20037508.3427892, 0});
    EXPECT_NEAR(g.lon, 180.0, 1e-9);
    EXPECT_NEAR(g.lat, 0.0, 1e-12);
}

TEST(Mercator, MaxLatitudeReachesHalfWorld) {
    const MercatorPoint m = ta::lonlat_to_mercator({0, ta::EarthModel::max_lat});
    EXPECT_NEAR(m.x, 0.0, 1e-12);
    EXPECT_NEAR(m.y, kMaxLatY, 1e-6);
    EXPECT_NEAR(m.y, kHalfWorld, 1e-3);
    const GeoPoint back = ta::mercator_to_lonlat(m);
    EXPECT_NEAR(back.lat, ta::EarthModel::max_lat, 1e-9);
}

TEST(Mercator, RejectsOutOfRange) {
    EXPECT_THROW(ta::lonlat_to_mercator({0, 86}), ta::DomainError);
    EXPECT_THROW(ta::lonlat_to_mercator({0, -95}), ta::DomainError);
    EXPECT_THROW(ta::lonlat_to_mercator({181, 0}), ta::DomainError);
    EXPECT_THROW(ta::lonlat_to_mercator({NAN, 0}), ta::DomainError);
    EXPECT_THROW(ta::mercator_to_lonlat({0, 2.1e7}), ta::DomainError);
}

TEST(Mercator, NewYorkRoundTrip) {
    const GeoPoint p{-74.0060, 40.7128};
    const GeoPoint q = ta::mercator_to_lonlat(ta::lonlat_to_mercator(p));
    EXPECT_NEAR(q.lon, p.lon, 1e-9);
    EXPECT_NEAR(q.lat, p.lat, 1e-9);
}

TEST(Mercator, RandomRoundTripProperty) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> lon(-180, 180);
    std::uniform_real_distribution<double> lat(-ta::EarthModel::max_lat, ta::EarthModel::max_lat);
    for (int i = 0; i < 10000; ++i) {
        const GeoPoint p{lon(rng), lat(rng)};
        const GeoPoint q = ta::mercator_to_lonlat(ta::lonlat_to_mercator(p));
        ASSERT_LT(std::abs(q.lon - p.lon), 1e-9);
        ASSERT_LT(std::abs(q.lat - p.lat), 1e-9);
    }
}

TEST(Tiles, ZoomZeroIsSingleTile) {
    for (const GeoPoint p : {GeoPoint{-179.9, 85}, GeoPoint{0, 0}, GeoPoint{179.9, -85}}) {
        EXPECT_EQ(ta::lonlat_to_tile(p, 0), (TileAddress{0, 0, 0}));
    }
}

TEST(Tiles, SlippyExamples) {
    // Oracle: floor((lon+180)/360*2^z), floor((1 - ln(tan(phi) + sec(phi))/pi)/2*2^z)
    // evaluated with mpmath at 40 digits.
    EXPECT_EQ(ta::lonlat_to_tile({0, 0}, 1), (TileAddress{1, 1, 1}));
    EXPECT_EQ(ta::lonlat_to_tile({-74.0060, 40.7128}, 10), (TileAddress{10, 301, 385}));
    EXPECT_EQ(ta::lonlat_to_tile({180, -ta::EarthModel::max_lat}, 3), (TileAddress{3, 7, 7}));
}

TEST(Tiles, WorldAndQuadrantBounds) {
    const auto world = ta::tile_bounds({0, 0, 0});
    EXPECT_NEAR(world.lonlat.min_lon, -180, 1e-12);
    EXPECT_NEAR(world.lonlat.max_lon, 180, 1e-12);
    EXPECT_NEAR(world.lonlat.max_lat, 85.0511287798, 1e-9);
    EXPECT_NEAR(world.lonlat.min_lat, -85.0511287798, 1e-9);
    EXPECT_NEAR(world.mercator.max_x, kHalfWorld, 1e-6);

    const auto nw = ta::tile_bounds({1, 0, 0});
    EXPECT_NEAR(nw.lonlat.min_lon, -180, 1e-12);
    EXPECT_NEAR(nw.lonlat.max_lon, 0, 1e-12);
    EXPECT_NEAR(nw.lonlat.min_lat, 0, 1e-12);
    EXPECT_NEAR(nw.lonlat.max_lat, 85.0511287798, 1e-9);
}

TEST(Tiles, NewYorkTileContainsPoint) {
    const auto b = ta::tile_bounds({10, 301, 385});
    EXPECT_TRUE(b.lonlat.contains({-74.0060, 40.7128}));
}

TEST(Tiles, InvalidAddress) {
    EXPECT_FALSE((TileAddress{2, 4, 1}).valid());
    EXPECT_THROW(ta::tile_bounds({2, 4, 1}), ta::DomainError);
    EXPECT_THROW(ta::lonlat_to_tile({0, 0}, 31), ta::DomainError);
}

TEST(Tiles, ContainmentProperty) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> lon(-180, 180);
    std::uniform_real_distribution<double> lat(-85, 85);
    std::uniform_int_distribution<std::uint32_t> zoom(0, 18);
    for (int i = 0; i < 5000; ++i) {
        const GeoPoint p{lon(rng), lat(rng)};
        const auto t = ta::lonlat_to_tile(p, zoom(rng));
        const auto b = ta::tile_bounds(t);
        const double eps = 1e-9;
        ASSERT_GE(p.lon, b.lonlat.min_lon - eps);
        ASSERT_LE(p.lon, b.lonlat.max_lon + eps);
        ASSERT_GE(p.lat, b.lonlat.min_lat - eps);
        ASSERT_LE(p.lat, b.lonlat.max_lat + eps);
    }
}

TEST(Tiles, ChildrenPartitionParent) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 2000; ++i) {
        const std::uint32_t z = static_cast<std::uint32_t>(rng() % 20);
        const std::uint32_t dim = 1u << z;
        const TileAddress t{z, static_cast<std::uint32_t>(rng() % dim), static_cast<std::uint32_t>(rng() % dim)};
        const auto p = ta::tile_mercator_bounds(t);
        const auto c = ta::tile_children(t);
        const auto nw = ta::tile_mercator_bounds(c[0]);
        const auto ne = ta::tile_mercator_bounds(c[1]);
        const auto sw = ta::tile_mercator_bounds(c[2]);
        const auto se = ta::tile_mercator_bounds(c[3]);
        // Outer edges coincide with the parent, inner edges are shared exactly.
        ASSERT_EQ(nw.min_x, p.min_x);
        ASSERT_EQ(sw.min_x, p.min_x);
        ASSERT_EQ(ne.max_x, p.max_x);
        ASSERT_EQ(se.max_x, p.max_x);
        ASSERT_EQ(nw.max_y, p.max_y);
        ASSERT_EQ(ne.max_y, p.max_y);
        ASSERT_EQ(sw.min_y, p.min_y);
        ASSERT_EQ(se.min_y, p.min_y);
        ASSERT_EQ(nw.max_x, ne.min_x);
        ASSERT_EQ(sw.max_x, se.min_x);
        ASSERT_EQ(nw.min_y, sw.max_y);
        ASSERT_EQ(ne.min_y, se.max_y);
        ASSERT_NEAR(nw.width() + ne.width(), p.width(), 1e-9 * p.width());
    }
}

TEST(Tiles, LatitudeMonotonicity) {
    for (std::uint32_t z : {4u, 10u, 16u}) {
        std::uint32_t prev = ta::lonlat_to_tile({10, -84}, z).y;
        for (double lat = -83.5; lat < 85; lat += 0.5) {
            const std::uint32_t y = ta::lonlat_to_tile({10, lat}, z).y;
            ASSERT_LE(y, prev) << "z=" << z << " lat=" << lat;
            prev = y;
        }
    }
}

TEST(Dates, ParsesPartialForms) {
    EXPECT_EQ(Date::parse("1910"), Date::from_ymd(1910, 1, 1));
    EXPECT_EQ(Date::parse("1910-06"), Date::from_ymd(1910, 6, 1));
    EXPECT_EQ(Date::parse("1910-06-15").iso(), "1910-06-15");
    EXPECT_EQ(Date::parse("1970-01-01").days(), 0);
    EXPECT_EQ(Date::parse("1969-12-31").days(), -1);
    EXPECT_EQ(Date::parse("2000-02-29").iso(), "2000-02-29");
}

TEST(Dates, RejectsMalformed) {
    for (const char* s : {"", "191", "19x0", "1910-13", "1910-02-30", "1910/01/01", "1910-1-1", "1900-02-29"}) {
        EXPECT_THROW(Date::parse(s), ta::ValidationError) << s;
    }
}

TEST(TimeSpans, HalfOpenContainment) {
    const TimeSpan s = TimeSpan::make(Date::parse("1910-01-01"), Date::parse("1930-01-01"));
    EXPECT_TRUE(ta::timespan_contains(s, Date::parse("1920-06-01")));
    EXPECT_FALSE(ta::timespan_contains(s, Date::parse("1930-01-01")));
    EXPECT_TRUE(ta::timespan_contains(s, Date::parse("1910-01-01")));
    EXPECT_FALSE(ta::timespan_contains(s, Date::parse("1909-12-31")));
    const TimeSpan open = TimeSpan::make(Date::parse("1910-01-01"), std::nullopt);
    EXPECT_TRUE(ta::timespan_contains(open, Date::parse("2020-01-01")));
}

TEST(TimeSpans, RejectsEmptyInterval) {
    EXPECT_THROW(TimeSpan::make(Date::parse("1930"), Date::parse("1930")), ta::ValidationError);
    EXPECT_THROW(TimeSpan::make(Date::parse("1930"), Date::parse("1920")), ta::ValidationError);
}

TEST(TimeSpans, Intersection) {
    const auto a = TimeSpan::make(Date::parse("1910"), Date::parse("1930"));
    const auto b = TimeSpan::make(Date::parse("1920"), Date::parse("1940"));
    const auto c = TimeSpan::make(Date::parse("1930"), std::nullopt);
    EXPECT_EQ(ta::intersect(a, b), TimeSpan::make(Date::parse("1920"), Date::parse("1930")));
    EXPECT_FALSE(ta::intersect(a, c).has_value());
    EXPECT_EQ(ta::intersect(b, c), TimeSpan::make(Date::parse("1930"), Date::parse("1940")));
}

} // namespace
