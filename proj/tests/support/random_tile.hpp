#pragma once

// Random MVT layers covering every value type, geometry type and optional field.

#include "ta/mvt.hpp"

#include <random>
#include <string>

namespace ta_test {

inline ta::mvt::Value random_value(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> kind(0, 6);
    std::uniform_real_distribution<double> real(-1e6, 1e6);
    switch (kind(rng)) {
    case 0: return std::string("v") + std::to_string(rng() % 1000);
    case 1: return static_cast<float>(real(rng));
    case 2: return real(rng);
    case 3: return static_cast<std::int64_t>(rng());
    case 4: return static_cast<std::uint64_t>(rng());
    case 5: return ta::mvt::SInt{static_cast<std::int64_t>(rng()) >> (rng() % 60)};
    default: return (rng() & 1) == 1;
    }
}

inline ta::mvt::Layer random_layer(std::mt19937_64& rng, int index) {
    std::uniform_int_distribution<std::int32_t> coord(-64, 4160);
    ta::mvt::Layer l;
    l.name = "layer" + std::to_string(index);
    l.extent = 1u << (8 + rng() % 7);
    const std::size_t nk = rng() % 6;
    const std::size_t nv = nk == 0 ? 0 : 1 + rng() % 8;
    for (std::size_t i = 0; i < nk; ++i) l.keys.push_back("k" + std::to_string(i));
    for (std::size_t i = 0; i < nv; ++i) l.values.push_back(random_value(rng));
    const std::size_t nf = rng() % 6;
    for (std::size_t i = 0; i < nf; ++i) {
        ta::mvt::Feature f;
        if (rng() % 3 != 0) f.id = rng() % 100000;
        f.type = static_cast<ta::mvt::GeomType>(rng() % 4);
        if (nk > 0) {
            for (std::size_t t = rng() % 4; t > 0; --t) {
                f.tags.push_back(static_cast<std::uint32_t>(rng() % nk));
                f.tags.push_back(static_cast<std::uint32_t>(rng() % nv));
            }
        }
        const std::size_t min_pts = f.type == ta::mvt::GeomType::polygon ? 3 : f.type == ta::mvt::GeomType::linestring ? 2 : 1;
        const std::size_t npaths = f.type == ta::mvt::GeomType::unknown ? 0 : f.type == ta::mvt::GeomType::point ? 1 : 1 + rng() % 3;
        for (std::size_t p = 0; p < npaths; ++p) {
            ta::mvt::Path path;
            for (std::size_t k = min_pts + rng() % 5; k > 0; --k) path.push_back({coord(rng), coord(rng)});
            f.paths.push_back(std::move(path));
        }
        l.features.push_back(std::move(f));
    }
    return l;
}

} // namespace ta_test
