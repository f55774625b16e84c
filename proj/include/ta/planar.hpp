#ifndef TA_PLANAR_HPP
#define TA_PLANAR_HPP

// Planar polygon kernel shared by tiling, the store's quality checks and mesh
// generation. Rings here are open (the closing vertex is not repeated) unless a
// function says otherwise.

#include "ta/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace ta {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Twice the signed area of triangle (a, b, c); positive when counter-clockwise.
inline double orient(Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); }

using Ring = std::vector<Vec2>;

/// Shoelace area of an open ring. Positive for counter-clockwise in a y-up frame.
inline double signed_area(std::span<const Vec2> ring) {
    const std::size_t n = ring.size();
    if (n < 3) return 0.0;
    // Shift to the first vertex to keep the products small for Mercator-sized inputs.
    const Vec2 o = ring[0];
    double s = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        s += cross(ring[i] - o, ring[i + 1] - o);
    }
    return 0.5 * s;
}

/// Drops a repeated closing vertex if present.
inline Ring open_ring(std::span<const Vec2> ring) {
    Ring r(ring.begin(), ring.end());
    if (r.size() >= 2 && r.front() == r.back()) r.pop_back();
    return r;
}

inline Ring close_ring(std::span<const Vec2> ring) {
    Ring r(ring.begin(), ring.end());
    if (!r.empty() && !(r.front() == r.back())) r.push_back(r.front());
    return r;
}

inline std::size_t distinct_vertex_count(std::span<const Vec2> ring) {
    std::vector<Vec2> v(ring.begin(), ring.end());
    std::sort(v.begin(), v.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

namespace detail {
inline bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}
inline int sign(double v) { return (v > 0) - (v < 0); }
} // namespace detail

/// Closed-segment intersection test, touching endpoints included.
inline bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
    const int o1 = detail::sign(orient(a, b, c));
    const int o2 = detail::sign(orient(a, b, d));
    const int o3 = detail::sign(orient(c, d, a));
    const int o4 = detail::sign(orient(c, d, b));
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && detail::on_segment(a, b, c)) return true;
    if (o2 == 0 && detail::on_segment(a, b, d)) return true;
    if (o3 == 0 && detail::on_segment(c, d, a)) return true;
    if (o4 == 0 && detail::on_segment(c, d, b)) return true;
    return false;
}

/// Describes why a ring is not simple, or is empty when it is.
inline std::string ring_simplicity_problem(std::span<const Vec2> open) {
    const std::size_t n = open.size();
    if (n < 3) return "ring has fewer than 3 vertices";
    if (distinct_vertex_count(open) != n) return "ring repeats a vertex (self-touching)";
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = open[i];
        const Vec2 b = open[(i + 1) % n];
        for (std::size_t j = i + 1; j < n; ++j) {
            const Vec2 c = open[j];
            const Vec2 d = open[(j + 1) % n];
            const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if (adjacent) {
                // Adjacent edges share exactly one endpoint; anything more is a fold-back.
                const Vec2 shared = (j == i + 1) ? b : a;
                const Vec2 p = (j == i + 1) ? a : b;
                const Vec2 q = (j == i + 1) ? d : c;
                if (orient(p, shared, q) == 0.0 && dot(p - shared, q - shared) > 0) {
                    return "ring folds back on itself at vertex " + std::to_string(j == i + 1 ? j : i);
                }
                continue;
            }
            if (segments_intersect(a, b, c, d)) {
                return "edges " + std::to_string(i) + " and " + std::to_string(j) + " intersect";
            }
        }
    }
    return {};
}

inline bool is_simple_ring(std::span<const Vec2> open) { return ring_simplicity_problem(open).empty(); }

/// Even-odd point-in-ring test; points on the boundary may go either way.
inline bool point_in_ring(Vec2 p, std::span<const Vec2> open) {
    bool inside = false;
    const std::size_t n = open.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2 a = open[i];
        const Vec2 b = open[j];
        if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) {
            inside = !inside;
        }
    }
    return inside;
}

struct Rect {
    double min_x = 0.0;
    double min_y = 0.0;
    double max_x = 0.0;
    double max_y = 0.0;

    bool contains(Vec2 p) const { return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y; }
};

/// Sutherland-Hodgman against an axis-aligned rectangle. Input and output are open rings.
inline Ring clip_ring_to_rect(std::span<const Vec2> open, const Rect& r) {
    Ring out(open.begin(), open.end());
    auto clip_edge = [&](auto inside, auto intersect) {
        if (out.empty()) return;
        Ring in;
        in.swap(out);
        Vec2 prev = in.back();
        bool prev_in = inside(prev);
        for (const Vec2 cur : in) {
            const bool cur_in = inside(cur);
            if (cur_in) {
                if (!prev_in) out.push_back(intersect(prev, cur));
                out.push_back(cur);
            } else if (prev_in) {
                out.push_back(intersect(prev, cur));
            }
            prev = cur;
            prev_in = cur_in;
        }
    };
    auto at_x = [](Vec2 a, Vec2 b, double x) {
        const double t = (x - a.x) / (b.x - a.x);
        return Vec2{x, a.y + t * (b.y - a.y)};
    };
    auto at_y = [](Vec2 a, Vec2 b, double y) {
        const double t = (y - a.y) / (b.y - a.y);
        return Vec2{a.x + t * (b.x - a.x), y};
    };
    clip_edge([&](Vec2 p) { return p.x >= r.min_x; }, [&](Vec2 a, Vec2 b) { return at_x(a, b, r.min_x); });
    clip_edge([&](Vec2 p) { return p.x <= r.max_x; }, [&](Vec2 a, Vec2 b) { return at_x(a, b, r.max_x); });
    clip_edge([&](Vec2 p) { return p.y >= r.min_y; }, [&](Vec2 a, Vec2 b) { return at_y(a, b, r.min_y); });
    clip_edge([&](Vec2 p) { return p.y <= r.max_y; }, [&](Vec2 a, Vec2 b) { return at_y(a, b, r.max_y); });
    if (out.size() < 3) out.clear();
    return out;
}

/// Sutherland-Hodgman against a convex counter-clockwise clip polygon.
inline Ring clip_ring_to_convex(std::span<const Vec2> subject, std::span<const Vec2> convex_ccw) {
    Ring out(subject.begin(), subject.end());
    const std::size_t m = convex_ccw.size();
    for (std::size_t e = 0; e < m && !out.empty(); ++e) {
        const Vec2 a = convex_ccw[e];
        const Vec2 b = convex_ccw[(e + 1) % m];
        Ring in;
        in.swap(out);
        Vec2 prev = in.back();
        double prev_side = orient(a, b, prev);
        for (const Vec2 cur : in) {
            const double side = orient(a, b, cur);
            if (side >= 0) {
                if (prev_side < 0) {
                    const double t = prev_side / (prev_side - side);
                    out.push_back(prev + t * (cur - prev));
                }
                out.push_back(cur);
            } else if (prev_side >= 0) {
                const double t = prev_side / (prev_side - side);
                out.push_back(prev + t * (cur - prev));
            }
            prev = cur;
            prev_side = side;
        }
    }
    if (out.size() < 3) out.clear();
    return out;
}

/// Splits a polyline into the runs that lie inside the rectangle (Liang-Barsky per segment).
inline std::vector<std::vector<Vec2>> clip_polyline_to_rect(std::span<const Vec2> line, const Rect& r) {
    std::vector<std::vector<Vec2>> parts;
    std::vector<Vec2> cur;
    auto flush = [&] {
        if (cur.size() >= 2) parts.push_back(std::move(cur));
        cur.clear();
    };
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        const Vec2 a = line[i];
        const Vec2 d = line[i + 1] - a;
        double t0 = 0.0;
        double t1 = 1.0;
        const std::array<double, 4> p{-d.x, d.x, -d.y, d.y};
        const std::array<double, 4> q{a.x - r.min_x, r.max_x - a.x, a.y - r.min_y, r.max_y - a.y};
        bool visible = true;
        for (int k = 0; k < 4 && visible; ++k) {
            if (p[k] == 0.0) {
                if (q[k] < 0.0) visible = false;
            } else {
                const double t = q[k] / p[k];
                if (p[k] < 0.0) {
                    t0 = std::max(t0, t);
                } else {
                    t1 = std::min(t1, t);
                }
                if (t0 > t1) visible = false;
            }
        }
        if (!visible) {
            flush();
            continue;
        }
        const Vec2 s = t0 == 0.0 ? a : a + t0 * d;
        const Vec2 e = t1 == 1.0 ? line[i + 1] : a + t1 * d;
        if (cur.empty() || !(cur.back() == s)) {
            flush();
            cur.push_back(s);
        }
        cur.push_back(e);
        if (t1 < 1.0) flush();
    }
    flush();
    return parts;
}

using Triangle = std::array<std::uint32_t, 3>;

namespace detail {

inline bool point_in_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c) {
    return orient(a, b, p) >= 0 && orient(b, c, p) >= 0 && orient(c, a, p) >= 0;
}

/// Splices hole rings into the outer index sequence with bridge edges.
inline void bridge_holes(std::vector<std::uint32_t>& outer, const std::vector<Vec2>& pts,
                         std::vector<std::vector<std::uint32_t>> holes) {
    std::sort(holes.begin(), holes.end(), [&](const auto& a, const auto& b) {
        auto maxx = [&](const auto& h) {
            double m = -std::numeric_limits<double>::infinity();
            for (auto i : h) m = std::max(m, pts[i].x);
            return m;
        };
        return maxx(a) > maxx(b);
    });
    for (auto& hole : holes) {
        // Rightmost hole vertex M.
        std::size_t mi = 0;
        for (std::size_t i = 1; i < hole.size(); ++i) {
            const Vec2 p = pts[hole[i]];
            const Vec2 q = pts[hole[mi]];
            if (p.x > q.x || (p.x == q.x && p.y < q.y)) mi = i;
        }
        const Vec2 m = pts[hole[mi]];
        // Closest edge hit by the ray M + t(1, 0).
        const std::size_t n = outer.size();
        double best_x = std::numeric_limits<double>::infinity();
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2 a = pts[outer[i]];
            const Vec2 b = pts[outer[(i + 1) % n]];
            if ((a.y > m.y) == (b.y > m.y) && a.y != m.y && b.y != m.y) continue;
            if (a.y == b.y) {
                if (a.y != m.y) continue;
                const double x = std::min(a.x, b.x);
                if (x >= m.x && x < best_x) {
                    best_x = x;
                    best = a.x < b.x ? i : (i + 1) % n;
                }
                continue;
            }
            const double x = a.x + (m.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (x >= m.x && x < best_x) {
                best_x = x;
                best = a.x > b.x ? i : (i + 1) % n;
            }
        }
        if (best == n) throw GeometryError("hole lies outside its exterior ring");
        const Vec2 hit{best_x, m.y};
        std::size_t bridge = best;
        const Vec2 pcand = pts[outer[best]];
        if (!(pcand == hit)) {
            // Any reflex vertex inside triangle (M, hit, P) blocks the bridge; take the one with
            // the smallest angle to the ray.
            double best_tan = std::numeric_limits<double>::infinity();
            double best_dist = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) {
                const Vec2 v = pts[outer[i]];
                if (i == best || v == m) continue;
                const Vec2 prev = pts[outer[(i + n - 1) % n]];
                const Vec2 next = pts[outer[(i + 1) % n]];
                if (orient(prev, v, next) > 0) continue; // convex
                const bool inside = (pcand.y >= m.y)
                                        ? point_in_triangle(v, m, hit, pcand)
                                        : point_in_triangle(v, m, pcand, hit);
                if (!inside) continue;
                const double tan_v = std::abs(v.y - m.y) / (v.x - m.x);
                const double dist = norm(v - m);
                if (v.x > m.x && (tan_v < best_tan || (tan_v == best_tan && dist < best_dist))) {
                    best_tan = tan_v;
                    best_dist = dist;
                    bridge = i;
                }
            }
        }
        std::vector<std::uint32_t> merged;
        merged.reserve(outer.size() + hole.size() + 2);
        merged.insert(merged.end(), outer.begin(), outer.begin() + static_cast<std::ptrdiff_t>(bridge) + 1);
        for (std::size_t k = 0; k <= hole.size(); ++k) {
            merged.push_back(hole[(mi + k) % hole.size()]);
        }
        merged.push_back(outer[bridge]);
        merged.insert(merged.end(), outer.begin() + static_cast<std::ptrdiff_t>(bridge) + 1, outer.end());
        outer.swap(merged);
    }
}

} // namespace detail

/// Ear-clipping triangulation of a polygon with holes. The exterior ring must be
/// counter-clockwise and holes clockwise (all open). Returned indices address the
/// concatenation exterior ++ holes[0] ++ holes[1] ++ ...; triangles are counter-clockwise.
inline std::vector<Triangle> triangulate(std::span<const Vec2> exterior,
                                         std::span<const std::vector<Vec2>> holes = {}) {
    std::vector<Vec2> pts(exterior.begin(), exterior.end());
    std::vector<std::uint32_t> outer(pts.size());
    std::iota(outer.begin(), outer.end(), 0u);
    std::vector<std::vector<std::uint32_t>> hole_idx;
    for (const auto& h : holes) {
        std::vector<std::uint32_t> idx;
        for (const Vec2 p : h) {
            idx.push_back(static_cast<std::uint32_t>(pts.size()));
            pts.push_back(p);
        }
        hole_idx.push_back(std::move(idx));
    }
    if (outer.size() < 3) throw GeometryError("polygon needs at least 3 vertices to triangulate");
    if (!hole_idx.empty()) detail::bridge_holes(outer, pts, std::move(hole_idx));

    std::vector<Triangle> tris;
    std::list<std::uint32_t> poly(outer.begin(), outer.end());
    auto prev_of = [&](std::list<std::uint32_t>::iterator it) {
        return it == poly.begin() ? std::prev(poly.end()) : std::prev(it);
    };
    auto next_of = [&](std::list<std::uint32_t>::iterator it) {
        auto n = std::next(it);
        return n == poly.end() ? poly.begin() : n;
    };
    auto is_ear = [&](std::list<std::uint32_t>::iterator it) {
        const Vec2 a = pts[*prev_of(it)];
        const Vec2 b = pts[*it];
        const Vec2 c = pts[*next_of(it)];
        if (orient(a, b, c) <= 0) return false;
        for (auto jt = poly.begin(); jt != poly.end(); ++jt) {
            const Vec2 p = pts[*jt];
            if (p == a || p == b || p == c) continue;
            if (detail::point_in_triangle(p, a, b, c)) return false;
        }
        return true;
    };

    auto it = poly.begin();
    std::size_t stalled = 0;
    while (poly.size() > 3) {
        if (is_ear(it)) {
            tris.push_back({*prev_of(it), *it, *next_of(it)});
            auto nx = next_of(it);
            poly.erase(it);
            it = nx;
            stalled = 0;
            continue;
        }
        it = next_of(it);
        if (++stalled < poly.size()) continue;
        // No proper ear: the remaining chain has degenerate (collinear) vertices or
        // numerical noise. Clip the flattest convex-or-straight vertex.
        auto pick = poly.end();
        double best = -std::numeric_limits<double>::infinity();
        for (auto jt = poly.begin(); jt != poly.end(); ++jt) {
            const double o = orient(pts[*prev_of(jt)], pts[*jt], pts[*next_of(jt)]);
            if (o >= 0 && (pick == poly.end() || -o > best)) {
                best = -o;
                pick = jt;
            }
        }
        if (pick == poly.end()) pick = poly.begin();
        tris.push_back({*prev_of(pick), *pick, *next_of(pick)});
        it = next_of(pick);
        poly.erase(pick);
        stalled = 0;
    }
    if (poly.size() == 3) {
        auto a = poly.begin();
        tris.push_back({*a, *std::next(a), *std::next(a, 2)});
    }
    return tris;
}

/// Polygon as an exterior ring plus holes, all open rings.
struct PlanarPolygon {
    Ring exterior;
    std::vector<Ring> holes;
};

/// Area of the intersection of two simple polygons (holes allowed). B is ear-clipped
/// into triangles, and A is Sutherland-Hodgman-clipped against each convex triangle.
inline double intersection_area(const PlanarPolygon& a, const PlanarPolygon& b) {
    auto ccw = [](Ring r) {
        if (signed_area(r) < 0) std::reverse(r.begin(), r.end());
        return r;
    };
    auto cw = [](Ring r) {
        if (signed_area(r) > 0) std::reverse(r.begin(), r.end());
        return r;
    };
    const Ring bext = ccw(b.exterior);
    std::vector<Ring> bholes;
    for (const auto& h : b.holes) bholes.push_back(cw(h));
    std::vector<Vec2> bpts = bext;
    for (const auto& h : bholes) bpts.insert(bpts.end(), h.begin(), h.end());
    const auto tris = triangulate(bext, bholes);

    const Ring aext = ccw(a.exterior);
    std::vector<Ring> aholes;
    for (const auto& h : a.holes) aholes.push_back(ccw(h));

    double total = 0.0;
    for (const auto& t : tris) {
        const std::array<Vec2, 3> tri{bpts[t[0]], bpts[t[1]], bpts[t[2]]};
        if (orient(tri[0], tri[1], tri[2]) <= 0) continue;
        double part = signed_area(clip_ring_to_convex(aext, tri));
        for (const auto& h : aholes) part -= signed_area(clip_ring_to_convex(h, tri));
        total += part;
    }
    return std::max(total, 0.0);
}

} // namespace ta

#endif // TA_PLANAR_HPP
