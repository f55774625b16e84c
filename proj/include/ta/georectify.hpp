#ifndef TA_GEORECTIFY_HPP
#define TA_GEORECTIFY_HPP

// Control-point transform fitting and raster warping for scanned maps.
//
// Transforms are bivariate polynomials. Coefficients are ordered by total degree,
// then by descending power of u:
//
//     1, u, v, u^2, uv, v^2, u^3, u^2 v, u v^2, v^3
//
// Degree >= 2 transforms evaluate the monomials on normalized inputs
// ((u - origin.x) / scale, (v - origin.y) / scale). Degree-1 (affine) transforms are
// always stored with origin (0, 0) and scale 1, so their coefficients read directly as
// x = c0 + c1 u + c2 v.

#include "ta/error.hpp"
#include "ta/geo.hpp"
#include "ta/planar.hpp"
#include "ta/raster.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace ta {

enum class TransformKind { affine, polynomial };

struct TransformSpec {
    TransformKind kind = TransformKind::affine;
    int degree = 1;

    static constexpr TransformSpec affine() { return {TransformKind::affine, 1}; }
    static TransformSpec polynomial(int degree) {
        if (degree < 1 || degree > 3) {
            throw DomainError("polynomial degree must be 1, 2 or 3, got " + std::to_string(degree));
        }
        return {TransformKind::polynomial, degree};
    }

    /// "affine", "poly1", "poly2" or "poly3".
    static TransformSpec parse(const std::string& s) {
        if (s == "affine") return affine();
        if (s.size() == 5 && s.starts_with("poly") && s[4] >= '1' && s[4] <= '3') {
            return polynomial(s[4] - '0');
        }
        throw ValidationError("unknown transform kind '" + s + "' (expected affine, poly1, poly2 or poly3)");
    }

    std::string name() const {
        return kind == TransformKind::affine ? "affine" : "poly" + std::to_string(degree);
    }
};

constexpr std::size_t monomial_count(int degree) {
    return static_cast<std::size_t>((degree + 1) * (degree + 2) / 2);
}

/// Monomials of (u, v) up to `degree` in the documented order.
inline std::array<double, 10> monomials(double u, double v, int degree) {
    std::array<double, 10> m{};
    std::array<double, 4> up{1.0, u, u * u, u * u * u};
    std::array<double, 4> vp{1.0, v, v * v, v * v * v};
    std::size_t k = 0;
    for (int d = 0; d <= degree; ++d) {
        for (int i = d; i >= 0; --i) m[k++] = up[static_cast<std::size_t>(i)] * vp[static_cast<std::size_t>(d - i)];
    }
    return m;
}

struct Transform2D {
    TransformKind kind = TransformKind::affine;
    int degree = 1;
    std::vector<double> coeffs_x;
    std::vector<double> coeffs_y;
    Vec2 origin{0.0, 0.0};
    double scale = 1.0;

    static Transform2D identity() { return {TransformKind::affine, 1, {0, 1, 0}, {0, 0, 1}, {}, 1.0}; }

    void validate() const {
        if (degree < 1 || degree > 3) throw ValidationError("transform degree must be 1..3");
        if (kind == TransformKind::affine && degree != 1) throw ValidationError("affine transform must have degree 1");
        const std::size_t m = monomial_count(degree);
        if (coeffs_x.size() != m || coeffs_y.size() != m) {
            throw ValidationError("transform of degree " + std::to_string(degree) + " needs " +
                                  std::to_string(m) + " coefficients per axis");
        }
        auto finite = [](double v) { return std::isfinite(v); };
        if (!std::all_of(coeffs_x.begin(), coeffs_x.end(), finite) ||
            !std::all_of(coeffs_y.begin(), coeffs_y.end(), finite) || !std::isfinite(origin.x) ||
            !std::isfinite(origin.y) || !(std::isfinite(scale) && scale > 0)) {
            throw ValidationError("transform coefficients must be finite");
        }
    }

    Vec2 evaluate(Vec2 p) const {
        const auto m = monomials((p.x - origin.x) / scale, (p.y - origin.y) / scale, degree);
        Vec2 out;
        for (std::size_t i = 0; i < coeffs_x.size(); ++i) {
            out.x += coeffs_x[i] * m[i];
            out.y += coeffs_y[i] * m[i];
        }
        return out;
    }

    friend bool operator==(const Transform2D&, const Transform2D&) = default;
};

/// Pixel position on the scanned map: x right, y down, origin at the top-left corner.
using PixelPoint = Vec2;

struct ControlPointPair {
    PixelPoint source;
    GeoPoint target;
};

inline MercatorPoint apply_transform(const Transform2D& t, PixelPoint p) {
    const Vec2 r = t.evaluate(p);
    return {r.x, r.y};
}

namespace detail {

inline void require_pairs_valid(std::span<const ControlPointPair> pairs) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& s = pairs[i].source;
        if (!std::isfinite(s.x) || !std::isfinite(s.y) || s.x < 0 || s.y < 0) {
            throw ValidationError("control point " + std::to_string(i) +
                                  ": pixel coordinates must be finite and non-negative");
        }
        if (!is_valid(pairs[i].target)) {
            throw ValidationError("control point " + std::to_string(i) + ": target outside projectable range");
        }
    }
}

inline std::string describe_degeneracy(std::span<const Vec2> from, int degree, const char* role, double cond) {
    std::vector<Vec2> distinct(from.begin(), from.end());
    std::sort(distinct.begin(), distinct.end(),
              [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    const std::size_t need = monomial_count(degree);
    std::ostringstream os;
    if (distinct.size() < need) {
        os << "only " << distinct.size() << " distinct " << role << " points; degree " << degree
           << " needs " << need;
        return os.str();
    }
    // Collinearity: smallest principal spread relative to the largest.
    Vec2 c{};
    for (const Vec2 p : distinct) c = c + p;
    c = (1.0 / static_cast<double>(distinct.size())) * c;
    double sxx = 0, syy = 0, sxy = 0;
    for (const Vec2 p : distinct) {
        const Vec2 d = p - c;
        sxx += d.x * d.x;
        syy += d.y * d.y;
        sxy += d.x * d.y;
    }
    const double tr = sxx + syy;
    const double disc = std::sqrt(std::max(0.0, (sxx - syy) * (sxx - syy) / 4 + sxy * sxy));
    const double lo = tr / 2 - disc;
    const double hi = tr / 2 + disc;
    if (hi <= 0 || lo <= 1e-12 * hi) {
        os << role << " points are collinear";
        return os.str();
    }
    os << role << " points do not determine a degree-" << degree
       << " polynomial (normal matrix condition number " << cond << " exceeds 1e12)";
    return os.str();
}

/// Least squares over normalized inputs with column-scaled normal equations.
inline Transform2D fit_polynomial(std::span<const Vec2> from, std::span<const Vec2> to, TransformSpec spec,
                                  const char* role) {
    const int d = spec.degree;
    const std::size_t m = monomial_count(d);
    const std::size_t n = from.size();
    if (n < m) {
        throw ArityError(spec.name() + " fit needs at least " + std::to_string(m) +
                         " control-point pairs, got " + std::to_string(n));
    }
    Vec2 c{};
    for (const Vec2 p : from) c = c + p;
    c = (1.0 / static_cast<double>(n)) * c;
    double spread = 0.0;
    for (const Vec2 p : from) {
        const Vec2 q = p - c;
        spread += dot(q, q);
    }
    spread = std::sqrt(spread / static_cast<double>(n));
    if (!(spread > 0)) {
        throw DegeneracyError(std::string("all ") + role + " points coincide");
    }

    Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    Eigen::MatrixXd b(static_cast<Eigen::Index>(n), 2);
    for (std::size_t i = 0; i < n; ++i) {
        const auto mono = monomials((from[i].x - c.x) / spread, (from[i].y - c.y) / spread, d);
        for (std::size_t j = 0; j < m; ++j) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = mono[j];
        b(static_cast<Eigen::Index>(i), 0) = to[i].x;
        b(static_cast<Eigen::Index>(i), 1) = to[i].y;
    }
    // Centre the outputs so the constant term absorbs the large Mercator offset exactly.
    const Eigen::RowVector2d out_mean = b.colwise().mean();
    b.rowwise() -= out_mean;
    const Eigen::VectorXd col_norm = a.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        if (!(col_norm(j) > 0)) {
            throw DegeneracyError(describe_degeneracy(from, d, role, INFINITY));
        }
        a.col(j) /= col_norm(j);
    }
    const Eigen::MatrixXd normal = a.transpose() * a;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    const double cond = lmin > 0 ? lmax / lmin : INFINITY;
    if (!(cond <= 1e12)) {
        throw DegeneracyError(describe_degeneracy(from, d, role, cond));
    }
    // QR on the scaled design matrix avoids squaring the condition number; one
    // refinement step recovers the last few digits for exactly determined fits.
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd sol = qr.solve(b);
    sol += qr.solve(Eigen::MatrixXd(b - a * sol));
    for (Eigen::Index j = 0; j < sol.rows(); ++j) sol.row(j) /= col_norm(j);
    sol.row(0) += out_mean;

    Transform2D t;
    t.kind = spec.kind;
    t.degree = d;
    t.coeffs_x.resize(m);
    t.coeffs_y.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
        t.coeffs_x[j] = sol(static_cast<Eigen::Index>(j), 0);
        t.coeffs_y[j] = sol(static_cast<Eigen::Index>(j), 1);
    }
    if (d == 1) {
        // Re-express x = c0 + c1 (u - u0)/s + c2 (v - v0)/s in raw inputs.
        for (auto* cf : {&t.coeffs_x, &t.coeffs_y}) {
            auto& k = *cf;
            k[1] /= spread;
            k[2] /= spread;
            k[0] -= k[1] * c.x + k[2] * c.y;
        }
    } else {
        t.origin = c;
        t.scale = spread;
    }
    return t;
}

} // namespace detail

/// Least-squares fit from scan pixels to Mercator meters.
inline Transform2D fit_transform(std::span<const ControlPointPair> pairs, TransformSpec spec) {
    detail::require_pairs_valid(pairs);
    std::vector<Vec2> from;
    std::vector<Vec2> to;
    for (const auto& p : pairs) {
        from.push_back(p.source);
        const MercatorPoint m = lonlat_to_mercator(p.target);
        to.push_back({m.x, m.y});
    }
    return detail::fit_polynomial(from, to, spec, "source");
}

/// Least-squares fit from Mercator meters back to scan pixels, used for resampling.
inline Transform2D fit_inverse(std::span<const ControlPointPair> pairs, TransformSpec spec) {
    detail::require_pairs_valid(pairs);
    std::vector<Vec2> from;
    std::vector<Vec2> to;
    for (const auto& p : pairs) {
        const MercatorPoint m = lonlat_to_mercator(p.target);
        from.push_back({m.x, m.y});
        to.push_back(p.source);
    }
    return detail::fit_polynomial(from, to, spec, "target");
}

struct ResidualReport {
    /// (pair index, distance in Mercator meters)
    std::vector<std::pair<std::size_t, double>> per_pair;
    double rms = 0.0;
};

inline ResidualReport residual_report(const Transform2D& t, std::span<const ControlPointPair> pairs) {
    t.validate();
    if (pairs.empty()) throw ArityError("residual report needs at least one control-point pair");
    ResidualReport r;
    double sum = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const MercatorPoint fitted = apply_transform(t, pairs[i].source);
        const MercatorPoint target = lonlat_to_mercator(pairs[i].target);
        const double e = std::hypot(fitted.x - target.x, fitted.y - target.y);
        r.per_pair.emplace_back(i, e);
        sum += e * e;
    }
    r.rms = std::sqrt(sum / static_cast<double>(pairs.size()));
    return r;
}

enum class Resampling { nearest, bilinear };

/// Output raster georeference: Mercator bounds and pixel dimensions, north-up.
struct OutputGrid {
    MercatorBox bounds;
    int width = 0;
    int height = 0;
};

namespace detail {
inline std::uint8_t round_sample(double v) {
    // Half away from zero; samples are non-negative.
    return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}
} // namespace detail

/// Resamples `img` onto `grid`. `inv` maps Mercator meters to source pixel coordinates,
/// where pixel (c, r) covers [c, c+1) x [r, r+1). Output is RGBA; samples that fall
/// outside the source are fully transparent.
inline RasterImage warp_raster(const RasterImage& img, const Transform2D& inv, const OutputGrid& grid,
                               Resampling resampling) {
    inv.validate();
    if (grid.width <= 0 || grid.height <= 0 || !(grid.bounds.width() > 0) || !(grid.bounds.height() > 0)) {
        throw DomainError("output grid has zero area");
    }
    if (img.channels != 1 && img.channels != 4) throw DomainError("source raster must have 1 or 4 channels");
    RasterImage out(grid.width, grid.height, 4);
    const double dx = grid.bounds.width() / grid.width;
    const double dy = grid.bounds.height() / grid.height;
    const int sc = img.channels;

    auto store = [&](std::uint8_t* dst, const double* v) {
        if (sc == 1) {
            dst[0] = dst[1] = dst[2] = detail::round_sample(v[0]);
            dst[3] = 255;
        } else {
            for (int k = 0; k < 4; ++k) dst[k] = detail::round_sample(v[k]);
        }
    };

    for (int j = 0; j < grid.height; ++j) {
        const double my = grid.bounds.max_y - (j + 0.5) * dy;
        for (int i = 0; i < grid.width; ++i) {
            const double mx = grid.bounds.min_x + (i + 0.5) * dx;
            const Vec2 s = inv.evaluate({mx, my});
            std::uint8_t* dst = out.pixel(i, j);
            double v[4] = {0, 0, 0, 0};
            if (resampling == Resampling::nearest) {
                const double fx = std::floor(s.x);
                const double fy = std::floor(s.y);
                if (!(fx >= 0 && fx < img.width && fy >= 0 && fy < img.height)) continue;
                const std::uint8_t* src = img.pixel(static_cast<int>(fx), static_cast<int>(fy));
                for (int k = 0; k < sc; ++k) v[k] = src[k];
            } else {
                if (!(s.x >= 0 && s.x <= img.width && s.y >= 0 && s.y <= img.height)) continue;
                const double x = s.x - 0.5;
                const double y = s.y - 0.5;
                const double x0f = std::floor(x);
                const double y0f = std::floor(y);
                const double tx = x - x0f;
                const double ty = y - y0f;
                auto cx = [&](double c) { return static_cast<int>(std::clamp(c, 0.0, img.width - 1.0)); };
                auto cy = [&](double c) { return static_cast<int>(std::clamp(c, 0.0, img.height - 1.0)); };
                const int x0 = cx(x0f), x1 = cx(x0f + 1), y0 = cy(y0f), y1 = cy(y0f + 1);
                for (int k = 0; k < sc; ++k) {
                    const double top = (1 - tx) * img.pixel(x0, y0)[k] + tx * img.pixel(x1, y0)[k];
                    const double bot = (1 - tx) * img.pixel(x0, y1)[k] + tx * img.pixel(x1, y1)[k];
                    v[k] = (1 - ty) * top + ty * bot;
                }
            }
            store(dst, v);
        }
    }
    return out;
}

/// Mercator bounds of the warped scan: the forward transform sampled along the image border.
inline MercatorBox warped_bounds(const Transform2D& forward, int width, int height) {
    MercatorBox b{INFINITY, INFINITY, -INFINITY, -INFINITY};
    constexpr int steps = 16;
    auto add = [&](double u, double v) {
        const MercatorPoint m = apply_transform(forward, {u, v});
        b.min_x = std::min(b.min_x, m.x);
        b.max_x = std::max(b.max_x, m.x);
        b.min_y = std::min(b.min_y, m.y);
        b.max_y = std::max(b.max_y, m.y);
    };
    for (int k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        add(t * width, 0);
        add(t * width, height);
        add(0, t * height);
        add(width, t * height);
    }
    return b;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const Transform2D& t) {
    nlohmann::json j;
    j["kind"] = t.kind == TransformKind::affine ? "affine" : "polynomial";
    j["degree"] = t.degree;
    j["coeffs_x"] = t.coeffs_x;
    j["coeffs_y"] = t.coeffs_y;
    if (t.degree > 1) {
        j["origin"] = {t.origin.x, t.origin.y};
        j["scale"] = t.scale;
    }
    return j;
}

inline Transform2D transform_from_json(const nlohmann::json& j) {
    try {
        Transform2D t;
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "affine") {
            t.kind = TransformKind::affine;
        } else if (kind == "polynomial") {
            t.kind = TransformKind::polynomial;
        } else {
            throw ValidationError("transform kind must be 'affine' or 'polynomial'");
        }
        t.degree = j.at("degree").get<int>();
        t.coeffs_x = j.at("coeffs_x").get<std::vector<double>>();
        t.coeffs_y = j.at("coeffs_y").get<std::vector<double>>();
        if (j.contains("origin")) {
            const auto o = j.at("origin").get<std::vector<double>>();
            if (o.size() != 2) throw ValidationError("transform origin must have 2 entries");
            t.origin = {o[0], o[1]};
        }
        if (j.contains("scale")) t.scale = j.at("scale").get<double>();
        t.validate();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed transform document: ") + e.what());
    }
}

/// Reads the `px,py,lon,lat` control-point CSV.
inline std::vector<ControlPointPair> read_control_points(std::istream& in, const std::string& source = "<input>") {
    std::vector<ControlPointPair> pairs;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            const auto b = cell.find_first_not_of(" \t");
            const auto e = cell.find_last_not_of(" \t");
            cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
        }
        if (!header) {
            if (cells != std::vector<std::string>{"px", "py", "lon", "lat"}) {
                throw ValidationError(source + ":" + std::to_string(lineno) + ": expected header 'px,py,lon,lat'");
            }
            header = true;
            continue;
        }
        if (cells.size() != 4) {
            throw ValidationError(source + ":" + std::to_string(lineno) + ": expected 4 columns, got " +
                                  std::to_string(cells.size()));
        }
        double v[4];
        for (int k = 0; k < 4; ++k) {
            std::size_t used = 0;
            try {
                v[k] = std::stod(cells[static_cast<std::size_t>(k)], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != cells[static_cast<std::size_t>(k)].size()) {
                throw ValidationError(source + ":" + std::to_string(lineno) + ": '" +
                                      cells[static_cast<std::size_t>(k)] + "' is not a number");
            }
        }
        pairs.push_back({{v[0], v[1]}, {v[2], v[3]}});
    }
    if (!header) throw ValidationError(source + ": missing 'px,py,lon,lat' header");
    return pairs;
}

inline void write_control_points(std::ostream& out, std::span<const ControlPointPair> pairs) {
    out << "px,py,lon,lat\n";
    out.precision(17);
    for (const auto& p : pairs) {
        out << p.source.x << ',' << p.source.y << ',' << p.target.lon << ',' << p.target.lat << '\n';
    }
}

} // namespace ta

#endif // TA_GEORECTIFY_HPP
