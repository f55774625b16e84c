#ifndef TA_FACADE_HPP
#define TA_FACADE_HPP

// Facade photo post-processing: vanishing points, rectification, grid
// regularization and procedural parameter extraction.
//
// Image coordinates are pixels with y pointing down. Facade parameters are in
// meters with heights measured up from the bottom edge of the facade box.

#include "ta/error.hpp"
#include "ta/planar.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace ta::facade {

struct LineSegment {
    Vec2 a;
    Vec2 b;

    double length() const { return norm(b - a); }
};

enum class Label { window, window_sill, cornice, roof_cornice, storefront, entry, stair };

inline constexpr std::array<const char*, 7> label_names{"window",     "window_sill", "cornice", "roof_cornice",
                                                        "storefront", "entry",       "stair"};

inline const char* label_name(Label l) { return label_names[static_cast<std::size_t>(l)]; }

inline Label parse_label(const std::string& s) {
    for (std::size_t i = 0; i < label_names.size(); ++i) {
        if (s == label_names[i]) return static_cast<Label>(i);
    }
    throw ValidationError("unknown facade label '" + s + "'");
}

struct FacadeBox {
    Label label = Label::window;
    double x = 0, y = 0, w = 0, h = 0;
    double confidence = 1.0;

    double cx() const { return x + 0.5 * w; }
    double cy() const { return y + 0.5 * h; }
    friend bool operator==(const FacadeBox&, const FacadeBox&) = default;
};

inline void validate_box(const FacadeBox& b) {
    if (!(b.w > 0) || !(b.h > 0) || !std::isfinite(b.x) || !std::isfinite(b.y) || !std::isfinite(b.w) ||
        !std::isfinite(b.h)) {
        throw ValidationError(std::string(label_name(b.label)) + " box must have positive finite size");
    }
    if (!(b.confidence >= 0 && b.confidence <= 1)) {
        throw ValidationError("confidence must lie in [0, 1]");
    }
}

/// Unit homogeneous image point. c == 0 is a direction at infinity.
struct VanishingPoint {
    Eigen::Vector3d v{0, 0, 1};

    static VanishingPoint from(Eigen::Vector3d h) {
        const double n = h.norm();
        if (!(n > 0) || !h.allFinite()) throw DegeneracyError("vanishing point is the zero vector");
        h /= n;
        // Canonical sign: c > 0, or a direction with its first nonzero component positive.
        const double s = std::abs(h.z()) > 1e-15 ? h.z() : (std::abs(h.x()) > 1e-15 ? h.x() : h.y());
        if (s < 0) h = -h;
        return {h};
    }

    bool at_infinity(double tol = 1e-9) const { return std::abs(v.z()) < tol; }
    Vec2 point() const {
        if (v.z() == 0) throw ProjectionError("vanishing point is at infinity");
        return {v.x() / v.z(), v.y() / v.z()};
    }
    /// Direction from image point p towards the vanishing point, up to sign.
    Vec2 direction_from(Vec2 p) const { return {v.x() - v.z() * p.x, v.y() - v.z() * p.y}; }
};

/// Angle in degrees between two undirected image directions.
inline double undirected_angle_deg(Vec2 a, Vec2 b) {
    const double c = std::abs(dot(a, b)) / (norm(a) * norm(b));
    return std::acos(std::clamp(c, 0.0, 1.0)) * 180.0 / std::numbers::pi;
}

struct Homography {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();

    /// Scales so the bottom-right entry is 1, or to unit Frobenius norm when it vanishes.
    static Homography normalized(Eigen::Matrix3d m) {
        const double scale = m.norm();
        if (!(scale > 0) || !m.allFinite()) throw DegeneracyError("homography is not finite");
        if (std::abs(m(2, 2)) > 1e-12 * scale) {
            m /= m(2, 2);
        } else {
            m /= scale;
        }
        if (std::abs(m.determinant()) <= 1e-12 * std::pow(m.norm(), 3)) {
            throw DegeneracyError("homography is singular");
        }
        return {m};
    }

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return m * p; }

    Vec2 apply(Vec2 p) const {
        const Eigen::Vector3d q = m * Eigen::Vector3d(p.x, p.y, 1.0);
        const double scale = std::abs(q.x()) + std::abs(q.y()) + std::abs(q.z());
        if (std::abs(q.z()) <= 1e-12 * scale) throw ProjectionError("point maps to infinity");
        return {q.x() / q.z(), q.y() / q.z()};
    }

    Homography inverse() const { return normalized(m.inverse()); }
};

namespace detail {

/// Similarity moving points to zero mean and unit mean distance from the origin.
inline Eigen::Matrix3d conditioning(const std::vector<LineSegment>& segs) {
    Vec2 c{};
    for (const auto& s : segs) c = c + 0.5 * (s.a + s.b);
    c = (1.0 / segs.size()) * c;
    double d = 0;
    for (const auto& s : segs) d += 0.5 * (norm(s.a - c) + norm(s.b - c));
    d /= segs.size();
    const double k = d > 0 ? 1.0 / d : 1.0;
    Eigen::Matrix3d t;
    t << k, 0, -k * c.x, 0, k, -k * c.y, 0, 0, 1;
    return t;
}

/// Homogeneous line through a segment, scaled so its normal has unit length.
inline Eigen::Vector3d line_of(const LineSegment& s, const Eigen::Matrix3d& t) {
    const Eigen::Vector3d p = t * Eigen::Vector3d(s.a.x, s.a.y, 1.0);
    const Eigen::Vector3d q = t * Eigen::Vector3d(s.b.x, s.b.y, 1.0);
    Eigen::Vector3d l = p.cross(q);
    return l / std::hypot(l.x(), l.y());
}

inline double segment_error_deg(const LineSegment& s, const VanishingPoint& vp) {
    const Vec2 mid = 0.5 * (s.a + s.b);
    const Vec2 d = vp.direction_from(mid);
    if (norm(d) == 0) return 0.0; // vanishing point sits on the midpoint
    return undirected_angle_deg(s.b - s.a, d);
}

/// Distance of a segment's endpoint from the line joining its midpoint to v.
inline double endpoint_residual(const Eigen::Vector3d& v, const Eigen::Vector3d& p, const Eigen::Vector3d& m) {
    const Eigen::Vector3d l = m.cross(v);
    const double n = std::hypot(l.x(), l.y());
    return n > 0 ? l.dot(p) / n : 0.0;
}

/// Gauss-Newton on endpoint distances with Cauchy weights, in the conditioned frame.
/// Inliers that only graze the consensus band stop dominating the estimate.
inline Eigen::Vector3d refine_vanishing_point(Eigen::Vector3d v, const std::vector<LineSegment>& segs,
                                              const std::vector<std::size_t>& inliers, const Eigen::Matrix3d& t) {
    std::vector<Eigen::Vector3d> ps, ms;
    for (const std::size_t k : inliers) {
        const Eigen::Vector3d p = t * Eigen::Vector3d(segs[k].a.x, segs[k].a.y, 1.0);
        const Eigen::Vector3d q = t * Eigen::Vector3d(segs[k].b.x, segs[k].b.y, 1.0);
        ps.push_back(p);
        ms.push_back(0.5 * (p + q));
    }
    v.normalize();
    for (int it = 0; it < 20; ++it) {
        std::vector<double> r(ps.size()), mag(ps.size());
        for (std::size_t i = 0; i < ps.size(); ++i) {
            r[i] = endpoint_residual(v, ps[i], ms[i]);
            mag[i] = std::abs(r[i]);
        }
        std::nth_element(mag.begin(), mag.begin() + mag.size() / 2, mag.end());
        const double sigma = std::max(1.4826 * mag[mag.size() / 2], 1e-12);
        // Tangent basis of the unit sphere at v.
        Eigen::Vector3d e1 = v.unitOrthogonal();
        Eigen::Vector3d e2 = v.cross(e1);
        Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
        Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
        const double h = 1e-7;
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const double w = 1.0 / (1.0 + (r[i] / sigma) * (r[i] / sigma));
            const Eigen::Vector2d j((endpoint_residual((v + h * e1).normalized(), ps[i], ms[i]) - r[i]) / h,
                                    (endpoint_residual((v + h * e2).normalized(), ps[i], ms[i]) - r[i]) / h);
            jtj += w * j * j.transpose();
            jtr += w * j * r[i];
        }
        const Eigen::Vector2d step = jtj.ldlt().solve(-jtr);
        if (!step.allFinite()) break;
        v = (v + step.x() * e1 + step.y() * e2).normalized();
        if (step.norm() < 1e-12) break;
    }
    return v;
}

inline constexpr int ransac_iterations = 500;
inline constexpr double ransac_threshold_deg = 2.0;
inline constexpr std::uint64_t ransac_seed = 0x7a11f00d;

inline VanishingPoint fit_class(const std::vector<LineSegment>& segs, const char* name) {
    if (segs.size() < 2) {
        throw InsufficientDataError(std::string("need at least 2 ") + name + " segments, got " +
                                    std::to_string(segs.size()));
    }
    const Eigen::Matrix3d t = conditioning(segs);
    const Eigen::Matrix3d t_inv = t.inverse();
    std::vector<Eigen::Vector3d> lines;
    lines.reserve(segs.size());
    for (const auto& s : segs) lines.push_back(line_of(s, t));

    std::mt19937_64 rng(ransac_seed);
    std::vector<std::size_t> best;
    double best_err = 0;
    const std::size_t n = segs.size();
    for (int it = 0; it < ransac_iterations; ++it) {
        const std::size_t i = rng() % n;
        std::size_t j = rng() % (n - 1);
        if (j >= i) ++j;
        const Eigen::Vector3d cand = lines[i].cross(lines[j]);
        if (cand.norm() < 1e-12) continue; // collinear pair
        const VanishingPoint vp = VanishingPoint::from(t_inv * cand);
        std::vector<std::size_t> inliers;
        double err = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const double e = segment_error_deg(segs[k], vp);
            if (e < ransac_threshold_deg) {
                inliers.push_back(k);
                err += e;
            }
        }
        if (inliers.size() > best.size() || (inliers.size() == best.size() && err < best_err)) {
            best = std::move(inliers);
            best_err = err;
        }
    }
    if (best.size() < 2) {
        throw InsufficientDataError(std::string("no consensus among ") + name + " segments");
    }
    // Algebraic least squares over the inliers gives the starting point.
    Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
    for (const std::size_t k : best) {
        const double w = segs[k].length();
        a += w * lines[k] * lines[k].transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(a);
    const Eigen::Vector3d v = refine_vanishing_point(es.eigenvectors().col(0), segs, best, t);
    return VanishingPoint::from(t_inv * v);
}

} // namespace detail

/// Consensus vanishing point of one orientation class.
inline VanishingPoint estimate_vanishing_point(const std::vector<LineSegment>& segments) {
    return detail::fit_class(segments, "input");
}

struct VanishingPoints {
    VanishingPoint horizontal;
    VanishingPoint vertical;
};

/// Splits segments at 45 degrees and fits one consensus vanishing point per class.
inline VanishingPoints estimate_vanishing_points(const std::vector<LineSegment>& segments) {
    std::vector<LineSegment> h, v;
    for (const auto& s : segments) {
        const Vec2 d = s.b - s.a;
        if (!(s.length() > 0) || !std::isfinite(d.x) || !std::isfinite(d.y)) continue;
        (std::abs(d.y) < std::abs(d.x) ? h : v).push_back(s);
    }
    return {detail::fit_class(h, "horizontal"), detail::fit_class(v, "vertical")};
}

/// Sends vp_h and vp_v to the x and y directions at infinity. The image centre is
/// fixed, and a unit step along either rectified axis covers one image pixel there.
inline Homography rectifying_homography(const VanishingPoint& vp_h, const VanishingPoint& vp_v, double width,
                                        double height) {
    if (!(width > 0) || !(height > 0)) throw DomainError("image size must be positive");
    if (vp_h.v.cross(vp_v.v).norm() < 1e-9) throw DegeneracyError("vanishing points coincide");
    const Eigen::Vector3d c(0.5 * width, 0.5 * height, 1.0);
    Eigen::Matrix3d basis;
    basis.col(0) = vp_h.v;
    basis.col(1) = vp_v.v;
    basis.col(2) = c;
    const double det = basis.determinant();
    if (std::abs(det) < 1e-12 * c.norm()) throw DegeneracyError("image centre lies on the vanishing line");
    const Eigen::Matrix3d h0 = basis.inverse();

    // h0 sends the centre to (0, 0, 1), so its Jacobian there is the upper-left block.
    const Eigen::Matrix2d jinv = h0.topLeftCorner<2, 2>().inverse();
    double dx = jinv.col(0).norm();
    double dy = jinv.col(1).norm();
    // Keep rectified +x pointing right and +y pointing down in the image.
    if (jinv(0, 0) < 0) dx = -dx;
    if (jinv(1, 1) < 0) dy = -dy;
    Eigen::Matrix3d fix;
    fix << dx, 0, c.x(), 0, dy, c.y(), 0, 0, 1;
    return Homography::normalized(fix * h0);
}

/// Maps each box's corners and re-boxes them as the axis-aligned bounds.
inline std::vector<FacadeBox> apply_homography(const Homography& h, const std::vector<FacadeBox>& boxes) {
    std::vector<FacadeBox> out;
    out.reserve(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const FacadeBox& b = boxes[i];
        const std::array<Vec2, 4> corners{Vec2{b.x, b.y}, Vec2{b.x + b.w, b.y}, Vec2{b.x + b.w, b.y + b.h},
                                          Vec2{b.x, b.y + b.h}};
        double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
        int side = 0;
        for (const Vec2& p : corners) {
            const Eigen::Vector3d q = h.m * Eigen::Vector3d(p.x, p.y, 1.0);
            const double scale = std::abs(q.x()) + std::abs(q.y()) + std::abs(q.z());
            const int s = ta::detail::sign(q.z());
            if (std::abs(q.z()) <= 1e-12 * scale || (side != 0 && s != side)) {
                throw ProjectionError(std::string(label_name(b.label)) + " box " + std::to_string(i) +
                                      " maps across the line at infinity");
            }
            side = s;
            const Vec2 r{q.x() / q.z(), q.y() / q.z()};
            x0 = std::min(x0, r.x);
            y0 = std::min(y0, r.y);
            x1 = std::max(x1, r.x);
            y1 = std::max(y1, r.y);
        }
        FacadeBox r = b;
        r.x = x0;
        r.y = y0;
        r.w = x1 - x0;
        r.h = y1 - y0;
        out.push_back(r);
    }
    return out;
}

struct GridRow {
    double y = 0;
    double height = 0;
    std::vector<std::size_t> members; // indices into FacadeGrid::windows
    friend bool operator==(const GridRow&, const GridRow&) = default;
};

struct GridColumn {
    double x = 0;
    double width = 0;
    std::vector<std::size_t> members;
    friend bool operator==(const GridColumn&, const GridColumn&) = default;
};

/// A non-window component. Sills and cornices record the window row they snapped to.
struct AuxBox {
    FacadeBox box;
    std::optional<std::size_t> row;
    friend bool operator==(const AuxBox&, const AuxBox&) = default;
};

struct FacadeGrid {
    std::vector<GridRow> rows;       // ascending y
    std::vector<GridColumn> columns; // ascending x
    std::vector<FacadeBox> windows;  // snapped, ordered by row then column
    std::vector<std::pair<std::size_t, std::size_t>> cells; // (row, column) per window
    std::vector<AuxBox> others;

    std::vector<FacadeBox> all_boxes() const {
        std::vector<FacadeBox> out = windows;
        for (const auto& a : others) out.push_back(a.box);
        return out;
    }
    friend bool operator==(const FacadeGrid&, const FacadeGrid&) = default;
};

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Clusters indices by key: sorted keys split wherever the gap exceeds `gap`.
inline std::vector<std::vector<std::size_t>> cluster_1d(const std::vector<double>& keys, double gap) {
    std::vector<std::size_t> order(keys.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (k == 0 || keys[order[k]] - keys[order[k - 1]] > gap) out.emplace_back();
        out.back().push_back(order[k]);
    }
    return out;
}

inline bool box_less(const FacadeBox& a, const FacadeBox& b) {
    return std::tie(a.label, a.y, a.x, a.h, a.w, a.confidence) < std::tie(b.label, b.y, b.x, b.h, b.w, b.confidence);
}

} // namespace detail

/// Snaps window boxes into rows and columns sharing median positions and sizes.
/// Sills move under, and cornices above, their nearest window row. Other labels
/// pass through unchanged.
inline FacadeGrid regularize_grid(std::vector<FacadeBox> boxes) {
    for (const auto& b : boxes) validate_box(b);
    std::sort(boxes.begin(), boxes.end(), detail::box_less);
    std::vector<FacadeBox> win;
    std::vector<FacadeBox> rest;
    for (const auto& b : boxes) (b.label == Label::window ? win : rest).push_back(b);

    FacadeGrid g;
    std::vector<std::size_t> row_of(win.size()), col_of(win.size());
    if (!win.empty()) {
        std::vector<double> hs, ws, cys, cxs;
        for (const auto& b : win) {
            hs.push_back(b.h);
            ws.push_back(b.w);
            cys.push_back(b.cy());
            cxs.push_back(b.cx());
        }
        const auto row_clusters = detail::cluster_1d(cys, 0.5 * detail::median(hs));
        const auto col_clusters = detail::cluster_1d(cxs, 0.5 * detail::median(ws));
        for (std::size_t r = 0; r < row_clusters.size(); ++r) {
            std::vector<double> y, h;
            for (const std::size_t i : row_clusters[r]) {
                y.push_back(win[i].y);
                h.push_back(win[i].h);
                row_of[i] = r;
            }
            g.rows.push_back({detail::median(y), detail::median(h), {}});
        }
        for (std::size_t c = 0; c < col_clusters.size(); ++c) {
            std::vector<double> x, w;
            for (const std::size_t i : col_clusters[c]) {
                x.push_back(win[i].x);
                w.push_back(win[i].w);
                col_of[i] = c;
            }
            g.columns.push_back({detail::median(x), detail::median(w), {}});
        }
        std::vector<std::size_t> order(win.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::tie(row_of[a], col_of[a]) < std::tie(row_of[b], col_of[b]);
        });
        for (const std::size_t i : order) {
            FacadeBox b = win[i];
            b.y = g.rows[row_of[i]].y;
            b.h = g.rows[row_of[i]].height;
            b.x = g.columns[col_of[i]].x;
            b.w = g.columns[col_of[i]].width;
            g.rows[row_of[i]].members.push_back(g.windows.size());
            g.columns[col_of[i]].members.push_back(g.windows.size());
            g.cells.emplace_back(row_of[i], col_of[i]);
            g.windows.push_back(b);
        }
    }
    for (FacadeBox b : rest) {
        std::optional<std::size_t> row;
        if (!g.rows.empty() && (b.label == Label::window_sill || b.label == Label::cornice)) {
            const bool sill = b.label == Label::window_sill;
            double best = INFINITY;
            for (std::size_t r = 0; r < g.rows.size(); ++r) {
                const double edge = sill ? g.rows[r].y + g.rows[r].height : g.rows[r].y;
                const double d = std::abs(b.cy() - edge);
                if (d < best) {
                    best = d;
                    row = r;
                }
            }
            b.y = sill ? g.rows[*row].y + g.rows[*row].height : g.rows[*row].y - b.h;
        }
        g.others.push_back({b, row});
    }
    return g;
}

struct RowParams {
    double bottom = 0; // meters above the facade bottom
    double height = 0;
    double ratio = 0;  // window width / height
    std::optional<double> sill;    // slab thickness
    std::optional<double> cornice;
    friend bool operator==(const RowParams&, const RowParams&) = default;
};

struct ColumnParams {
    double center = 0; // normalized by facade width
    double width = 0;
    friend bool operator==(const ColumnParams&, const ColumnParams&) = default;
};

/// Entries, storefronts, stairs, roof cornices and sills or cornices without a row.
struct ElementParams {
    Label kind = Label::entry;
    double center = 0; // normalized
    double width = 0;
    double height = 0;
    double base = 0;   // meters above the facade bottom
    friend bool operator==(const ElementParams&, const ElementParams&) = default;
};

struct FacadeParams {
    double width = 0;
    double height = 0;
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<RowParams> rows;       // top row first
    std::vector<ColumnParams> columns; // left to right
    std::vector<std::pair<std::size_t, std::size_t>> windows; // occupied (row, column) cells
    std::vector<ElementParams> elements;
    friend bool operator==(const FacadeParams&, const FacadeParams&) = default;
};

struct PixelRect {
    double x = 0, y = 0, w = 0, h = 0;
};

/// Converts a regularized grid into meters relative to the facade box.
inline FacadeParams extract_params(const FacadeGrid& grid, const PixelRect& facade, double real_width,
                                   double real_height) {
    if (!(facade.w > 0) || !(facade.h > 0)) throw DomainError("facade box must have positive area");
    if (!(real_width > 0) || !(real_height > 0)) throw DomainError("facade real size must be positive");
    const double sx = real_width / facade.w;
    const double sy = real_height / facade.h;
    const double bottom = facade.y + facade.h;
    auto norm_x = [&](double px) { return std::clamp((px - facade.x) / facade.w, 0.0, 1.0); };

    FacadeParams p;
    p.width = real_width;
    p.height = real_height;
    p.n_rows = grid.rows.size();
    p.n_cols = grid.columns.size();
    for (const auto& r : grid.rows) {
        std::vector<double> w;
        for (const std::size_t i : r.members) w.push_back(grid.windows[i].w * sx);
        const double h = r.height * sy;
        p.rows.push_back({(bottom - (r.y + r.height)) * sy, h, detail::median(w) / h, {}, {}});
    }
    for (const auto& c : grid.columns) p.columns.push_back({norm_x(c.x + 0.5 * c.width), c.width * sx});
    p.windows = grid.cells;
    for (const auto& a : grid.others) {
        const FacadeBox& b = a.box;
        if (a.row) {
            auto& slot = b.label == Label::window_sill ? p.rows[*a.row].sill : p.rows[*a.row].cornice;
            slot = std::max(slot.value_or(0.0), b.h * sy);
            continue;
        }
        p.elements.push_back({b.label, norm_x(b.cx()), b.w * sx, b.h * sy, (bottom - (b.y + b.h)) * sy});
    }
    std::stable_sort(p.elements.begin(), p.elements.end(), [](const ElementParams& a, const ElementParams& b) {
        return std::tie(a.kind, a.center, a.base) < std::tie(b.kind, b.center, b.base);
    });
    return p;
}

inline nlohmann::json params_to_json(const FacadeParams& p) {
    nlohmann::json rows = nlohmann::json::array(), cols = nlohmann::json::array(), wins = nlohmann::json::array(),
                   els = nlohmann::json::array();
    for (const auto& r : p.rows) {
        nlohmann::json j{{"bottom", r.bottom}, {"height", r.height}, {"ratio", r.ratio}};
        if (r.sill) j["sill"] = *r.sill;
        if (r.cornice) j["cornice"] = *r.cornice;
        rows.push_back(j);
    }
    for (const auto& c : p.columns) cols.push_back({{"center", c.center}, {"width", c.width}});
    for (const auto& [r, c] : p.windows) wins.push_back({r, c});
    for (const auto& e : p.elements) {
        els.push_back({{"kind", label_name(e.kind)},
                       {"center", e.center},
                       {"width", e.width},
                       {"height", e.height},
                       {"base", e.base}});
    }
    return {{"width", p.width}, {"height", p.height}, {"n_rows", p.n_rows}, {"n_cols", p.n_cols},
            {"rows", rows},     {"columns", cols},    {"windows", wins},    {"elements", els}};
}

inline FacadeParams params_from_json(const nlohmann::json& j) {
    FacadeParams p;
    try {
        p.width = j.at("width").get<double>();
        p.height = j.at("height").get<double>();
        for (const auto& r : j.at("rows")) {
            RowParams row{r.at("bottom").get<double>(), r.at("height").get<double>(), r.value("ratio", 0.0), {}, {}};
            if (r.contains("sill")) row.sill = r["sill"].get<double>();
            if (r.contains("cornice")) row.cornice = r["cornice"].get<double>();
            p.rows.push_back(row);
        }
        for (const auto& c : j.at("columns")) p.columns.push_back({c.at("center").get<double>(), c.at("width").get<double>()});
        for (const auto& w : j.at("windows")) {
            p.windows.emplace_back(w.at(0).get<std::size_t>(), w.at(1).get<std::size_t>());
        }
        for (const auto& e : j.value("elements", nlohmann::json::array())) {
            p.elements.push_back({parse_label(e.at("kind").get<std::string>()), e.at("center").get<double>(),
                                  e.at("width").get<double>(), e.at("height").get<double>(), e.at("base").get<double>()});
        }
        p.n_rows = j.value("n_rows", p.rows.size());
        p.n_cols = j.value("n_cols", p.columns.size());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("facade parameters: ") + e.what());
    }
    if (!(p.width > 0) || !(p.height > 0)) throw ValidationError("facade parameters need positive width and height");
    for (const auto& [r, c] : p.windows) {
        if (r >= p.rows.size() || c >= p.columns.size()) throw ValidationError("window cell outside the grid");
    }
    return p;
}

struct EdgeLink {
    std::uint64_t feature_id = 0;
    std::size_t edge_index = 0;
};

/// One annotated facade photo.
struct Annotation {
    double width = 0;
    double height = 0;
    std::vector<FacadeBox> boxes;
    std::optional<PixelRect> facade; // defaults to the whole image
    std::optional<EdgeLink> link;
    std::vector<LineSegment> segments;
};

inline Annotation annotation_from_json(const nlohmann::json& j) {
    try {
        Annotation a;
        const auto& img = j.at("image");
        a.width = img.at("width").get<double>();
        a.height = img.at("height").get<double>();
        if (!(a.width > 0) || !(a.height > 0)) throw ValidationError("image size must be positive");
        for (const auto& b : j.value("boxes", nlohmann::json::array())) {
            FacadeBox box{parse_label(b.at("label").get<std::string>()), b.at("x").get<double>(), b.at("y").get<double>(),
                          b.at("w").get<double>(),                      b.at("h").get<double>(), b.value("confidence", 1.0)};
            validate_box(box);
            a.boxes.push_back(box);
        }
        if (j.contains("facade")) {
            const auto& f = j["facade"];
            a.facade = PixelRect{f.at("x").get<double>(), f.at("y").get<double>(), f.at("w").get<double>(),
                                 f.at("h").get<double>()};
            if (!(a.facade->w > 0) || !(a.facade->h > 0)) throw ValidationError("facade box must have positive area");
        }
        if (j.contains("link")) {
            a.link = EdgeLink{j["link"].at("feature_id").get<std::uint64_t>(), j["link"].at("edge_index").get<std::size_t>()};
        }
        for (const auto& s : j.value("segments", nlohmann::json::array())) {
            if (!s.is_array() || s.size() != 4) throw ValidationError("segment must be [x1, y1, x2, y2]");
            LineSegment seg{{s[0].get<double>(), s[1].get<double>()}, {s[2].get<double>(), s[3].get<double>()}};
            if (!(seg.length() > 0)) throw ValidationError("segment has zero length");
            a.segments.push_back(seg);
        }
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("annotation: ") + e.what());
    }
}

inline nlohmann::json annotation_to_json(const Annotation& a) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : a.boxes) {
        boxes.push_back({{"label", label_name(b.label)}, {"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h},
                         {"confidence", b.confidence}});
    }
    nlohmann::json j{{"image", {{"width", a.width}, {"height", a.height}}}, {"boxes", boxes}};
    if (a.facade) j["facade"] = {{"x", a.facade->x}, {"y", a.facade->y}, {"w", a.facade->w}, {"h", a.facade->h}};
    if (a.link) j["link"] = {{"feature_id", a.link->feature_id}, {"edge_index", a.link->edge_index}};
    if (!a.segments.empty()) {
        nlohmann::json segs = nlohmann::json::array();
        for (const auto& s : a.segments) segs.push_back({s.a.x, s.a.y, s.b.x, s.b.y});
        j["segments"] = segs;
    }
    return j;
}

/// Box outlines as line segments, used when an annotation carries none.
inline std::vector<LineSegment> box_segments(const std::vector<FacadeBox>& boxes) {
    std::vector<LineSegment> out;
    for (const auto& b : boxes) {
        out.push_back({{b.x, b.y}, {b.x + b.w, b.y}});
        out.push_back({{b.x, b.y + b.h}, {b.x + b.w, b.y + b.h}});
        out.push_back({{b.x, b.y}, {b.x, b.y + b.h}});
        out.push_back({{b.x + b.w, b.y}, {b.x + b.w, b.y + b.h}});
    }
    return out;
}

struct ParsedFacade {
    Homography rectifier;
    std::vector<FacadeBox> rectified;
    FacadeGrid grid;
    FacadeParams params;
};

/// Full post-detection chain for one photo: rectify, regularize, extract.
inline ParsedFacade parse_facade(const Annotation& a, double real_width, double real_height) {
    ParsedFacade out;
    const auto segs = a.segments.empty() ? box_segments(a.boxes) : a.segments;
    if (!segs.empty()) {
        const auto vps = estimate_vanishing_points(segs);
        out.rectifier = rectifying_homography(vps.horizontal, vps.vertical, a.width, a.height);
    }
    out.rectified = apply_homography(out.rectifier, a.boxes);
    out.grid = regularize_grid(out.rectified);
    PixelRect facade = a.facade.value_or(PixelRect{0, 0, a.width, a.height});
    const FacadeBox fb = apply_homography(out.rectifier, {FacadeBox{Label::window, facade.x, facade.y, facade.w, facade.h, 1.0}})[0];
    out.params = extract_params(out.grid, {fb.x, fb.y, fb.w, fb.h}, real_width, real_height);
    return out;
}

} // namespace ta::facade

#endif
