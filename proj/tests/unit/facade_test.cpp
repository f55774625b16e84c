#include "ta/facade.hpp"

#include "../support/synthetic_facade.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

namespace {

using namespace ta::facade;
using ta::Vec2;
using ta_test::map_h;

FacadeBox win(double x, double y, double w, double h) { return {Label::window, x, y, w, h, 1.0}; }

TEST(VanishingPoint, ExactConcurrence) {
    const Vec2 vp{100, 50};
    std::vector<LineSegment> segs;
    for (const Vec2 d : {Vec2{-300, 20}, Vec2{-250, -80}, Vec2{-400, 5}, Vec2{-200, 60}, Vec2{-350, -30}}) {
        const Vec2 a = vp + d;
        segs.push_back({a, a + 0.4 * (vp - a)});
    }
    const VanishingPoint v = estimate_vanishing_point(segs);
    EXPECT_NEAR(std::abs(v.v.norm() - 1), 0, 1e-15);
    const Vec2 p = v.point();
    EXPECT_LT(ta::norm(p - vp), 1e-6);
}

TEST(VanishingPoint, ParallelSegmentsGiveDirectionAtInfinity) {
    std::vector<LineSegment> segs;
    for (int i = 0; i < 6; ++i) segs.push_back({{10.0 * i, 20.0 * i}, {10.0 * i + 50 + 7 * i, 20.0 * i}});
    const VanishingPoint v = estimate_vanishing_point(segs);
    EXPECT_LT(std::abs(v.v.z()), 1e-9);
    EXPECT_TRUE(v.at_infinity());
    EXPECT_NEAR(v.v.x(), 1.0, 1e-12);
    EXPECT_NEAR(v.v.y(), 0.0, 1e-12);
}

TEST(VanishingPoint, InsufficientSegments) {
    const std::vector<LineSegment> one_h{{{0, 0}, {10, 0}}, {{0, 0}, {0, 10}}, {{5, 0}, {5, 10}}};
    EXPECT_THROW(estimate_vanishing_points(one_h), ta::InsufficientDataError);
    EXPECT_THROW(estimate_vanishing_point({}), ta::InsufficientDataError);
}

TEST(VanishingPoint, ClassifiesAtFortyFiveDegrees) {
    // 44 degrees counts as horizontal, 46 degrees as vertical.
    std::vector<LineSegment> segs;
    auto seg = [](Vec2 a, double deg) {
        const double r = deg * M_PI / 180;
        return LineSegment{a, {a.x + 100 * std::cos(r), a.y + 100 * std::sin(r)}};
    };
    segs.push_back(seg({0, 0}, 44));
    segs.push_back(seg({0, 50}, 44));
    segs.push_back(seg({0, 0}, 46));
    segs.push_back(seg({50, 0}, 46));
    const auto vps = estimate_vanishing_points(segs);
    EXPECT_NEAR(ta::facade::undirected_angle_deg(vps.horizontal.direction_from({0, 0}), {std::cos(44 * M_PI / 180), std::sin(44 * M_PI / 180)}), 0, 1e-6);
    EXPECT_NEAR(ta::facade::undirected_angle_deg(vps.vertical.direction_from({0, 0}), {std::cos(46 * M_PI / 180), std::sin(46 * M_PI / 180)}), 0, 1e-6);
}

TEST(VanishingPoint, KnownHomographyWithinHalfDegree) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto f = ta_test::make_synthetic_facade(seed);
        const auto vps = estimate_vanishing_points(f.segments);
        const Vec2 c{f.width / 2, f.height / 2};
        EXPECT_LT(ta_test::vp_angle_deg(vps.horizontal.v, f.h_true.col(0), c), 0.5) << "seed " << seed;
        EXPECT_LT(ta_test::vp_angle_deg(vps.vertical.v, f.h_true.col(1), c), 0.5) << "seed " << seed;
    }
}

TEST(VanishingPoint, Deterministic) {
    const auto f = ta_test::make_synthetic_facade(3);
    const auto a = estimate_vanishing_points(f.segments);
    const auto b = estimate_vanishing_points(f.segments);
    EXPECT_EQ(a.horizontal.v, b.horizontal.v);
    EXPECT_EQ(a.vertical.v, b.vertical.v);
}

TEST(Rectify, AxisVanishingPointsGiveIdentity) {
    const auto h = rectifying_homography(VanishingPoint::from({1, 0, 0}), VanishingPoint::from({0, 1, 0}), 640, 480);
    EXPECT_LT((h.m - Eigen::Matrix3d::Identity()).norm(), 1e-12);
    // Opposite signs describe the same directions.
    const auto g = rectifying_homography(VanishingPoint{{-1, 0, 0}}, VanishingPoint{{0, -1, 0}}, 640, 480);
    EXPECT_LT((g.m - Eigen::Matrix3d::Identity()).norm(), 1e-12);
}

TEST(Rectify, CoincidentVanishingPoints) {
    const auto v = VanishingPoint::from({300, 200, 1});
    EXPECT_THROW(rectifying_homography(v, v, 640, 480), ta::DegeneracyError);
    EXPECT_THROW(rectifying_homography(v, VanishingPoint::from({-300, -200, -1}), 640, 480), ta::DegeneracyError);
}

TEST(Rectify, FixesCentreAndIsInvertible) {
    const auto f = ta_test::make_synthetic_facade(11, 0, 0);
    const auto h = rectifying_homography(VanishingPoint::from(f.h_true.col(0)), VanishingPoint::from(f.h_true.col(1)),
                                         f.width, f.height);
    EXPECT_DOUBLE_EQ(h.m(2, 2), 1.0);
    const Vec2 c = h.apply(Vec2{500, 400});
    EXPECT_NEAR(c.x, 500, 1e-9);
    EXPECT_NEAR(c.y, 400, 1e-9);
    EXPECT_LT((h.m * h.inverse().m - Eigen::Matrix3d::Identity() * (h.m * h.inverse().m)(2, 2)).norm(), 1e-9);
    EXPECT_LT((h.m * h.m.inverse() - Eigen::Matrix3d::Identity()).norm(), 1e-9);
}

TEST(Rectify, WarpedRectangleBecomesAxisAligned) {
    const auto f = ta_test::make_synthetic_facade(5, 0, 0);
    const auto vps = estimate_vanishing_points(f.segments);
    const auto h = rectifying_homography(vps.horizontal, vps.vertical, f.width, f.height);
    // Facade outline corners.
    std::array<Vec2, 4> r;
    const std::array<Vec2, 4> frontal{Vec2{100, 100}, Vec2{900, 100}, Vec2{900, 700}, Vec2{100, 700}};
    for (int k = 0; k < 4; ++k) r[k] = h.apply(map_h(f.h_true, frontal[k]));
    EXPECT_LT(std::abs(r[0].y - r[1].y), 0.5);
    EXPECT_LT(std::abs(r[2].y - r[3].y), 0.5);
    EXPECT_LT(std::abs(r[0].x - r[3].x), 0.5);
    EXPECT_LT(std::abs(r[1].x - r[2].x), 0.5);
}

TEST(Rectify, PipelineMatchesIdealRectifierWithinOnePixel) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto f = ta_test::make_synthetic_facade(seed);
        const auto vps = estimate_vanishing_points(f.segments);
        const auto h = rectifying_homography(vps.horizontal, vps.vertical, f.width, f.height);
        const Eigen::Matrix3d ideal = ta_test::ideal_rectifier(f);
        double worst = 0;
        for (std::size_t i = 0; i < f.image.size(); ++i) {
            for (int k = 0; k < 4; ++k) {
                worst = std::max(worst, ta::norm(h.apply(f.image[i][k]) - map_h(ideal, f.image[i][k])));
            }
        }
        EXPECT_LT(worst, 1.0) << "seed " << seed;
    }
}

TEST(ApplyHomography, IdentityAndScale) {
    const std::vector<FacadeBox> boxes{win(10, 20, 30, 40), {Label::entry, 5, 6, 7, 8, 0.5}};
    EXPECT_EQ(apply_homography({}, boxes), boxes);
    Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
    s(0, 0) = s(1, 1) = 2;
    const auto out = apply_homography({s}, boxes);
    EXPECT_EQ(out[0], win(20, 40, 60, 80));
    EXPECT_EQ(out[1].label, Label::entry);
    EXPECT_DOUBLE_EQ(out[1].w, 14);
}

TEST(ApplyHomography, KnownHomographyBoxes) {
    // Mild perspective keeps the bounding box of each mapped window within a pixel of the truth.
    auto f = ta_test::make_synthetic_facade(2, 0, 0);
    Eigen::Matrix3d persp = Eigen::Matrix3d::Identity();
    persp(2, 0) = 2e-6;
    persp(2, 1) = -3e-6;
    Eigen::Matrix3d to_c, from_c;
    to_c << 1, 0, 500, 0, 1, 400, 0, 0, 1;
    from_c << 1, 0, -500, 0, 1, -400, 0, 0, 1;
    f.h_true = to_c * persp * from_c;
    const Eigen::Matrix3d ideal = ta_test::ideal_rectifier(f);
    std::vector<FacadeBox> photo, truth;
    for (const auto& c : f.frontal) {
        double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
        for (const Vec2 p : c) {
            const Vec2 q = map_h(f.h_true, p);
            x0 = std::min(x0, q.x);
            x1 = std::max(x1, q.x);
            y0 = std::min(y0, q.y);
            y1 = std::max(y1, q.y);
        }
        photo.push_back(win(x0, y0, x1 - x0, y1 - y0));
        const Vec2 a = map_h(ideal * f.h_true, c[0]);
        const Vec2 b = map_h(ideal * f.h_true, c[2]);
        truth.push_back(win(a.x, a.y, b.x - a.x, b.y - a.y));
    }
    const auto h = rectifying_homography(VanishingPoint::from(f.h_true.col(0)), VanishingPoint::from(f.h_true.col(1)), 1000, 800);
    const auto out = apply_homography(h, photo);
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_NEAR(out[i].x, truth[i].x, 1.0);
        EXPECT_NEAR(out[i].y, truth[i].y, 1.0);
        EXPECT_NEAR(out[i].x + out[i].w, truth[i].x + truth[i].w, 1.0);
        EXPECT_NEAR(out[i].y + out[i].h, truth[i].y + truth[i].h, 1.0);
    }
}

TEST(ApplyHomography, BoxAcrossInfinityNamesTheBox) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(2, 0) = 0.01; // x = -100 maps to infinity
    try {
        apply_homography({m}, {win(0, 0, 10, 10), {Label::stair, -150, 0, 100, 10, 1}});
        FAIL();
    } catch (const ta::ProjectionError& e) {
        EXPECT_NE(std::string(e.what()).find("stair box 1"), std::string::npos) << e.what();
    }
}

std::vector<FacadeBox> exact_grid(int rows, int cols) {
    std::vector<FacadeBox> out;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) out.push_back(win(100 + 150 * c, 80 + 200 * r, 60, 100));
    }
    return out;
}

TEST(Regularize, SingleBoxUnchanged) {
    const auto g = regularize_grid({win(3, 4, 5, 6)});
    ASSERT_EQ(g.rows.size(), 1u);
    ASSERT_EQ(g.columns.size(), 1u);
    EXPECT_EQ(g.windows, (std::vector<FacadeBox>{win(3, 4, 5, 6)}));
}

TEST(Regularize, ExactGridIsFixedPoint) {
    const auto boxes = exact_grid(3, 4);
    const auto g = regularize_grid(boxes);
    EXPECT_EQ(g.rows.size(), 3u);
    EXPECT_EQ(g.columns.size(), 4u);
    EXPECT_EQ(g.windows, boxes);
}

TEST(Regularize, EmptyInput) {
    const auto g = regularize_grid({});
    EXPECT_TRUE(g.rows.empty());
    EXPECT_TRUE(g.windows.empty());
}

std::vector<FacadeBox> jitter(std::vector<FacadeBox> boxes, std::uint64_t seed, double amp) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-amp, amp);
    for (auto& b : boxes) {
        b.x += d(rng);
        b.y += d(rng);
        b.w += d(rng);
        b.h += d(rng);
    }
    return boxes;
}

TEST(Regularize, JitteredGridRecoversGenerator) {
    // Fixed-seed example: medians land within a pixel of the generating grid.
    const auto truth = exact_grid(3, 4);
    const auto g = regularize_grid(jitter(truth, 1, 2.0));
    ASSERT_EQ(g.rows.size(), 3u);
    ASSERT_EQ(g.columns.size(), 4u);
    ASSERT_EQ(g.windows.size(), 12u);
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(g.cells[i], std::make_pair(i / 4, i % 4));
        EXPECT_NEAR(g.windows[i].cx(), truth[i].cx(), 1.0);
        EXPECT_NEAR(g.windows[i].cy(), truth[i].cy(), 1.0);
    }
}

TEST(Regularize, JitteredGridStructureAcrossSeeds) {
    // A median of +-2 px samples stays within 2 px, so centres stay within 3 px.
    const auto truth = exact_grid(3, 4);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto g = regularize_grid(jitter(truth, seed, 2.0));
        ASSERT_EQ(g.rows.size(), 3u);
        ASSERT_EQ(g.columns.size(), 4u);
        for (std::size_t i = 0; i < 12; ++i) {
            EXPECT_EQ(g.cells[i], std::make_pair(i / 4, i % 4));
            EXPECT_LE(std::abs(g.windows[i].cx() - truth[i].cx()), 3.0) << "seed " << seed;
            EXPECT_LE(std::abs(g.windows[i].cy() - truth[i].cy()), 3.0) << "seed " << seed;
            EXPECT_LE(std::abs(g.windows[i].w - truth[i].w), 2.0) << "seed " << seed;
            EXPECT_LE(std::abs(g.windows[i].h - truth[i].h), 2.0) << "seed " << seed;
        }
    }
}

/// Population variance in pairwise form, exactly zero when all heights agree.
double row_height_variance(const FacadeGrid& g, const GridRow& r) {
    double v = 0;
    for (const auto i : r.members) {
        for (const auto j : r.members) v += (g.windows[i].h - g.windows[j].h) * (g.windows[i].h - g.windows[j].h);
    }
    const double n = static_cast<double>(r.members.size());
    return v / (2 * n * n);
}

TEST(Regularize, RowsShareHeightAndIdempotent) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const int rows = 1 + static_cast<int>(rng() % 5), cols = 1 + static_cast<int>(rng() % 6);
        auto boxes = jitter(exact_grid(rows, cols), rng(), 3.0);
        // Drop a few windows so rows are ragged.
        for (int k = 0; k < 3 && boxes.size() > 1; ++k) boxes.erase(boxes.begin() + static_cast<long>(rng() % boxes.size()));
        const auto g = regularize_grid(boxes);
        for (const auto& r : g.rows) {
            EXPECT_EQ(row_height_variance(g, r), 0.0);
            for (const auto i : r.members) EXPECT_EQ(g.windows[i].y, r.y);
        }
        for (std::size_t i = 1; i < g.rows.size(); ++i) EXPECT_LT(g.rows[i - 1].y, g.rows[i].y);
        EXPECT_EQ(regularize_grid(g.all_boxes()), g);
        auto shuffled = boxes;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        EXPECT_EQ(regularize_grid(shuffled), g);
    }
}

TEST(Regularize, SillsAndCornicesSnapToRows) {
    auto boxes = exact_grid(2, 2);
    boxes.push_back({Label::window_sill, 98, 183, 64, 6, 0.9});  // under row 0 (bottom 180)
    boxes.push_back({Label::cornice, 95, 268, 70, 8, 0.8});      // above row 1 (top 280)
    boxes.push_back({Label::entry, 400, 500, 80, 150, 1.0});
    const auto g = regularize_grid(boxes);
    ASSERT_EQ(g.others.size(), 3u);
    EXPECT_EQ(g.others[0].box.label, Label::window_sill);
    EXPECT_EQ(g.others[0].row, 0u);
    EXPECT_EQ(g.others[0].box.y, 180);
    EXPECT_EQ(g.others[1].row, 1u);
    EXPECT_EQ(g.others[1].box.y, 272);
    EXPECT_FALSE(g.others[2].row);
    EXPECT_EQ(g.others[2].box, boxes[6]);
    EXPECT_EQ(regularize_grid(g.all_boxes()), g);
}

TEST(ExtractParams, ArithmeticExample) {
    std::vector<FacadeBox> boxes;
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 3; ++c) boxes.push_back(win(10 + 30 * c, 10 + 40 * r, 10, 20));
    }
    const auto p = extract_params(regularize_grid(boxes), {0, 0, 100, 80}, 10, 8);
    EXPECT_EQ(p.n_rows, 2u);
    EXPECT_EQ(p.n_cols, 3u);
    ASSERT_EQ(p.rows.size(), 2u);
    for (const auto& r : p.rows) {
        EXPECT_DOUBLE_EQ(r.ratio, 0.5);
        EXPECT_DOUBLE_EQ(r.height, 2.0);
    }
    for (const auto& c : p.columns) EXPECT_DOUBLE_EQ(c.width, 1.0);
    EXPECT_DOUBLE_EQ(p.rows[0].bottom, 5.0); // px 30 from top of 80 -> 50 px above bottom
    EXPECT_DOUBLE_EQ(p.rows[1].bottom, 1.0);
    EXPECT_DOUBLE_EQ(p.columns[0].center, 0.15);
    EXPECT_DOUBLE_EQ(p.columns[2].center, 0.75);
    EXPECT_EQ(p.windows.size(), 6u);
}

TEST(ExtractParams, EmptyGridAndErrors) {
    const auto p = extract_params(regularize_grid({}), {0, 0, 100, 80}, 10, 8);
    EXPECT_EQ(p.n_rows, 0u);
    EXPECT_TRUE(p.windows.empty());
    EXPECT_THROW(extract_params(regularize_grid({}), {0, 0, 0, 80}, 10, 8), ta::DomainError);
    EXPECT_THROW(extract_params(regularize_grid({}), {0, 0, 10, 80}, 0, 8), ta::DomainError);
}

TEST(ExtractParams, ScaleInvariance) {
    auto boxes = jitter(exact_grid(3, 4), 9, 2.0);
    boxes.push_back({Label::entry, 300, 620, 90, 160, 1.0});
    boxes.push_back({Label::window_sill, 95, 183, 70, 6, 1.0});
    auto doubled = boxes;
    for (auto& b : doubled) {
        b.x *= 2;
        b.y *= 2;
        b.w *= 2;
        b.h *= 2;
    }
    const auto p = extract_params(regularize_grid(boxes), {50, 40, 700, 760}, 14, 15.2);
    // Twice the pixels of the same facade.
    EXPECT_EQ(extract_params(regularize_grid(doubled), {100, 80, 1400, 1520}, 14, 15.2), p);
    // Twice the pixels and twice the declared size: shape parameters unchanged, meters doubled.
    const auto q = extract_params(regularize_grid(doubled), {100, 80, 1400, 1520}, 28, 30.4);
    ASSERT_EQ(q.rows.size(), p.rows.size());
    for (std::size_t i = 0; i < p.rows.size(); ++i) {
        EXPECT_DOUBLE_EQ(q.rows[i].ratio, p.rows[i].ratio);
        EXPECT_DOUBLE_EQ(q.rows[i].height, 2 * p.rows[i].height);
    }
    for (std::size_t i = 0; i < p.columns.size(); ++i) EXPECT_DOUBLE_EQ(q.columns[i].center, p.columns[i].center);
    EXPECT_EQ(q.windows, p.windows);
}

TEST(ExtractParams, ColumnCentersIncreaseWithinUnitInterval) {
    const auto p = extract_params(regularize_grid(jitter(exact_grid(2, 5), 4, 2.0)), {0, 0, 900, 600}, 18, 12);
    for (std::size_t i = 0; i < p.columns.size(); ++i) {
        EXPECT_GE(p.columns[i].center, 0.0);
        EXPECT_LE(p.columns[i].center, 1.0);
        if (i) {
            EXPECT_LT(p.columns[i - 1].center, p.columns[i].center);
        }
    }
    for (const auto& r : p.rows) EXPECT_GT(r.ratio, 0);
}

TEST(Annotation, RoundTripAndErrors) {
    const auto j = nlohmann::json::parse(R"({
      "image": {"width": 800, "height": 600},
      "boxes": [{"label": "window", "x": 10, "y": 20, "w": 30, "h": 40, "confidence": 0.75},
                {"label": "stair", "x": 100, "y": 500, "w": 80, "h": 60}],
      "facade": {"x": 5, "y": 5, "w": 790, "h": 590},
      "link": {"feature_id": 12, "edge_index": 2},
      "segments": [[0, 0, 10, 1], [0, 5, 10, 6]]
    })");
    const Annotation a = annotation_from_json(j);
    EXPECT_EQ(a.boxes.size(), 2u);
    EXPECT_EQ(a.boxes[1].label, Label::stair);
    EXPECT_EQ(a.boxes[1].confidence, 1.0);
    EXPECT_EQ(a.link->feature_id, 12u);
    EXPECT_EQ(a.segments.size(), 2u);
    EXPECT_EQ(annotation_from_json(annotation_to_json(a)).boxes, a.boxes);

    auto bad = j;
    bad["boxes"][0]["label"] = "balcony";
    EXPECT_THROW(annotation_from_json(bad), ta::ValidationError);
    bad = j;
    bad["boxes"][0]["w"] = 0;
    EXPECT_THROW(annotation_from_json(bad), ta::ValidationError);
    bad = j;
    bad["boxes"][0]["confidence"] = 1.5;
    EXPECT_THROW(annotation_from_json(bad), ta::ValidationError);
    bad = j;
    bad.erase("image");
    EXPECT_THROW(annotation_from_json(bad), ta::ValidationError);
}

TEST(ParseFacade, FrontalAnnotation) {
    Annotation a;
    a.width = 100;
    a.height = 80;
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 3; ++c) a.boxes.push_back(win(10 + 30 * c, 10 + 40 * r, 10, 20));
    }
    const auto parsed = parse_facade(a, 10, 8);
    EXPECT_LT((parsed.rectifier.m - Eigen::Matrix3d::Identity()).norm(), 1e-9);
    EXPECT_EQ(parsed.params.n_rows, 2u);
    EXPECT_EQ(parsed.params.n_cols, 3u);
    EXPECT_NEAR(parsed.params.rows[0].ratio, 0.5, 1e-9);
}

} // namespace
