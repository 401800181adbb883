#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "fbflow/free_boundary.hpp"

using namespace fbflow;
using std::numbers::pi;

TEST(Contour, VerticalPlane) {
    const Domain d(pi / 2, 32);
    const FreeBoundary fb = extract_zero_contour(Field::from_function(d, [](double x, double) { return x - 0.5 + 1e-3; }));
    ASSERT_EQ(fb.polylines.size(), 1u);
    const auto& pl = fb.polylines[0];
    EXPECT_FALSE(pl.closed);
    for (const Point& p : pl.points) EXPECT_NEAR(p.x, 0.5, d.h());
    ASSERT_EQ(fb.terminal_points.size(), 2u);
    EXPECT_EQ(fb.terminal_points[0].edge, EdgeTag::dirichlet);
    EXPECT_EQ(fb.terminal_points[1].edge, EdgeTag::eta1);
    EXPECT_NEAR(signed_arclength(fb.terminal_points[1], d), 0.5, d.h());
}

TEST(Contour, SignedFieldWithoutZeroIsEmpty) {
    const Domain d(1.0, 16);
    const FreeBoundary fb = extract_zero_contour(Field(d, 0.5));
    EXPECT_TRUE(fb.empty());
    EXPECT_TRUE(std::isinf(fb.corner_distance));
    EXPECT_THROW(terminal_point_arclength(fb, d), Error);
}

TEST(Contour, ExactZerosJoinTheNegativePhase) {
    const Domain d(pi / 2, 16);
    // Zero on the column x = 0.5 exactly; positive to the right.
    const FreeBoundary fb = extract_zero_contour(Field::from_function(d, [](double x, double) { return x - 0.5; }));
    ASSERT_EQ(fb.polylines.size(), 1u);
    for (const Point& p : fb.polylines[0].points) {
        EXPECT_GT(p.x, 0.5);
        EXPECT_LT(p.x, 0.5 + 1e-12);
    }
}

TEST(Contour, CircleIsClosedAndAccurate) {
    const Domain d(pi / 2, 128);
    const FreeBoundary fb = extract_zero_contour(Field::from_function(
        d, [](double x, double y) { return (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5) - 0.09; }));
    ASSERT_EQ(fb.polylines.size(), 1u);
    const auto& pl = fb.polylines[0];
    EXPECT_TRUE(pl.closed);
    EXPECT_EQ(pl.points.front().x, pl.points.back().x);
    EXPECT_EQ(pl.points.front().y, pl.points.back().y);
    for (const Point& p : pl.points) EXPECT_NEAR(std::hypot(p.x - 0.5, p.y - 0.5), 0.3, d.h());
    // Every angle is represented: no gaps larger than a few cells.
    for (std::size_t k = 1; k < pl.points.size(); ++k) EXPECT_LT(distance(pl.points[k], pl.points[k - 1]), 2 * d.h());
    ASSERT_EQ(fb.terminal_points.size(), 1u);
    EXPECT_EQ(fb.terminal_points[0].edge, EdgeTag::closed);
}

TEST(Contour, SaddleCellsAreSplitByCenterSign) {
    const Domain d(pi / 2, 8);
    Field f(d, 1.0);
    // Checkerboard cell at (3,3): corners 00 and 11 negative, center negative.
    f(3, 3) = -1;
    f(4, 4) = -1;
    f(4, 3) = 0.5;
    f(3, 4) = 0.5;
    const FreeBoundary fb = extract_zero_contour(f);
    // The negative diagonal is connected, so one closed loop surrounds both nodes.
    ASSERT_EQ(fb.polylines.size(), 1u);
    EXPECT_TRUE(fb.polylines[0].closed);
    f(4, 3) = 3;
    f(3, 4) = 3;
    const FreeBoundary split = extract_zero_contour(f);
    EXPECT_EQ(split.polylines.size(), 2u);
}

TEST(Contour, VerticesInterpolateZeros) {
    const Domain d(2.0, 40);
    auto g = [](double x, double y) { return std::sin(4 * x) * std::cos(3 * y) - 0.2; };
    const Field f = Field::from_function(d, g);
    const FreeBoundary fb = extract_zero_contour(f);
    ASSERT_FALSE(fb.empty());
    for (const auto& pl : fb.polylines)
        for (const Point& r : pl.reference) EXPECT_LT(std::abs(f.sample(r.x, r.y)), 1e-12);
}

TEST(Contour, OpenEndsHaveExactlyOneTag) {
    const Domain d(pi / 3, 32);
    const FreeBoundary fb = extract_zero_contour(
        Field::from_function(d, [](double x, double y) { return std::sin(6 * x + 2 * y) + 0.3; }));
    for (const auto& t : fb.terminal_points) {
        if (fb.polylines[static_cast<std::size_t>(t.polyline)].closed) continue;
        EXPECT_NE(t.edge, EdgeTag::none);
        EXPECT_NE(t.edge, EdgeTag::closed);
        const bool on_xi0 = t.reference.x == 0.0, on_eta1 = t.reference.y == 1.0;
        const bool on_s = t.reference.y == 0.0 || t.reference.x == 1.0;
        EXPECT_EQ(on_xi0 + on_eta1 + on_s, 1);
    }
}

TEST(Contour, RefinementStability) {
    auto g = [](double x, double y) { return x * x + 0.5 * y - 0.4; };
    const Domain coarse(pi / 2, 32), fine(pi / 2, 64);
    const auto a = extract_zero_contour(Field::from_function(coarse, g));
    const auto b = extract_zero_contour(Field::from_function(fine, g));
    auto directed = [](const FreeBoundary& p, const FreeBoundary& q) {
        double worst = 0;
        for (const Point& x : p.polylines[0].points) {
            double best = 1e9;
            const auto& pts = q.polylines[0].points;
            for (std::size_t k = 1; k < pts.size(); ++k)
                best = std::min(best, Domain::segment_distance(x, pts[k - 1], pts[k]));
            worst = std::max(worst, best);
        }
        return worst;
    };
    EXPECT_LE(std::max(directed(a, b), directed(b, a)), 2 * coarse.h());
}

TEST(Arclength, Examples) {
    const Domain sq(pi / 2, 16), ac(pi / 4, 16);
    EXPECT_NEAR(signed_arclength({sq.to_physical(0.5, 1), {0.5, 1}, EdgeTag::eta1, 0}, sq), 0.5, 1e-15);
    EXPECT_NEAR(signed_arclength({ac.to_physical(0, 0.5), {0, 0.5}, EdgeTag::xi0, 0}, ac), -0.5, 1e-15);
    EXPECT_EQ(signed_arclength({sq.neumann_corner(), {0, 1}, EdgeTag::eta1, 0}, sq), 0.0);
    EXPECT_THROW(signed_arclength({sq.to_physical(0.5, 0), {0.5, 0}, EdgeTag::dirichlet, 0}, sq), Error);
}

TEST(Contour, CornerDistance) {
    const Domain d(pi / 2, 64);
    const FreeBoundary fb = extract_zero_contour(Field::from_function(d, [](double x, double) { return x - 0.3 + 1e-3; }));
    EXPECT_NEAR(fb.corner_distance, 0.3, d.h());
}

TEST(ContourCsv, HeaderAndRows) {
    const Domain d(pi / 2, 16);
    const FreeBoundary fb = extract_zero_contour(Field::from_function(d, [](double x, double) { return x - 0.47; }));
    std::ostringstream os;
    write_contour_csv(os, fb);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "polyline_id,vertex_index,x,y");
    std::getline(is, line);
    EXPECT_EQ(line.rfind("0,0,", 0), 0u);
}
