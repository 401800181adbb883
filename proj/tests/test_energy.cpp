#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fbflow/energy.hpp"
#include "fbflow/solver.hpp"

using namespace fbflow;
using std::numbers::pi;

namespace {
const PhaseModel kDefault(0.0, 1.0, 0.05);
}

TEST(GradientSq, Examples) {
    const Domain sq(pi / 2, 32), ac(pi / 4, 32);
    const auto xi = [](double x, double) { return x; };
    const Field fs = Field::from_function(sq, xi), fa = Field::from_function(ac, xi);
    for (auto [i, j] : {std::pair{0, 0}, {5, 7}, {32, 32}, {0, 32}}) {
        EXPECT_NEAR(gradient_sq(fs, i, j), 1.0, 1e-12);
        EXPECT_NEAR(gradient_sq(fa, i, j), 2.0, 1e-12);
    }
    EXPECT_EQ(gradient_sq(Field(sq, 3.0), 4, 4), 0.0);
}

TEST(PhysicalGradient, QuadraticIsExactWithOneSidedEdges) {
    // Second-order differences reproduce quadratics at every node.
    const Domain d(pi / 3, 16);
    const double c = d.cos_theta(), s = d.sin_theta();
    const Field f = Field::from_function(d, [&](double xi, double eta) {
        const double x = xi + eta * c, y = eta * s;
        return x * x - 0.5 * x * y + 2 * y;
    });
    for (int j = 0; j <= 16; j += 4)
        for (int i = 0; i <= 16; i += 4) {
            const Point p = d.node_position(i, j);
            const Point g = physical_gradient(f, i, j);
            EXPECT_NEAR(g.x, 2 * p.x - 0.5 * p.y, 1e-10);
            EXPECT_NEAR(g.y, -0.5 * p.x + 2, 1e-10);
        }
}

TEST(EnergySharp, Examples) {
    const Domain d(pi / 2, 64);
    const CoefficientField q(d);
    EXPECT_NEAR(energy_sharp(Field(d, 0.3), q, kDefault), 0.0, 1e-15);
    EXPECT_NEAR(energy_sharp(Field(d, -0.3), q, kDefault), 1.0, 1e-12);
    // The xi = 0 column sits in the negative phase; its quadrature weight is h/2.
    const Field f = Field::from_function(d, [](double x, double) { return x; });
    EXPECT_NEAR(energy_sharp(f, q, kDefault), 1.0, d.h());
}

TEST(EnergyRelaxed, Examples) {
    const Domain d(pi / 2, 64);
    const CoefficientField q(d);
    EXPECT_NEAR(energy_relaxed(Field(d, kDefault.epsilon), q, kDefault), 0.0, 1e-15);
    EXPECT_NEAR(energy_relaxed(Field(d, 0.0), q, kDefault), 1.0, 1e-12);
    const Field f = Field::from_function(d, [](double x, double) { return x - 0.5; });
    for (double eps : {1e-2, 1e-4, 1e-6}) {
        const PhaseModel m(0.0, 1.0, eps);
        EXPECT_NEAR(energy_relaxed(f, q, m), energy_sharp(f, q, m), 2 * d.h()) << eps;
    }
}

TEST(EnergyRelaxed, Bounds) {
    const Domain d(2.0, 32);
    const CoefficientField q(d);
    const Field f = Field::from_function(d, [](double x, double y) { return std::sin(7 * x) * 0.1 + y - 0.4; });
    const double r = energy_relaxed(f, q, kDefault), s = energy_sharp(f, q, kDefault);
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, s + std::abs(kDefault.jump()) * d.area() + 1e-12);
}

TEST(EnergyRelaxed, ShearedPlaneDirichletPart) {
    const Domain d(pi / 4, 32);
    const CoefficientField q(d);
    const Field f = Field::from_function(d, [](double x, double) { return x; });
    EXPECT_NEAR(energy_relaxed_parts(f, q, kDefault).dirichlet, 2.0 * d.area(), 1e-12);
}

TEST(Energy, QuadratureConvergesAtSecondOrder) {
    // Dirichlet energy of sin(pi x) cos(pi y) on the unit square is pi^2 / 2.
    std::vector<double> err;
    for (int n : {16, 32, 64, 128}) {
        const Domain d(pi / 2, n);
        const Field f = Field::from_function(d, [](double x, double y) { return std::sin(pi * x) * std::cos(pi * y); });
        err.push_back(std::abs(energy_relaxed_parts(f, CoefficientField(d), kDefault).dirichlet - pi * pi / 2));
    }
    for (std::size_t k = 1; k < err.size(); ++k) EXPECT_NEAR(err[k - 1] / err[k], 4.0, 0.3);
}

TEST(Energy, InitialDataScalesWithAmplitudeSquared) {
    const Domain d(pi / 2, 256);
    const CoefficientField q(d);
    const PhaseModel m(0.0, 1.0, 2 * d.h());
    std::vector<double> J;
    for (double A : {1.0, 2.0, 4.0}) J.push_back(energy_relaxed(initial_data(d, {A, 0.2, 0.01}), q, m));
    EXPECT_NEAR(J[1] / J[0], 4.0, 0.4);
    EXPECT_NEAR(J[2] / J[0], 16.0, 1.6);
}

TEST(CompensatedSum, RecoversSmallTerms) {
    detail::CompensatedSum s;
    s.add(1.0);
    for (int k = 0; k < 1000; ++k) s.add(1e-16);
    s.add(-1.0);
    EXPECT_NEAR(s.value(), 1e-13, 1e-20);
}
