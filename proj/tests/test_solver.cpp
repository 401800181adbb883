#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fbflow/solver.hpp"

using namespace fbflow;
using std::numbers::pi;

namespace {

double row_difference(const DiffusionOperator& a, const DiffusionOperator& b, int u) {
    const Eigen::SparseVector<double> ra = a.full().row(u), rb = b.full().row(u);
    return (Eigen::SparseVector<double>(ra - rb)).norm();
}

double operator_scale(const Domain& d) { return 1.0 / (d.h() * d.h()); }

} // namespace

TEST(BoundaryData, Profile) {
    const BoundaryData b{1.0, 0.3, 0.02};
    EXPECT_EQ(b.value(0.3), 0.0);
    EXPECT_NEAR(b.value(0.32), 1.0, 1e-15);
    EXPECT_EQ(b.value(0.9), 1.0);
    EXPECT_EQ(b.value(0.0), -1.0);
    EXPECT_NEAR((BoundaryData{2.0, 0.3, 0.02}).value(0.31), 0.70711, 5e-6);
}

TEST(BoundaryData, Validation) {
    EXPECT_THROW((BoundaryData{1.0, 0.2, 0.3}).validate(), Error);
    EXPECT_THROW((BoundaryData{0.0, 0.2, 0.01}).validate(), Error);
    EXPECT_THROW((BoundaryData{1.0, 1.2, 0.1}).validate(), Error);
    EXPECT_NO_THROW((BoundaryData{1.0, 1.05, 0.1}).validate());
}

TEST(ApplyDirichlet, WritesSAndIsIdempotent) {
    const Domain d(pi / 4, 16);
    const BoundaryData b{1.5, 0.4, 0.05};
    const Field f = apply_dirichlet(Field(d, 7.0), b);
    for (int j = 0; j <= 16; ++j) EXPECT_EQ(f(16, j), b.value(d.node_position(16, j).x));
    for (int i = 0; i <= 16; ++i) EXPECT_EQ(f(i, 0), b.value(d.xi(i)));
    EXPECT_EQ(f(3, 5), 7.0);
    const Field g = apply_dirichlet(f, b);
    for (std::size_t k = 0; k < f.values().size(); ++k) EXPECT_EQ(f.values()[k], g.values()[k]);
}

TEST(Ghost, RightAngleIsReflection) {
    const Domain d(pi / 2, 16);
    const Field f = Field::from_function(d, [](double x, double y) { return std::sin(3 * x) + y * y * y; });
    const auto left = ghost_values(f, GhostEdge::xi0);
    for (int j = 0; j < 16; ++j) EXPECT_EQ(left[j], f(1, j));
    const auto top = ghost_values(f, GhostEdge::eta1);
    for (int i = 1; i <= 16; ++i) EXPECT_EQ(top[i - 1], f(i, 15));
}

TEST(Ghost, TopEdgeOfLinearRamp) {
    const Domain d(pi / 2, 16);
    const Field f = Field::from_function(d, [](double, double y) { return y; });
    for (double g : ghost_values(f, GhostEdge::eta1)) EXPECT_NEAR(g, 15.0 / 16, 1e-15);
}

TEST(Ghost, RejectsInsidePositions) { EXPECT_THROW(ghost_stencil(Domain(1.0, 8), 3, 3), Error); }

TEST(DiffusionOperator, ClosuresAgreeInTheInterior) {
    for (double th : {pi / 4, pi / 2, 2.0, 5 * pi / 4}) {
        const Domain d(th, 12);
        const DiffusionOperator e(d, NeumannClosure::energy), g(d, NeumannClosure::ghost);
        for (int u = 0; u < e.unknowns(); ++u) {
            const int nd = e.node_index(u);
            if (!d.is_interior(nd % 13, nd / 13)) continue;
            EXPECT_LT(row_difference(e, g, u), 1e-12 * operator_scale(d)) << th << " node " << nd;
        }
    }
}

TEST(DiffusionOperator, ClosuresAgreeEverywhereOnTheSquare) {
    const Domain d(pi / 2, 12);
    const DiffusionOperator e(d, NeumannClosure::energy), g(d, NeumannClosure::ghost);
    for (int u = 0; u < e.unknowns(); ++u) EXPECT_LT(row_difference(e, g, u), 1e-12 * operator_scale(d));
}

TEST(DiffusionOperator, AnnihilatesConstants) {
    for (auto cl : {NeumannClosure::energy, NeumannClosure::ghost}) {
        const Domain d(5 * pi / 4, 16);
        const Eigen::VectorXd lv = DiffusionOperator(d, cl).apply(Field(d, 2.5));
        EXPECT_LT(lv.lpNorm<Eigen::Infinity>(), 1e-9);
    }
}

TEST(DiffusionOperator, InteriorSecondOrderConsistency) {
    // 2 Lap of sin(x) cos(2y) is -10 sin(x) cos(2y).
    std::vector<double> err;
    for (int n : {16, 32, 64}) {
        const Domain d(pi / 3, n);
        const double c = d.cos_theta(), s = d.sin_theta();
        auto u = [&](double xi, double eta) { return std::sin(xi + eta * c) * std::cos(2 * eta * s); };
        const Field f = Field::from_function(d, u);
        const DiffusionOperator op(d);
        const Eigen::VectorXd lv = op.apply(f);
        double worst = 0;
        for (int k = 0; k < op.unknowns(); ++k) {
            const int nd = op.node_index(k), i = nd % (n + 1), j = nd / (n + 1);
            if (!d.is_interior(i, j)) continue;
            worst = std::max(worst, std::abs(lv[k] + 10 * u(d.xi(i), d.eta(j))));
        }
        err.push_back(worst);
    }
    EXPECT_NEAR(err[0] / err[1], 4.0, 0.4);
    EXPECT_NEAR(err[1] / err[2], 4.0, 0.4);
}

TEST(DiffusionOperator, EnergyRowsAreTheEnergyGradient) {
    // L v = -(1/w) dE/dv with E the cell-trapezoid Dirichlet energy; check by finite differences.
    const Domain d(2.2, 10);
    const CoefficientField q(d);
    const PhaseModel m(1.0, 1.0, 1.0);
    const Field f = Field::from_function(d, [](double x, double y) { return std::sin(2 * x + y) + x * y; });
    const DiffusionOperator op(d);
    const Eigen::VectorXd lv = op.apply(f);
    const double cell = d.jacobian() * d.h() * d.h();
    for (int u = 0; u < op.unknowns(); u += 7) {
        const int nd = op.node_index(u), i = nd % 11, j = nd / 11;
        const double w = ((i == 0 || i == 10) ? 0.5 : 1.0) * ((j == 0 || j == 10) ? 0.5 : 1.0) * cell;
        Field a = f, b = f;
        const double s = 1e-5;
        a(i, j) += s;
        b(i, j) -= s;
        const double dE = (energy_relaxed_parts(a, q, m).dirichlet - energy_relaxed_parts(b, q, m).dirichlet) / (2 * s);
        EXPECT_NEAR(lv[u], -dE / w, 1e-5 * operator_scale(d)) << i << "," << j;
    }
}

TEST(Step, ConstantCompatibleStateIsFixed) {
    const Domain d(pi / 4, 16);
    const PhaseModel m(0.0, 1.0, 2 * d.h());
    const Field f(d, 1.0);
    const Field g = step(f, SolverConfig{}, m, CoefficientField(d));
    for (std::size_t k = 0; k < f.values().size(); ++k) EXPECT_NEAR(g.values()[k], 1.0, 1e-10);
}

TEST(Step, LowersEnergyFromInitialData) {
    const Domain d(pi / 2, 32);
    const PhaseModel m(0.0, 1.0, 2 * d.h());
    const CoefficientField q(d);
    const Field f0 = initial_data(d, {2.0, 0.3, 0.05});
    const Field f1 = step(f0, SolverConfig{}, m, q);
    EXPECT_LT(energy_relaxed(f1, q, m), energy_relaxed(f0, q, m));
}

TEST(RunToSteadyState, ConstantConvergesWithinWindow) {
    const Domain d(pi / 2, 16);
    const PhaseModel m(0.0, 1.0, 2 * d.h());
    const SolverConfig cfg;
    const SteadyState st = run_to_steady_state(Field(d, -1.0), cfg, m, CoefficientField(d));
    EXPECT_TRUE(st.converged);
    EXPECT_LE(st.steps, cfg.ss_window);
}

TEST(Step, DiscreteHarmonicStateIsFixed) {
    // Solve L v = 0 for the unknowns directly, then step the linear flow.
    const Domain d(2.0, 24);
    const PhaseModel m(1.0, 1.0, 2 * d.h());
    const CoefficientField q(d);
    Field f = initial_data(d, {1.0, 0.5, 0.2});
    const DiffusionOperator op(d);
    Eigen::VectorXd rhs = -op.apply(f);
    Eigen::VectorXd known(op.unknowns());
    for (int u = 0; u < op.unknowns(); ++u) known[u] = f.values()[static_cast<std::size_t>(op.node_index(u))];
    rhs += op.interior_block() * known; // remove the unknowns' own contribution
    Eigen::SparseMatrix<double> block = op.interior_block();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(block);
    const Eigen::VectorXd x = lu.solve(rhs);
    for (int u = 0; u < op.unknowns(); ++u) f.values()[static_cast<std::size_t>(op.node_index(u))] = x[u];
    EXPECT_LT(scaled_residual_el(f, m, q), 1e-12);
    SolverConfig cfg;
    cfg.dt_factor = 4.0;
    const Field next = step(f, cfg, m, q);
    for (std::size_t k = 0; k < next.values().size(); ++k) EXPECT_NEAR(next.values()[k], f.values()[k], 1e-9);
}

TEST(RunToSteadyState, DescentAndMaximumPrinciple) {
    const Domain d(pi / 4, 32);
    const PhaseModel m(0.0, 1.0, 2 * d.h());
    const CoefficientField q(d);
    const BoundaryData b{1.5, 0.3, 0.05};
    SolverConfig cfg;
    cfg.max_steps = 400;
    GradientFlow flow(d, m, q, cfg);
    Field f = initial_data(d, b);
    double J = flow.energy(f);
    for (int k = 0; k < cfg.max_steps; ++k) {
        flow.advance(f);
        const double next = flow.energy(f);
        EXPECT_LE(next - J, 10 * cfg.lin_tol * std::max(1.0, std::abs(J)));
        J = next;
        EXPECT_GE(f.min(), -b.amplitude - m.epsilon);
        EXPECT_LE(f.max(), b.amplitude + m.epsilon);
    }
}

TEST(RunToSteadyState, AntiDiagonalSymmetry) {
    // With phi' = 0 and data odd under (x, y) -> (1 - y, 1 - x), the state stays odd.
    const int n = 24;
    const Domain d(pi / 2, n);
    const PhaseModel m(1.0, 1.0, 0.1);
    const CoefficientField q(d);
    SolverConfig cfg;
    cfg.dt_factor = 2.0;
    cfg.lin_tol = 1e-12;
    const Field f0 = Field::from_function(d, [](double x, double y) {
        const double p = x + y - 1, r = x - y;
        return std::sin(3 * p) + 0.3 * p * std::cos(5 * r);
    });
    const SteadyState st = run_to_steady_state(f0, cfg, m, q);
    ASSERT_TRUE(st.converged);
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) EXPECT_NEAR(st.field(i, j), -st.field(n - j, n - i), 1e-8);
}

TEST(ResidualEl, ConstantIsZero) {
    const Domain d(1.0, 16);
    const PhaseModel m(0.0, 1.0, 0.1);
    EXPECT_LT(residual_el(Field(d, -0.7), m, CoefficientField(d)), 1e-9);
    EXPECT_LT(residual_el(Field(d, -0.7), m, CoefficientField(d), NeumannClosure::ghost), 1e-9);
}

TEST(GhostClosure, StillConvergesOnTheSquare) {
    const Domain d(pi / 2, 16);
    const PhaseModel m(0.0, 1.0, 2 * d.h());
    SolverConfig cfg;
    cfg.closure = NeumannClosure::ghost;
    const SteadyState st = run_to_steady_state(initial_data(d, {1.0, 0.3, 0.1}), cfg, m, CoefficientField(d));
    EXPECT_TRUE(st.converged);
}

TEST(SolverConfig, Validation) {
    SolverConfig c;
    c.slave_factor = 1.5;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.ss_window = 0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.lin_tol = 0;
    EXPECT_THROW(c.validate(), Error);
}

TEST(EnergyTrace, RejectsNonIncreasingSteps) {
    EnergyTrace t;
    t.push(0, 0, 1.0);
    EXPECT_THROW(t.push(0, 0, 1.0), Error);
    EXPECT_THROW(t.push(1, 0, NAN), Error);
}
