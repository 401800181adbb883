#include <cmath>

#include <gtest/gtest.h>

#include "fbflow/phase_model.hpp"

using namespace fbflow;

TEST(PhaseModel, SharpCoefficient) {
    const PhaseModel m(0.0, 1.0, 0.05);
    EXPECT_EQ(lambda_sq(0.3, m), 0.0);
    EXPECT_EQ(lambda_sq(0.0, m), 1.0);
    EXPECT_EQ(lambda_sq(-5.0, PhaseModel(2.0, 1.0, 0.05)), 1.0);
}

TEST(PhaseModel, LayerPlateaus) {
    const PhaseModel m(0.0, 1.0, 0.05);
    EXPECT_EQ(phi(-0.1, m), 1.0);
    EXPECT_EQ(phi(0.05, m), 0.0);
    for (double eps : {0.01, 0.3, 2.0}) EXPECT_NEAR(phi(eps / 2, PhaseModel(0.0, 1.0, eps)), 0.5, 1e-15);
}

TEST(PhaseModel, DerivativeVanishesAtLayerEnds) {
    const PhaseModel m(0.0, 1.0, 0.05);
    EXPECT_EQ(phi_prime(0.0, m), 0.0);
    EXPECT_EQ(phi_prime(0.05, m), 0.0);
}

TEST(PhaseModel, DerivativeMassEqualsJump) {
    for (auto [l1, l2] : {std::pair{0.0, 1.0}, {2.0, 1.0}, {0.5, 3.0}}) {
        const PhaseModel m(l1, l2, 0.07);
        // Composite Simpson on [0, eps].
        const int k = 2000;
        const double step = m.epsilon / k;
        double s = phi_prime(0, m) + phi_prime(m.epsilon, m);
        for (int i = 1; i < k; ++i) s += (i % 2 ? 4.0 : 2.0) * phi_prime(i * step, m);
        EXPECT_NEAR(s * step / 3.0, l1 * l1 - l2 * l2, 1e-10);
    }
}

TEST(PhaseModel, DerivativeIsSingleSigned) {
    const PhaseModel down(0.0, 1.0, 0.1), up(2.0, 1.0, 0.1);
    for (int i = 1; i < 100; ++i) {
        EXPECT_LT(phi_prime(i * 0.001, down), 0.0);
        EXPECT_GT(phi_prime(i * 0.001, up), 0.0);
    }
}

TEST(PhaseModel, PointwiseConsistency) {
    for (double eps : {1e-1, 1e-2, 1e-3}) {
        const PhaseModel m(0.0, 1.0, eps);
        EXPECT_EQ(phi(-0.05, m), lambda_sq(-0.05, m));
        if (eps < 0.05) {
            EXPECT_EQ(phi(0.05, m), lambda_sq(0.05, m));
        }
    }
}

TEST(PhaseModel, DerivativeMatchesFiniteDifferences) {
    const PhaseModel m(0.3, 1.7, 0.2);
    for (int i = 0; i < 50; ++i) {
        const double v = -0.05 + 0.3 * i / 49.0;
        for (double s : {1e-3, 5e-4}) {
            const double fd = (phi(v + s, m) - phi(v - s, m)) / (2 * s);
            // O(s^2) with the layer's third derivative; kinks at 0 and eps are only C^1.
            EXPECT_NEAR(fd, phi_prime(v, m), 40.0 * s) << v;
        }
    }
}

TEST(PhaseModel, SecondDerivativeBound) {
    const PhaseModel m(0.0, 1.0, 0.05);
    for (int i = 0; i <= 100; ++i) EXPECT_LE(std::abs(phi_second(i * 0.0005, m)), phi_prime_lipschitz(m) + 1e-9);
}

TEST(PhaseModel, Validation) {
    EXPECT_THROW(PhaseModel(0.0, 1.0, 0.0), Error);
    EXPECT_THROW(PhaseModel(-1.0, 1.0, 0.1), Error);
    EXPECT_TRUE(PhaseModel(1.0, 1.0, 0.1).is_linear());
}
