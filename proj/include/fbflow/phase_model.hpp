#pragma once

#include <cmath>
#include <numbers>

#include "fbflow/geometry.hpp"

namespace fbflow {

/// Two-phase coefficient lambda(v) and its width-epsilon relaxation.
///
/// The sharp model assigns lambda1^2 to {v > 0} and lambda2^2 to {v <= 0}.
/// The relaxed profile phi_eps rises (or falls) from lambda2^2 at v <= 0 to
/// lambda1^2 at v >= eps along the half-cosine s(t) = (1 - cos(pi t)) / 2,
/// which is C^1 with vanishing slope at both ends of the layer.
struct PhaseModel {
    double lambda1 = 0.0;
    double lambda2 = 1.0;
    double epsilon = 1.0;

    PhaseModel() = default;
    PhaseModel(double l1, double l2, double eps) : lambda1(l1), lambda2(l2), epsilon(eps) {
        validate();
    }

    void validate() const {
        if (!(epsilon > 0.0) || !std::isfinite(epsilon))
            throw Error("phase model: epsilon must be positive");
        if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0))
            throw Error("phase model: lambda1 and lambda2 must be nonnegative");
    }

    /// Equal coefficients make the energy quadratic and the flow linear.
    bool is_linear() const { return lambda1 == lambda2; }

    /// lambda1^2 - lambda2^2: jump of |grad u|^2 across the free boundary.
    double jump() const { return lambda1 * lambda1 - lambda2 * lambda2; }
};

inline double lambda_sq(double v, const PhaseModel& m) {
    return v > 0.0 ? m.lambda1 * m.lambda1 : m.lambda2 * m.lambda2;
}

inline double phi(double v, const PhaseModel& m) {
    const double lo = m.lambda2 * m.lambda2;
    if (v <= 0.0) return lo;
    if (v >= m.epsilon) return m.lambda1 * m.lambda1;
    const double s = 0.5 * (1.0 - std::cos(std::numbers::pi * v / m.epsilon));
    return lo + m.jump() * s;
}

inline double phi_prime(double v, const PhaseModel& m) {
    if (v <= 0.0 || v >= m.epsilon) return 0.0;
    const double k = std::numbers::pi / m.epsilon;
    return m.jump() * 0.5 * k * std::sin(k * v);
}

/// Second derivative; bounded by |jump| pi^2 / (2 eps^2).
inline double phi_second(double v, const PhaseModel& m) {
    if (v <= 0.0 || v >= m.epsilon) return 0.0;
    const double k = std::numbers::pi / m.epsilon;
    return m.jump() * 0.5 * k * k * std::cos(k * v);
}

/// Lipschitz constant of phi_prime.
inline double phi_prime_lipschitz(const PhaseModel& m) {
    return std::abs(m.jump()) * std::numbers::pi * std::numbers::pi /
           (2.0 * m.epsilon * m.epsilon);
}

} // namespace fbflow
