#pragma once

#include <cmath>

#include "fbflow/field.hpp"
#include "fbflow/geometry.hpp"
#include "fbflow/phase_model.hpp"

namespace fbflow {

/// Reference-coordinate derivatives (v_xi, v_eta) at a node.
struct ReferenceGradient {
    double d_xi = 0.0;
    double d_eta = 0.0;
};

namespace detail {

// Centered in the interior, second-order one-sided on the edges.
inline double nodal_derivative(double m2, double m1, double c, double p1, double p2, int k, int n,
                               double h) {
    if (k == 0) return (-3.0 * c + 4.0 * p1 - p2) / (2.0 * h);
    if (k == n) return (3.0 * c - 4.0 * m1 + m2) / (2.0 * h);
    return (p1 - m1) / (2.0 * h);
}

// Neumaier compensated sum; deterministic for a fixed visiting order.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            carry_ += (sum_ - t) + x;
        else
            carry_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + carry_; }

private:
    double sum_ = 0.0;
    double carry_ = 0.0;
};

} // namespace detail

inline ReferenceGradient reference_gradient(const Field& f, int i, int j) {
    const int n = f.n();
    const double h = f.domain().h();
    auto at = [&](int a, int b) { return (a < 0 || a > n || b < 0 || b > n) ? 0.0 : f(a, b); };
    return {detail::nodal_derivative(at(i - 2, j), at(i - 1, j), f(i, j), at(i + 1, j), at(i + 2, j),
                                     i, n, h),
            detail::nodal_derivative(at(i, j - 2), at(i, j - 1), f(i, j), at(i, j + 1), at(i, j + 2),
                                     j, n, h)};
}

/// Physical gradient (v_x, v_y) from reference derivatives via the inverse map.
inline Point physical_gradient(const Domain& d, ReferenceGradient g) {
    return {g.d_xi, (g.d_eta - d.cos_theta() * g.d_xi) / d.sin_theta()};
}

inline Point physical_gradient(const Field& f, int i, int j) {
    return physical_gradient(f.domain(), reference_gradient(f, i, j));
}

/// |grad v|^2 at node (i, j): a v_xi^2 + b v_xi v_eta + c v_eta^2.
inline double gradient_sq(const Field& f, int i, int j) {
    const auto k = operator_coefficients(f.domain());
    const auto g = reference_gradient(f, i, j);
    const double s = k.a * g.d_xi * g.d_xi + k.b * g.d_xi * g.d_eta + k.c * g.d_eta * g.d_eta;
    return std::max(s, 0.0);
}

struct EnergyParts {
    double dirichlet = 0.0;
    double potential = 0.0;
    double total() const { return dirichlet + potential; }
};

/// Trapezoidal quadrature of |grad v|^2 + Q^2 density(v) over the parallelogram.
///
/// The gradient term is integrated cell by cell: each cell corner takes the
/// difference quotients of the two cell edges meeting there. In the interior
/// the derivative of this sum is exactly the nine-point operator used by the
/// stepper, so the discrete energy is a Lyapunov function of the flow.
template <typename Density>
EnergyParts integrate_energy(const Field& f, const CoefficientField& q, Density&& density) {
    const Domain& d = f.domain();
    const int n = d.n();
    const double h = d.h();
    const auto k = operator_coefficients(d);
    const double cell = d.jacobian() * h * h;

    detail::CompensatedSum grad, pot;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const double v00 = f(i, j), v10 = f(i + 1, j), v01 = f(i, j + 1), v11 = f(i + 1, j + 1);
            const double xb = (v10 - v00) / h, xt = (v11 - v01) / h;
            const double el = (v01 - v00) / h, er = (v11 - v10) / h;
            const double e = 0.5 * k.a * (xb * xb + xt * xt) +
                             0.25 * k.b * (xb + xt) * (el + er) + 0.5 * k.c * (el * el + er * er);
            grad.add(cell * e);
        }
    }
    for (int j = 0; j <= n; ++j) {
        const double wj = (j == 0 || j == n) ? 0.5 : 1.0;
        for (int i = 0; i <= n; ++i) {
            const double wi = (i == 0 || i == n) ? 0.5 : 1.0;
            pot.add(wi * wj * cell * q.squared(i, j) * density(f(i, j)));
        }
    }
    return {grad.value(), pot.value()};
}

inline EnergyParts energy_sharp_parts(const Field& f, const CoefficientField& q, const PhaseModel& m) {
    return integrate_energy(f, q, [&](double v) { return lambda_sq(v, m); });
}

inline EnergyParts energy_relaxed_parts(const Field& f, const CoefficientField& q,
                                        const PhaseModel& m) {
    return integrate_energy(f, q, [&](double v) { return phi(v, m); });
}

/// J[v] = integral of |grad v|^2 + Q^2 lambda^2(v).
inline double energy_sharp(const Field& f, const CoefficientField& q, const PhaseModel& m) {
    return energy_sharp_parts(f, q, m).total();
}

/// J_eps[v] = integral of |grad v|^2 + Q^2 phi_eps(v).
inline double energy_relaxed(const Field& f, const CoefficientField& q, const PhaseModel& m) {
    return energy_relaxed_parts(f, q, m).total();
}

} // namespace fbflow
