#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fbflow {

/// Error raised for invalid configuration or arguments.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Parallelogram domain on the unit reference square.
///
/// Reference coordinates (xi, eta) in [0,1]^2 map to physical
/// (x, y) = (xi + eta cos(theta), eta sin(theta)). The lattice has
/// (n+1) x (n+1) nodes with spacing h = 1/n. The Neumann part N is
/// {xi = 0} U {eta = 1}; the Dirichlet part S is {eta = 0} U {xi = 1}.
/// The two corners shared by N and S, (0,0) and (1,1), belong to S.
class Domain {
public:
    static constexpr double kMinSin = 1e-12;
    static constexpr int kMinCells = 8;

    Domain(double theta, int n) : theta_(theta), n_(n) {
        if (!std::isfinite(theta) || std::abs(std::sin(theta)) < kMinSin)
            throw Error("degenerate parallelogram: |sin(theta)| < 1e-12 for theta = " +
                        std::to_string(theta));
        if (n < kMinCells)
            throw Error("grid too coarse: n = " + std::to_string(n) + " (need n >= 8)");
        h_ = 1.0 / static_cast<double>(n);
        sin_ = std::sin(theta);
        cos_ = std::cos(theta);
        // cos(pi/2) evaluates to ~6e-17; snap it so the square case is exact
        if (std::abs(cos_) < 1e-15) cos_ = 0.0;
    }

    double theta() const { return theta_; }
    int n() const { return n_; }
    double h() const { return h_; }
    double sin_theta() const { return sin_; }
    double cos_theta() const { return cos_; }
    /// |sin(theta)|: Jacobian of the reference-to-physical map.
    double jacobian() const { return std::abs(sin_); }
    double area() const { return jacobian(); }

    int nodes_per_side() const { return n_ + 1; }
    std::size_t node_count() const {
        return static_cast<std::size_t>(n_ + 1) * static_cast<std::size_t>(n_ + 1);
    }

    double xi(int i) const { return i * h_; }
    double eta(int j) const { return j * h_; }

    Point to_physical(double xi, double eta) const { return {xi + eta * cos_, eta * sin_}; }
    Point node_position(int i, int j) const { return to_physical(xi(i), eta(j)); }

    /// Inverse map: (xi, eta) of a physical point.
    Point to_reference(Point p) const { return {p.x - p.y * cos_ / sin_, p.y / sin_}; }

    bool is_dirichlet(int i, int j) const { return j == 0 || i == n_; }
    bool is_neumann(int i, int j) const { return !is_dirichlet(i, j) && (i == 0 || j == n_); }
    bool is_interior(int i, int j) const { return i > 0 && i < n_ && j > 0 && j < n_; }
    bool is_neumann_corner(int i, int j) const { return i == 0 && j == n_; }

    /// Physical location of the Neumann corner (xi = 0, eta = 1).
    Point neumann_corner() const { return to_physical(0.0, 1.0); }

    /// Physical distance from a point to the Dirichlet part S.
    double distance_to_dirichlet(Point p) const {
        return std::min(segment_distance(p, to_physical(0, 0), to_physical(1, 0)),
                        segment_distance(p, to_physical(1, 0), to_physical(1, 1)));
    }

    static double segment_distance(Point p, Point a, Point b) {
        const double dx = b.x - a.x, dy = b.y - a.y;
        const double len2 = dx * dx + dy * dy;
        double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        return distance(p, {a.x + t * dx, a.y + t * dy});
    }

private:
    double theta_;
    int n_;
    double h_ = 0.0;
    double sin_ = 1.0;
    double cos_ = 0.0;
};

inline Domain build_domain(double theta, int n) { return Domain(theta, n); }

inline Point to_physical(const Domain& d, double xi, double eta) { return d.to_physical(xi, eta); }

/// Coefficients of a v_xixi + b v_xieta + c v_etaeta, the Laplacian in
/// reference coordinates. The same (a, b, c) give |grad v|^2 as
/// a v_xi^2 + b v_xi v_eta + c v_eta^2.
struct OperatorCoefficients {
    double a = 1.0;
    double b = 0.0;
    double c = 1.0;

    double discriminant() const { return b * b - 4.0 * a * c; }
};

inline OperatorCoefficients operator_coefficients(const Domain& d) {
    const double csc = 1.0 / d.sin_theta();
    const double cot = d.cos_theta() / d.sin_theta();
    return {csc * csc, -2.0 * cot * csc, csc * csc};
}

} // namespace fbflow
