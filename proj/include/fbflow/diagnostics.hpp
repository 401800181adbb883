#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "fbflow/energy.hpp"
#include "fbflow/field.hpp"
#include "fbflow/free_boundary.hpp"
#include "fbflow/geometry.hpp"
#include "fbflow/phase_model.hpp"

namespace fbflow {

namespace detail {

struct CellSample {
    double value = 0.0;
    Point gradient; // physical
};

// Bilinear interpolant and its physical gradient at reference (xi, eta).
inline CellSample bilinear_sample(const Field& f, double xi, double eta) {
    const Domain& d = f.domain();
    const int n = d.n();
    const double h = d.h();
    const double s = std::clamp(xi, 0.0, 1.0) * n;
    const double t = std::clamp(eta, 0.0, 1.0) * n;
    const int i = std::min(static_cast<int>(s), n - 1);
    const int j = std::min(static_cast<int>(t), n - 1);
    const double fs = s - i, ft = t - j;
    const double v00 = f(i, j), v10 = f(i + 1, j), v01 = f(i, j + 1), v11 = f(i + 1, j + 1);
    CellSample out;
    out.value = (1 - fs) * (1 - ft) * v00 + fs * (1 - ft) * v10 + (1 - fs) * ft * v01 + fs * ft * v11;
    const ReferenceGradient g{((1 - ft) * (v10 - v00) + ft * (v11 - v01)) / h,
                              ((1 - fs) * (v01 - v00) + fs * (v11 - v10)) / h};
    out.gradient = physical_gradient(d, g);
    return out;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

inline double distance_to_boundary(const Domain& d, Point p) {
    const Point c00 = d.to_physical(0, 0), c10 = d.to_physical(1, 0), c11 = d.to_physical(1, 1),
                c01 = d.to_physical(0, 1);
    return std::min({Domain::segment_distance(p, c00, c10), Domain::segment_distance(p, c10, c11),
                     Domain::segment_distance(p, c11, c01), Domain::segment_distance(p, c01, c00)});
}

inline double distance_to_neumann(const Domain& d, Point p) {
    const Point c00 = d.to_physical(0, 0), c11 = d.to_physical(1, 1), c01 = d.to_physical(0, 1);
    return std::min(Domain::segment_distance(p, c01, c00), Domain::segment_distance(p, c01, c11));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Monotonicity functional

struct MonotonicityProbe {
    Point center;
    std::vector<double> radii;
    std::vector<double> phi_values;
    std::vector<double> plus_energy;  // integral of |grad u+|^2 over B_r
    std::vector<double> minus_energy; // integral of |grad u-|^2 over B_r

    /// Largest drop phi(r_k) - phi(r_{k+1}) (0 if nondecreasing).
    double max_decrease() const {
        double worst = 0.0;
        for (std::size_t k = 1; k < phi_values.size(); ++k)
            worst = std::max(worst, phi_values[k - 1] - phi_values[k]);
        return worst;
    }
};

/// phi(r) = r^-4 * int_{B_r} |grad u+|^2 * int_{B_r} |grad u-|^2 over B_r(center)
/// intersected with the domain, by 4 x 4 subsampled cell quadrature.
inline MonotonicityProbe monotonicity_phi(const Field& f, Point center, std::vector<double> radii) {
    const Domain& d = f.domain();
    const int n = d.n();
    const double h = d.h();
    if (radii.empty()) throw Error("monotonicity_phi: no radii given");
    for (std::size_t k = 0; k < radii.size(); ++k) {
        if (!(radii[k] >= 5.0 * h * (1.0 - 1e-12)))
            throw Error("monotonicity_phi: radius " + std::to_string(radii[k]) + " is below 5h");
        if (k > 0 && !(radii[k] > radii[k - 1]))
            throw Error("monotonicity_phi: radii must be strictly increasing");
    }
    if (detail::distance_to_neumann(d, center) > 1e-9)
        throw Error("monotonicity_phi: center is not on the Neumann boundary");
    if (!(d.distance_to_dirichlet(center) > radii.back()))
        throw Error("monotonicity_phi: ball of radius " + std::to_string(radii.back()) +
                    " reaches the Dirichlet boundary");

    constexpr int kSub = 4;
    const double weight = d.jacobian() * h * h / (kSub * kSub);
    std::vector<detail::CompensatedSum> plus(radii.size()), minus(radii.size());
    const double rmax = radii.back();
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            // Skip cells whose corners are all far outside the largest ball.
            const Point mid = d.to_physical((i + 0.5) * h, (j + 0.5) * h);
            if (distance(mid, center) > rmax + 2.0 * h) continue;
            for (int b = 0; b < kSub; ++b)
                for (int a = 0; a < kSub; ++a) {
                    const double xi = (i + (a + 0.5) / kSub) * h, eta = (j + (b + 0.5) / kSub) * h;
                    const double r = distance(d.to_physical(xi, eta), center);
                    if (r >= rmax) continue;
                    const auto s = detail::bilinear_sample(f, xi, eta);
                    const double g2 = s.gradient.x * s.gradient.x + s.gradient.y * s.gradient.y;
                    for (std::size_t k = 0; k < radii.size(); ++k) {
                        if (r >= radii[k]) continue;
                        if (s.value > 0.0) plus[k].add(weight * g2);
                        else if (s.value < 0.0) minus[k].add(weight * g2);
                    }
                }
        }
    MonotonicityProbe out;
    out.center = center;
    out.radii = radii;
    for (std::size_t k = 0; k < radii.size(); ++k) {
        const double p = plus[k].value(), m = minus[k].value();
        const double r4 = radii[k] * radii[k] * radii[k] * radii[k];
        out.plus_energy.push_back(p);
        out.minus_energy.push_back(m);
        out.phi_values.push_back(p * m / r4);
    }
    return out;
}

/// Drops in phi(r) up to kMonotonicitySlack * (h / r_min) * max phi are
/// tolerated. On the half-plane model u = x the quadrature gives drops of at
/// most 0.03 (h / r_min) max phi for n in {64, 128, 256}.
inline constexpr double kMonotonicitySlack = 0.5;

inline double monotonicity_tolerance(const MonotonicityProbe& p, double h, double slack = kMonotonicitySlack) {
    double top = 0.0;
    for (double v : p.phi_values) top = std::max(top, v);
    return p.radii.empty() ? 0.0 : slack * h / p.radii.front() * top;
}

inline bool nearly_nondecreasing(const MonotonicityProbe& p, double h, double slack = kMonotonicitySlack) {
    return p.max_decrease() <= monotonicity_tolerance(p, h, slack);
}

/// `count` equally spaced radii from max(5h, r_max / 8) to r_max = 0.9 d(center, S).
inline std::vector<double> probe_radii(const Domain& d, Point center, int count = 8) {
    const double r_max = 0.9 * d.distance_to_dirichlet(center);
    const double r_min = std::max(5.0 * d.h(), r_max / 8.0);
    if (!(r_max > r_min)) throw Error("probe_radii: center is too close to the Dirichlet boundary");
    std::vector<double> r;
    for (int k = 0; k < count; ++k) r.push_back(r_min + (r_max - r_min) * k / (count - 1));
    return r;
}

/// Neumann lattice node (physical position) closest to the contour, among
/// nodes whose probe_radii span at least a factor of two.
inline Point nearest_neumann_node(const FreeBoundary& fb, const Domain& d) {
    if (fb.empty()) throw Error("nearest_neumann_node: empty free boundary");
    const int n = d.n();
    Point best{};
    double best_dist = std::numeric_limits<double>::infinity();
    auto consider = [&](int i, int j) {
        if (!d.is_neumann(i, j)) return;
        const Point p = d.node_position(i, j);
        if (0.9 * d.distance_to_dirichlet(p) < 10.0 * d.h()) return;
        for (const auto& pl : fb.polylines)
            for (const Point& q : pl.points)
                if (const double s = distance(p, q); s < best_dist) {
                    best_dist = s;
                    best = p;
                }
    };
    for (int j = 1; j <= n; ++j) consider(0, j);
    for (int i = 1; i < n; ++i) consider(i, n);
    if (!std::isfinite(best_dist)) throw Error("nearest_neumann_node: no Neumann node far enough from S");
    return best;
}

// ---------------------------------------------------------------------------
// Sector eigenvalues

struct SectorEigenvalues {
    double theta_plus = 0.0;
    double theta_minus = 0.0;
    double sqrt_plus = 0.0;  // pi / (2 theta+)
    double sqrt_minus = 0.0; // pi / (2 theta-)
    double sqrt_sum = 0.0;
};

inline SectorEigenvalues sector_bound(double theta_plus, double theta_minus) {
    if (!(theta_plus > 0.0) || !(theta_minus > 0.0))
        throw Error("sector_bound: sector angles must be positive");
    SectorEigenvalues s;
    s.theta_plus = theta_plus;
    s.theta_minus = theta_minus;
    s.sqrt_plus = std::numbers::pi / (2.0 * theta_plus);
    s.sqrt_minus = std::numbers::pi / (2.0 * theta_minus);
    s.sqrt_sum = s.sqrt_plus + s.sqrt_minus;
    return s;
}

// ---------------------------------------------------------------------------
// Gradient jump across the free boundary

struct JumpResiduals {
    std::vector<Point> points;
    std::vector<double> residuals;
    std::vector<double> plus_sq;  // |grad u+|^2 on the positive side
    std::vector<double> minus_sq; // |grad u-|^2 on the negative side
    int skipped = 0;

    double median_abs() const {
        std::vector<double> a;
        a.reserve(residuals.size());
        for (double r : residuals) a.push_back(std::abs(r));
        return detail::median(std::move(a));
    }
};

/// (|grad u+|^2 - |grad u-|^2) - (lambda1^2 - lambda2^2) Q^2 at each contour
/// vertex, with one-sided gradients sampled offset * h along the normal.
inline JumpResiduals gradient_jump_residual(const Field& f, const FreeBoundary& fb,
                                            const CoefficientField& q, const PhaseModel& m,
                                            double offset = 3.0) {
    const Domain& d = f.domain();
    const double h = d.h();
    const double reach = offset * h;
    JumpResiduals out;
    for (const auto& pl : fb.polylines) {
        const std::size_t count = pl.points.size();
        for (std::size_t k = 0; k < count; ++k) {
            if (pl.closed && k + 1 == count) break; // repeated first vertex
            const Point p = pl.points[k];
            if (detail::distance_to_boundary(d, p) < reach) {
                ++out.skipped;
                continue;
            }
            const std::size_t last = pl.closed ? count - 2 : count - 1;
            std::size_t ka = k == 0 ? (pl.closed ? last : 0) : k - 1;
            std::size_t kb = k == last ? (pl.closed ? 0 : last) : k + 1;
            const Point a = pl.points[ka], b = pl.points[kb];
            double tx = b.x - a.x, ty = b.y - a.y;
            const double len = std::hypot(tx, ty);
            if (len == 0.0) {
                ++out.skipped;
                continue;
            }
            tx /= len;
            ty /= len;
            const Point up{p.x - ty * reach, p.y + tx * reach}, down{p.x + ty * reach, p.y - tx * reach};
            const Point ru = d.to_reference(up), rd = d.to_reference(down);
            auto sp = detail::bilinear_sample(f, ru.x, ru.y);
            auto sm = detail::bilinear_sample(f, rd.x, rd.y);
            if (sp.value < sm.value) std::swap(sp, sm);
            if (!(sp.value > 0.0) || !(sm.value <= 0.0)) {
                ++out.skipped;
                continue;
            }
            const Point r = d.to_reference(p);
            const int ni = std::clamp(static_cast<int>(std::lround(r.x * d.n())), 0, d.n());
            const int nj = std::clamp(static_cast<int>(std::lround(r.y * d.n())), 0, d.n());
            const double gp = sp.gradient.x * sp.gradient.x + sp.gradient.y * sp.gradient.y;
            const double gm = sm.gradient.x * sm.gradient.x + sm.gradient.y * sm.gradient.y;
            out.points.push_back(p);
            out.plus_sq.push_back(gp);
            out.minus_sq.push_back(gm);
            out.residuals.push_back((gp - gm) - m.jump() * q.squared(ni, nj));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Neumann residual

/// Max over N nodes of the unit normal derivative, with second-order
/// one-sided differences across the edge.
inline double neumann_residual(const Field& f) {
    const Domain& d = f.domain();
    const int n = d.n();
    const double s = d.sin_theta(), c = d.cos_theta();
    const double csc = 1.0 / s, cot = c / s;
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto g = reference_gradient(f, i, n);
        worst = std::max(worst, std::abs(-cot * g.d_xi + csc * g.d_eta));
    }
    for (int j = 1; j <= n; ++j) {
        const auto g = reference_gradient(f, 0, j);
        worst = std::max(worst, std::abs(-csc * g.d_xi + cot * g.d_eta));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Intersection angle

struct TerminalAngle {
    int terminal = 0; // index into FreeBoundary::terminal_points
    EdgeTag edge = EdgeTag::none;
    double degrees = 0.0;
    int vertices = 0;
};

/// Angle in [0, 90] degrees between the Neumann edge and the least-squares
/// line through contour vertices within `window` * h of one terminal point.
inline TerminalAngle terminal_angle(const FreeBoundary& fb, const Domain& d, int terminal,
                                    double window = 10.0) {
    const auto& t = fb.terminal_points.at(static_cast<std::size_t>(terminal));
    if (!on_neumann(t.edge)) throw Error("intersection_angle: terminal is not on the Neumann boundary");
    const auto& pl = fb.polylines.at(static_cast<std::size_t>(t.polyline));
    const double reach = window * d.h();
    std::vector<Point> pts;
    for (const Point& p : pl.points)
        if (distance(p, t.point) <= reach) pts.push_back(p);
    if (pts.size() < 3)
        throw Error("intersection_angle: fewer than 3 contour vertices near the terminal point");
    double mx = 0, my = 0;
    for (const auto& p : pts) {
        mx += p.x;
        my += p.y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxx = 0, sxy = 0, syy = 0;
    for (const auto& p : pts) {
        sxx += (p.x - mx) * (p.x - mx);
        sxy += (p.x - mx) * (p.y - my);
        syy += (p.y - my) * (p.y - my);
    }
    // Principal axis of the scatter matrix.
    const double phi = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    const double lx = std::cos(phi), ly = std::sin(phi);
    const double ex = t.edge == EdgeTag::eta1 ? 1.0 : d.cos_theta();
    const double ey = t.edge == EdgeTag::eta1 ? 0.0 : d.sin_theta();
    const double cosang = std::min(1.0, std::abs(lx * ex + ly * ey));
    return {terminal, t.edge, std::acos(cosang) * 180.0 / std::numbers::pi, static_cast<int>(pts.size())};
}

/// Angles at every Neumann terminal point.
inline std::vector<TerminalAngle> intersection_angle(const FreeBoundary& fb, const Domain& d,
                                                     double window = 10.0) {
    std::vector<TerminalAngle> out;
    for (std::size_t k = 0; k < fb.terminal_points.size(); ++k)
        if (on_neumann(fb.terminal_points[k].edge))
            out.push_back(terminal_angle(fb, d, static_cast<int>(k), window));
    if (out.empty()) throw Error("intersection_angle: no terminal point on the Neumann boundary");
    return out;
}

// ---------------------------------------------------------------------------

/// Max over nodes of the physical gradient magnitude.
inline double max_gradient(const Field& f) {
    double worst = 0.0;
    for (int j = 0; j <= f.n(); ++j)
        for (int i = 0; i <= f.n(); ++i) {
            const Point g = physical_gradient(f, i, j);
            worst = std::max(worst, std::hypot(g.x, g.y));
        }
    return worst;
}

/// Max physical gradient over nodes farther than `margin` from a set of points.
inline double max_gradient_away_from(const Field& f, const std::vector<Point>& avoid, double margin) {
    const Domain& d = f.domain();
    double worst = 0.0;
    for (int j = 0; j <= f.n(); ++j)
        for (int i = 0; i <= f.n(); ++i) {
            const Point p = d.node_position(i, j);
            bool near = false;
            for (const auto& a : avoid)
                if (distance(a, p) < margin) {
                    near = true;
                    break;
                }
            if (near) continue;
            const Point g = physical_gradient(f, i, j);
            worst = std::max(worst, std::hypot(g.x, g.y));
        }
    return worst;
}

// ---------------------------------------------------------------------------

struct CheckResult {
    std::string name;
    std::string parameters;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

inline void write_report_csv(std::ostream& os, const std::vector<CheckResult>& rows) {
    os << "check,parameters,value,tolerance,result\n";
    char buf[64];
    for (const auto& r : rows) {
        os << csv_field(r.name) << ',' << csv_field(r.parameters) << ',';
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,", r.value, r.tolerance);
        os << buf << (r.pass ? "pass" : "fail") << '\n';
    }
}

/// Names accepted by run_diagnostics, besides "all".
inline const std::vector<std::string>& diagnostic_names() {
    static const std::vector<std::string> names{"monotonicity", "jump", "angle", "neumann", "gradient"};
    return names;
}

/// Runs one named check (or "all") on a steady state.
inline std::vector<CheckResult> run_diagnostics(const Field& f, const PhaseModel& m, const CoefficientField& q,
                                                const std::string& check, double lin_tol = 1e-10) {
    const auto& names = diagnostic_names();
    if (check != "all" && std::find(names.begin(), names.end(), check) == names.end())
        throw Error("unknown check '" + check + "'");
    const Domain& d = f.domain();
    const double h = d.h();
    const FreeBoundary fb = extract_zero_contour(f);
    char buf[160];
    std::vector<CheckResult> out;
    auto want = [&](const char* name) { return check == "all" || check == name; };
    auto failed = [&](const char* name, const std::string& why) {
        out.push_back({name, why, std::numeric_limits<double>::quiet_NaN(), 0.0, false});
    };

    if (want("monotonicity")) {
        try {
            const Point c = nearest_neumann_node(fb, d);
            const MonotonicityProbe p = monotonicity_phi(f, c, probe_radii(d, c));
            std::snprintf(buf, sizeof buf, "center=(%.6g %.6g) radii=%zu r=%.4g..%.4g", c.x, c.y, p.radii.size(),
                          p.radii.front(), p.radii.back());
            out.push_back({"monotonicity", buf, p.max_decrease(), monotonicity_tolerance(p, h),
                           nearly_nondecreasing(p, h)});
        } catch (const Error& e) {
            failed("monotonicity", e.what());
        }
    }
    if (want("jump")) {
        try {
            if (fb.empty()) throw Error("no free boundary");
            const JumpResiduals r = gradient_jump_residual(f, fb, q, m);
            if (r.residuals.empty()) throw Error("every contour vertex is within 3h of the boundary");
            std::snprintf(buf, sizeof buf, "vertices=%zu skipped=%d offset=3h", r.residuals.size(), r.skipped);
            const double med = r.median_abs();
            out.push_back({"jump", buf, med, 0.1, med <= 0.1});
        } catch (const Error& e) {
            failed("jump", e.what());
        }
    }
    if (want("angle")) {
        try {
            const auto angles = intersection_angle(fb, d);
            double worst = 0.0;
            for (const auto& a : angles) worst = std::max(worst, std::abs(a.degrees - 90.0));
            std::snprintf(buf, sizeof buf, "terminals=%zu window=10h", angles.size());
            out.push_back({"angle", buf, worst, 5.0, worst <= 5.0});
        } catch (const Error& e) {
            failed("angle", e.what());
        }
    }
    if (want("neumann")) {
        const double r = neumann_residual(f);
        const double tol = 10.0 * lin_tol * std::max(1.0, f.max_abs()) / h;
        std::snprintf(buf, sizeof buf, "n=%d lin_tol=%.3g", d.n(), lin_tol);
        out.push_back({"neumann", buf, r, tol, r <= tol});
    }
    if (want("gradient")) {
        std::vector<Point> avoid;
        for (const auto& t : fb.terminal_points) avoid.push_back(t.point);
        const double margin = 2.0 * m.epsilon;
        const double g = max_gradient_away_from(f, avoid, margin);
        std::snprintf(buf, sizeof buf, "margin=%.4g", margin);
        out.push_back({"gradient", buf, g, std::numeric_limits<double>::infinity(), std::isfinite(g)});
    }
    return out;
}

} // namespace fbflow
