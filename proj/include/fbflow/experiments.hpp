#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "fbflow/diagnostics.hpp"
#include "fbflow/free_boundary.hpp"
#include "fbflow/solver.hpp"

namespace fbflow {

/// Worker count: FBFLOW_THREADS if set to a positive integer, else the
/// number of hardware threads.
inline unsigned worker_count() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("FBFLOW_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
        log_warning(std::string("ignoring FBFLOW_THREADS=") + env);
    }
    return hw;
}

/// Runs body(k) for k in [0, count) on up to worker_count() threads.
/// Results must be written to per-index slots; the first exception is rethrown.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::min<std::size_t>(worker_count(), count);
    if (workers <= 1) {
        for (std::size_t k = 0; k < count; ++k) body(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < count; k = next++) {
                try {
                    body(k);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

/// Phase model with epsilon tied to the mesh: epsilon = slave_factor * h.
inline PhaseModel slaved_model(double lambda1, double lambda2, const SolverConfig& cfg, const Domain& d) {
    return PhaseModel(lambda1, lambda2, cfg.epsilon(d));
}

struct SweepRow {
    double A = 0.0;
    int n = 0;
    double h = 0.0;
    bool converged = false;
    long steps = 0;
    double energy = std::numeric_limits<double>::quiet_NaN();
    EdgeTag edge = EdgeTag::none;
    double arclength = std::numeric_limits<double>::quiet_NaN();
    double corner_distance = std::numeric_limits<double>::infinity();
    double angle = std::numeric_limits<double>::quiet_NaN();
    bool corner_cell = false; // contour enters the lattice cell at the Neumann corner
    long energy_increases = 0;
    double seconds = 0.0; // wall time; not written to CSV
    std::string error;
};

struct SweepResult {
    std::vector<SweepRow> rows;
};

/// Everything produced by one cold-start run.
struct RunOutcome {
    SweepRow row;
    SteadyState state;
    FreeBoundary boundary;
};

inline bool contour_enters_corner_cell(const FreeBoundary& fb, const Domain& d) {
    const double h = d.h();
    for (const auto& pl : fb.polylines)
        for (const auto& r : pl.reference)
            if (r.x <= h && r.y >= 1.0 - h) return true;
    return false;
}

/// Terminal classification and diagnostics for a converged field.
inline void classify(SweepRow& row, const FreeBoundary& fb, const Domain& d) {
    row.corner_distance = fb.corner_distance;
    row.corner_cell = contour_enters_corner_cell(fb, d);
    const int k = nearest_neumann_terminal(fb, d);
    if (k >= 0) {
        const auto& t = fb.terminal_points[static_cast<std::size_t>(k)];
        row.edge = t.edge;
        row.arclength = signed_arclength(t, d);
        try {
            row.angle = terminal_angle(fb, d, k).degrees;
        } catch (const Error&) {
            row.angle = std::numeric_limits<double>::quiet_NaN();
        }
    } else if (!fb.terminal_points.empty()) {
        row.edge = fb.terminal_points.front().edge;
    }
}

/// Cold-start run from the initial data, then contour extraction.
inline RunOutcome run_point(const Domain& d, const BoundaryData& b, const SolverConfig& cfg,
                            const PhaseModel& m, const CoefficientField& q) {
    RunOutcome out{{}, {Field(d), {}, false, 0, 0.0, 0, 0.0}, {}};
    out.row.A = b.amplitude;
    out.row.n = d.n();
    out.row.h = d.h();
    const auto start = std::chrono::steady_clock::now();
    try {
        out.state = run_to_steady_state(initial_data(d, b), cfg, m, q);
        out.row.converged = out.state.converged;
        out.row.steps = out.state.steps;
        out.row.energy = out.state.trace.back().energy;
        out.row.energy_increases = out.state.energy_increases;
        out.boundary = extract_zero_contour(out.state.field);
        classify(out.row, out.boundary, d);
    } catch (const Error& e) {
        out.row.error = e.what();
        log_warning("run A = " + std::to_string(b.amplitude) + ", n = " + std::to_string(d.n()) +
                    " failed: " + e.what());
    }
    out.row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

using RunCallback = std::function<void(const RunOutcome&)>;

inline void check_increasing(const std::vector<double>& v, const char* what) {
    if (v.empty()) throw Error(std::string(what) + " must be nonempty");
    for (std::size_t k = 1; k < v.size(); ++k)
        if (!(v[k] > v[k - 1])) throw Error(std::string(what) + " must be strictly increasing");
}

/// One row per amplitude on a fixed mesh. The callback, if any, is invoked
/// from worker threads.
inline SweepResult sweep_amplitude(const Domain& d, const BoundaryData& b_template,
                                   const std::vector<double>& A_list, const SolverConfig& cfg,
                                   const PhaseModel& m, const CoefficientField& q,
                                   const RunCallback& on_run = {}) {
    check_increasing(A_list, "amplitude list");
    b_template.validate();
    SweepResult sr;
    sr.rows.resize(A_list.size());
    parallel_for(A_list.size(), [&](std::size_t k) {
        BoundaryData b = b_template;
        b.amplitude = A_list[k];
        RunOutcome r = run_point(d, b, cfg, m, q);
        if (on_run) on_run(r);
        sr.rows[k] = std::move(r.row);
    });
    return sr;
}

/// Amplitude sweep repeated over a mesh ladder with epsilon = slave_factor h.
/// Rows are ordered by A, then n.
inline SweepResult sweep_ladder(double theta, const BoundaryData& b_template,
                                const std::vector<double>& A_list, const std::vector<int>& n_list,
                                const SolverConfig& cfg, double lambda1, double lambda2, double Q = 1.0,
                                const RunCallback& on_run = {}) {
    check_increasing(A_list, "amplitude list");
    if (n_list.empty()) throw Error("mesh list must be nonempty");
    for (std::size_t k = 1; k < n_list.size(); ++k)
        if (n_list[k] <= n_list[k - 1]) throw Error("mesh list must be strictly increasing");
    b_template.validate();
    SweepResult sr;
    sr.rows.resize(A_list.size() * n_list.size());
    // Finest meshes first so the longest jobs start early.
    std::vector<std::size_t> order(sr.rows.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return n_list[x % n_list.size()] > n_list[y % n_list.size()];
    });
    parallel_for(order.size(), [&](std::size_t slot) {
        const std::size_t k = order[slot];
        const int n = n_list[k % n_list.size()];
        const Domain d(theta, n);
        BoundaryData b = b_template;
        b.amplitude = A_list[k / n_list.size()];
        const CoefficientField q(d, Q);
        RunOutcome r = run_point(d, b, cfg, slaved_model(lambda1, lambda2, cfg, d), q);
        if (on_run) on_run(r);
        sr.rows[k] = std::move(r.row);
    });
    return sr;
}

// ---------------------------------------------------------------------------

struct MeshJump {
    int n = 0;
    double h = 0.0;
    int converged_rows = 0;
    double gap = 0.0; // largest adjacent arclength gap
    double gap_A_lo = std::numeric_limits<double>::quiet_NaN();
    double gap_A_hi = std::numeric_limits<double>::quiet_NaN();
    bool edge_switch = false;
    double switch_A_lo = std::numeric_limits<double>::quiet_NaN();
    double switch_A_hi = std::numeric_limits<double>::quiet_NaN();
    double switch_gap = std::numeric_limits<double>::quiet_NaN();
    /// Min corner distance over converged rows up to the switch (all rows if none).
    double closest_approach = std::numeric_limits<double>::infinity();
};

struct JumpReport {
    double A_lo = std::numeric_limits<double>::quiet_NaN();
    double A_hi = std::numeric_limits<double>::quiet_NaN();
    double gap = 0.0;
    bool edge_switch = false;
    std::vector<MeshJump> meshes; // increasing n
    double gap_slope = std::numeric_limits<double>::quiet_NaN();      // d log gap / d log h
    double approach_slope = std::numeric_limits<double>::quiet_NaN(); // d log approach / d log h
};

/// Least-squares slope of log y against log x over the positive finite pairs.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < x.size(); ++k)
        if (x[k] > 0 && y[k] > 0 && std::isfinite(x[k]) && std::isfinite(y[k])) {
            lx.push_back(std::log(x[k]));
            ly.push_back(std::log(y[k]));
        }
    if (lx.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        mx += lx[k];
        my += ly[k];
    }
    mx /= static_cast<double>(lx.size());
    my /= static_cast<double>(ly.size());
    double sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        sxy += (lx[k] - mx) * (ly[k] - my);
        sxx += (lx[k] - mx) * (lx[k] - mx);
    }
    return sxx > 0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

inline std::map<int, std::vector<const SweepRow*>> rows_by_mesh(const SweepResult& sr) {
    std::map<int, std::vector<const SweepRow*>> by_n;
    for (const auto& r : sr.rows) by_n[r.n].push_back(&r);
    for (auto& [n, rows] : by_n)
        std::stable_sort(rows.begin(), rows.end(),
                         [](const SweepRow* a, const SweepRow* b) { return a->A < b->A; });
    return by_n;
}

/// Largest terminal jump and edge switches per mesh, plus the trend over h.
inline JumpReport detect_jump(const SweepResult& sr) {
    JumpReport rep;
    for (const auto& [n, rows] : rows_by_mesh(sr)) {
        MeshJump mj;
        mj.n = n;
        mj.h = rows.front()->h;
        std::vector<const SweepRow*> ok;
        for (const auto* r : rows)
            if (r->converged && r->error.empty()) ok.push_back(r);
        mj.converged_rows = static_cast<int>(ok.size());
        if (ok.size() < 2)
            throw Error("detect_jump: fewer than 2 converged rows at n = " + std::to_string(n));
        for (std::size_t k = 1; k < ok.size(); ++k) {
            const auto *a = ok[k - 1], *b = ok[k];
            if (!std::isfinite(a->arclength) || !std::isfinite(b->arclength)) continue;
            const double gap = std::abs(b->arclength - a->arclength);
            if (std::isnan(mj.gap_A_lo) || gap > mj.gap) {
                mj.gap = gap;
                mj.gap_A_lo = a->A;
                mj.gap_A_hi = b->A;
            }
            if (!mj.edge_switch && on_neumann(a->edge) && on_neumann(b->edge) && a->edge != b->edge) {
                mj.edge_switch = true;
                mj.switch_A_lo = a->A;
                mj.switch_A_hi = b->A;
                mj.switch_gap = gap;
            }
        }
        for (const auto* r : ok)
            if (!mj.edge_switch || r->A <= mj.switch_A_lo)
                mj.closest_approach = std::min(mj.closest_approach, r->corner_distance);
        rep.meshes.push_back(mj);
    }
    if (rep.meshes.empty()) throw Error("detect_jump: empty sweep");
    const MeshJump& fine = rep.meshes.back();
    rep.A_lo = fine.gap_A_lo;
    rep.A_hi = fine.gap_A_hi;
    rep.gap = fine.gap;
    rep.edge_switch = fine.edge_switch;
    std::vector<double> hs, gaps, approaches;
    for (const auto& m : rep.meshes) {
        hs.push_back(m.h);
        gaps.push_back(m.gap);
        approaches.push_back(m.closest_approach);
    }
    rep.gap_slope = loglog_slope(hs, gaps);
    rep.approach_slope = loglog_slope(hs, approaches);
    return rep;
}

struct ForbiddenLevel {
    int n = 0;
    double h = 0.0;
    double radius = std::numeric_limits<double>::infinity();
    bool touches_corner = false;
};

struct ForbiddenRegion {
    std::vector<ForbiddenLevel> levels; // increasing n
    double radius = 0.0;                // finest level
    double relative_change = std::numeric_limits<double>::quiet_NaN(); // last two levels
    bool edge_switch = false;
};

/// Closest approach of converged contours to the Neumann corner, per mesh.
inline ForbiddenRegion forbidden_region(const SweepResult& sr) {
    ForbiddenRegion fr;
    for (const auto& [n, rows] : rows_by_mesh(sr)) {
        ForbiddenLevel lv;
        lv.n = n;
        lv.h = rows.front()->h;
        EdgeTag prev = EdgeTag::none;
        for (const auto* r : rows) {
            if (!r->converged || !r->error.empty()) continue;
            if (r->corner_cell) lv.touches_corner = true;
            lv.radius = std::min(lv.radius, r->corner_distance);
            if (on_neumann(prev) && on_neumann(r->edge) && prev != r->edge) fr.edge_switch = true;
            prev = r->edge;
        }
        if (lv.touches_corner) lv.radius = 0.0;
        fr.levels.push_back(lv);
    }
    if (fr.levels.empty()) throw Error("forbidden_region: empty sweep");
    fr.radius = fr.levels.back().radius;
    if (fr.levels.size() >= 2) {
        const double a = fr.levels[fr.levels.size() - 2].radius, b = fr.levels.back().radius;
        if (std::isfinite(a) && std::isfinite(b) && std::max(a, b) > 0)
            fr.relative_change = std::abs(a - b) / std::max(a, b);
    }
    return fr;
}

// ---------------------------------------------------------------------------

struct LadderLevel {
    int n = 0;
    double h = 0.0;
    bool converged = false;
    long steps = 0;
    double energy = std::numeric_limits<double>::quiet_NaN();
    std::string error;
};

struct LadderResult {
    std::vector<LadderLevel> levels;
    std::vector<double> differences; // |J_k - J_{k-1}|
    int converged_at = -1;           // first level meeting tol_ref, or -1
    bool differences_decreasing = true;
    bool energy_monotone = true;
};

/// Cold-start runs on each mesh with epsilon = slave_factor h. An infinite
/// tol_ref runs only the first level.
inline LadderResult refine_ladder(double theta, const BoundaryData& b, const SolverConfig& cfg,
                                  double lambda1, double lambda2, double Q, const std::vector<int>& n_list,
                                  double tol_ref = 1e-3, const RunCallback& on_run = {}) {
    if (n_list.empty()) throw Error("mesh list must be nonempty");
    for (std::size_t k = 1; k < n_list.size(); ++k)
        if (n_list[k] <= n_list[k - 1]) throw Error("mesh list must be strictly increasing");
    if (!(tol_ref > 0)) throw Error("tol_ref must be positive");
    const std::size_t count = std::isinf(tol_ref) ? 1 : n_list.size();
    LadderResult out;
    out.levels.resize(count);
    parallel_for(count, [&](std::size_t k) {
        const Domain d(theta, n_list[k]);
        const CoefficientField q(d, Q);
        RunOutcome r = run_point(d, b, cfg, slaved_model(lambda1, lambda2, cfg, d), q);
        if (on_run) on_run(r);
        out.levels[k] = {r.row.n, r.row.h, r.row.converged, r.row.steps, r.row.energy, r.row.error};
    });
    for (std::size_t k = 1; k < count; ++k) {
        const double a = out.levels[k - 1].energy, e = out.levels[k].energy;
        const double diff = std::abs(e - a);
        out.differences.push_back(diff);
        if (out.converged_at < 0 && diff <= tol_ref * std::max(1.0, std::abs(e)))
            out.converged_at = static_cast<int>(k);
    }
    for (std::size_t k = 1; k < out.differences.size(); ++k)
        if (!(out.differences[k] < out.differences[k - 1])) out.differences_decreasing = false;
    // The level energies should approach their limit from one side.
    for (std::size_t k = 2; k < count; ++k) {
        const double d1 = out.levels[k - 1].energy - out.levels[k - 2].energy;
        const double d2 = out.levels[k].energy - out.levels[k - 1].energy;
        if (d1 * d2 < 0) out.energy_monotone = false;
    }
    if (!out.energy_monotone) log_warning("refine_ladder: level energies are not monotone");
    return out;
}

// ---------------------------------------------------------------------------
// Output

namespace detail {
inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}
inline nlohmann::json json_num(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}
} // namespace detail

inline void write_sweep_csv(std::ostream& os, const SweepResult& sr) {
    os << "A,n,h,converged,steps,J_eps,terminal_edge,terminal_arclength,corner_distance,intersection_angle\n";
    for (const auto& r : sr.rows)
        os << detail::num(r.A) << ',' << r.n << ',' << detail::num(r.h) << ',' << (r.converged ? 1 : 0)
           << ',' << r.steps << ',' << detail::num(r.energy) << ',' << to_string(r.edge) << ','
           << detail::num(r.arclength) << ',' << detail::num(r.corner_distance) << ','
           << detail::num(r.angle) << '\n';
}

inline void write_trace_csv(std::ostream& os, const EnergyTrace& trace) {
    os << "step,time,J_eps\n";
    char buf[96];
    for (const auto& s : trace.samples()) {
        std::snprintf(buf, sizeof buf, "%ld,%.12g,%.17g\n", s.step, s.time, s.energy);
        os << buf;
    }
}

inline void write_ladder_csv(std::ostream& os, const LadderResult& lr) {
    os << "n,h,converged,steps,J_eps,difference\n";
    for (std::size_t k = 0; k < lr.levels.size(); ++k) {
        const auto& l = lr.levels[k];
        os << l.n << ',' << detail::num(l.h) << ',' << (l.converged ? 1 : 0) << ',' << l.steps << ','
           << detail::num(l.energy) << ','
           << (k == 0 ? std::string("nan") : detail::num(lr.differences[k - 1])) << '\n';
    }
}

inline nlohmann::json to_json(const JumpReport& rep) {
    using detail::json_num;
    nlohmann::json j;
    j["A_lo"] = json_num(rep.A_lo);
    j["A_hi"] = json_num(rep.A_hi);
    j["gap"] = json_num(rep.gap);
    j["edge_switch"] = rep.edge_switch;
    j["gap_slope"] = json_num(rep.gap_slope);
    j["approach_slope"] = json_num(rep.approach_slope);
    nlohmann::json meshes = nlohmann::json::array();
    for (const auto& m : rep.meshes)
        meshes.push_back({{"n", m.n},
                          {"h", m.h},
                          {"converged_rows", m.converged_rows},
                          {"gap", json_num(m.gap)},
                          {"gap_A_lo", json_num(m.gap_A_lo)},
                          {"gap_A_hi", json_num(m.gap_A_hi)},
                          {"edge_switch", m.edge_switch},
                          {"switch_A_lo", json_num(m.switch_A_lo)},
                          {"switch_A_hi", json_num(m.switch_A_hi)},
                          {"switch_gap", json_num(m.switch_gap)},
                          {"closest_approach", json_num(m.closest_approach)}});
    j["meshes"] = meshes;
    return j;
}

} // namespace fbflow
