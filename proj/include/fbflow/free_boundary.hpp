#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "fbflow/field.hpp"
#include "fbflow/geometry.hpp"

namespace fbflow {

/// Where an open contour ends. `closed` tags a closed loop, `none` is used by
/// callers when there is no contour at all.
enum class EdgeTag { xi0, eta1, dirichlet, closed, none };

inline const char* to_string(EdgeTag t) {
    switch (t) {
    case EdgeTag::xi0: return "xi0";
    case EdgeTag::eta1: return "eta1";
    case EdgeTag::dirichlet: return "dirichlet";
    case EdgeTag::closed: return "closed";
    case EdgeTag::none: break;
    }
    return "none";
}

inline bool on_neumann(EdgeTag t) { return t == EdgeTag::xi0 || t == EdgeTag::eta1; }

struct Polyline {
    std::vector<Point> points;    // physical
    std::vector<Point> reference; // (xi, eta) of the same vertices
    bool closed = false;
};

struct TerminalPoint {
    Point point;     // physical
    Point reference; // (xi, eta)
    EdgeTag edge = EdgeTag::none;
    int polyline = 0;
};

struct FreeBoundary {
    std::vector<Polyline> polylines;
    std::vector<TerminalPoint> terminal_points;
    /// Distance from the contour to the Neumann corner (infinite if empty).
    double corner_distance = std::numeric_limits<double>::infinity();

    bool empty() const { return polylines.empty(); }
};

namespace detail {

// Lattice edges are numbered horizontal first: H(i,j) joins (i,j)-(i+1,j),
// V(i,j) joins (i,j)-(i,j+1).
struct EdgeIndex {
    int n;
    int horizontal(int i, int j) const { return j * n + i; }
    int vertical(int i, int j) const { return n * (n + 1) + j * (n + 1) + i; }
    int count() const { return 2 * n * (n + 1); }
};

inline EdgeTag boundary_tag_of_edge(int id, int n) {
    if (id < n * (n + 1)) {
        const int j = id / n;
        if (j == 0) return EdgeTag::dirichlet;
        if (j == n) return EdgeTag::eta1;
    } else {
        const int i = (id - n * (n + 1)) % (n + 1);
        if (i == 0) return EdgeTag::xi0;
        if (i == n) return EdgeTag::dirichlet;
    }
    return EdgeTag::none;
}

} // namespace detail

/// Marching-squares zero contour of f, joined into maximal polylines.
///
/// Exact zeros are nudged to -eps_machine * scale so that they join the
/// {v <= 0} phase. Ambiguous cells are split by the sign of the cell average.
inline FreeBoundary extract_zero_contour(const Field& f) {
    const Domain& d = f.domain();
    const int n = d.n();
    const double h = d.h();
    const double scale = f.max_abs() > 0.0 ? f.max_abs() : 1.0;
    const double nudge = -std::numeric_limits<double>::epsilon() * scale;
    auto val = [&](int i, int j) {
        const double v = f(i, j);
        return v == 0.0 ? nudge : v;
    };

    const detail::EdgeIndex ix{n};
    std::vector<Point> crossing(static_cast<std::size_t>(ix.count()));
    std::vector<char> has(static_cast<std::size_t>(ix.count()), 0);
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i < n; ++i) {
            const double a = val(i, j), b = val(i + 1, j);
            if ((a > 0) != (b > 0)) {
                const int e = ix.horizontal(i, j);
                has[e] = 1;
                crossing[e] = {(i + a / (a - b)) * h, j * h};
            }
        }
    for (int j = 0; j < n; ++j)
        for (int i = 0; i <= n; ++i) {
            const double a = val(i, j), b = val(i, j + 1);
            if ((a > 0) != (b > 0)) {
                const int e = ix.vertical(i, j);
                has[e] = 1;
                crossing[e] = {i * h, (j + a / (a - b)) * h};
            }
        }

    // Each crossing edge touches at most two cells, so the segment graph has
    // degree <= 2.
    std::vector<std::array<int, 2>> link(static_cast<std::size_t>(ix.count()), {-1, -1});
    auto connect = [&](int p, int q) {
        auto attach = [&](int from, int to) {
            auto& l = link[static_cast<std::size_t>(from)];
            (l[0] < 0 ? l[0] : l[1]) = to;
        };
        attach(p, q);
        attach(q, p);
    };
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const double v00 = val(i, j), v10 = val(i + 1, j), v11 = val(i + 1, j + 1),
                         v01 = val(i, j + 1);
            const int bottom = ix.horizontal(i, j), right = ix.vertical(i + 1, j),
                      top = ix.horizontal(i, j + 1), left = ix.vertical(i, j);
            std::vector<int> cut;
            for (int e : {bottom, right, top, left})
                if (has[e]) cut.push_back(e);
            if (cut.size() == 2) {
                connect(cut[0], cut[1]);
            } else if (cut.size() == 4) {
                const bool center_positive = 0.25 * (v00 + v10 + v11 + v01) > 0.0;
                // Corners 00 and 11 share a sign here, as do 10 and 01.
                const bool diag_positive = v00 > 0.0;
                if (center_positive == diag_positive) {
                    // 00 and 11 are connected through the center: isolate 10 and 01.
                    connect(bottom, right);
                    connect(top, left);
                } else {
                    connect(left, bottom);
                    connect(right, top);
                }
            }
        }

    FreeBoundary fb;
    std::vector<char> used(static_cast<std::size_t>(ix.count()), 0);
    auto emit = [&](std::vector<int> chain, bool closed) {
        Polyline pl;
        pl.closed = closed;
        for (int e : chain) {
            const Point r = crossing[static_cast<std::size_t>(e)];
            pl.reference.push_back(r);
            pl.points.push_back(d.to_physical(r.x, r.y));
        }
        if (closed && !pl.points.empty()) {
            pl.reference.push_back(pl.reference.front());
            pl.points.push_back(pl.points.front());
        }
        const int id = static_cast<int>(fb.polylines.size());
        if (closed) {
            fb.terminal_points.push_back({pl.points.front(), pl.reference.front(), EdgeTag::closed, id});
        } else {
            for (int end : {chain.front(), chain.back()}) {
                const Point r = crossing[static_cast<std::size_t>(end)];
                fb.terminal_points.push_back(
                    {d.to_physical(r.x, r.y), r, detail::boundary_tag_of_edge(end, n), id});
            }
        }
        fb.polylines.push_back(std::move(pl));
    };
    auto walk = [&](int start) {
        std::vector<int> chain{start};
        used[static_cast<std::size_t>(start)] = 1;
        int prev = -1, cur = start;
        for (;;) {
            const auto& l = link[static_cast<std::size_t>(cur)];
            int next = -1;
            for (int c : l)
                if (c >= 0 && c != prev && !used[static_cast<std::size_t>(c)]) {
                    next = c;
                    break;
                }
            if (next < 0) break;
            used[static_cast<std::size_t>(next)] = 1;
            chain.push_back(next);
            prev = cur;
            cur = next;
        }
        return chain;
    };
    // Open chains start at boundary crossings, which have a single link.
    for (int e = 0; e < ix.count(); ++e) {
        if (!has[e] || used[e]) continue;
        const auto& l = link[static_cast<std::size_t>(e)];
        if (l[1] < 0) emit(walk(e), false);
    }
    for (int e = 0; e < ix.count(); ++e)
        if (has[e] && !used[e]) emit(walk(e), true);

    const Point corner = d.neumann_corner();
    for (const auto& pl : fb.polylines) {
        if (pl.points.size() == 1) fb.corner_distance = std::min(fb.corner_distance, distance(corner, pl.points[0]));
        for (std::size_t k = 1; k < pl.points.size(); ++k)
            fb.corner_distance = std::min(
                fb.corner_distance, Domain::segment_distance(corner, pl.points[k - 1], pl.points[k]));
    }
    return fb;
}

/// Signed physical distance along N from the Neumann corner: negative down
/// the xi = 0 edge, positive along the eta = 1 edge.
inline double signed_arclength(const TerminalPoint& t, const Domain& d) {
    const double s = distance(t.point, d.neumann_corner());
    if (t.edge == EdgeTag::xi0) return -s;
    if (t.edge == EdgeTag::eta1) return s;
    throw Error("terminal point is not on the Neumann boundary");
}

/// Index of the terminal on N closest to the Neumann corner, or -1.
inline int nearest_neumann_terminal(const FreeBoundary& fb, const Domain& d) {
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < fb.terminal_points.size(); ++k) {
        const auto& t = fb.terminal_points[k];
        if (!on_neumann(t.edge)) continue;
        const double s = distance(t.point, d.neumann_corner());
        if (s < best_dist) {
            best_dist = s;
            best = static_cast<int>(k);
        }
    }
    return best;
}

/// Signed arclength of the Neumann terminal nearest the corner.
inline double terminal_point_arclength(const FreeBoundary& fb, const Domain& d) {
    const int k = nearest_neumann_terminal(fb, d);
    if (k < 0) throw Error("free boundary has no terminal point on the Neumann boundary");
    return signed_arclength(fb.terminal_points[static_cast<std::size_t>(k)], d);
}

inline void write_contour_csv(std::ostream& os, const FreeBoundary& fb) {
    os << "polyline_id,vertex_index,x,y\n";
    char buf[96];
    for (std::size_t p = 0; p < fb.polylines.size(); ++p) {
        const auto& pts = fb.polylines[p].points;
        for (std::size_t k = 0; k < pts.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%zu,%zu,%.12g,%.12g\n", p, k, pts[k].x, pts[k].y);
            os << buf;
        }
    }
}

} // namespace fbflow
