#pragma once

#include <array>
#include <memory>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include "fbflow/energy.hpp"
#include "fbflow/field.hpp"
#include "fbflow/geometry.hpp"
#include "fbflow/log.hpp"
#include "fbflow/phase_model.hpp"

namespace fbflow {

/// Raised when a step cannot be completed (linear solve failure, NaN).
class SolverError : public Error {
public:
    using Error::Error;
};

/// Dirichlet profile: -A left of x0 - delta, +A right of x0 + delta, and
/// A sin^3(pi (x - x0) / (2 delta)) across the transition band.
struct BoundaryData {
    double amplitude = 1.0;
    double x0 = 0.5;
    double delta = 0.01;

    void validate() const {
        if (!(amplitude > 0.0)) throw Error("boundary: amplitude A must be positive");
        if (!(delta > 0.0)) throw Error("boundary: delta must be positive");
        if (!(delta < x0)) throw Error("boundary: requires 0 < delta < x0");
        if (!(x0 < 1.0 + delta)) throw Error("boundary: requires x0 < 1 + delta");
    }

    double value(double x) const {
        if (x <= x0 - delta) return -amplitude;
        if (x >= x0 + delta) return amplitude;
        const double s = std::sin(std::numbers::pi * (x - x0) / (2.0 * delta));
        return amplitude * s * s * s;
    }

    double value(const Domain& d, double xi, double eta) const {
        return value(d.to_physical(xi, eta).x);
    }
};

/// Number of lattice columns along eta = 0 inside |x - x0| < delta.
inline int transition_columns(const Domain& d, const BoundaryData& b) {
    int count = 0;
    for (int i = 0; i <= d.n(); ++i)
        if (std::abs(d.node_position(i, 0).x - b.x0) < b.delta) ++count;
    return count;
}

/// How the rows of the Neumann nodes are closed.
///
/// ghost: the nine-point stencil at N nodes with outside values taken from
/// ghost_stencil. energy: every row is minus the gradient of the discrete
/// Dirichlet energy (the cell trapezoid of integrate_energy) divided by the
/// node's quadrature weight, so the Neumann condition holds in weak form and
/// the semi-discrete flow descends the discrete J_eps exactly. The two agree
/// at interior nodes for every theta and everywhere for theta = pi/2.
enum class NeumannClosure { energy, ghost };

inline const char* to_string(NeumannClosure c) { return c == NeumannClosure::ghost ? "ghost" : "energy"; }

struct SolverConfig {
    double dt = 0.0;           // explicit step; 0 means dt_factor * h^2
    double dt_factor = 0.25;
    double ss_tol = 1e-8;
    int ss_window = 10;
    long max_steps = 2'000'000;
    double lin_tol = 1e-10;
    double slave_factor = 2.0; // epsilon = slave_factor * h
    NeumannClosure closure = NeumannClosure::energy;

    void validate() const {
        if (dt < 0.0 || !(dt_factor > 0.0)) throw Error("solver: dt must be positive");
        if (!(ss_tol > 0.0)) throw Error("solver: ss_tol must be positive");
        if (ss_window < 1) throw Error("solver: ss_window must be at least 1");
        if (max_steps < 1) throw Error("solver: max_steps must be at least 1");
        if (!(lin_tol > 0.0)) throw Error("solver: lin_tol must be positive");
        if (!(slave_factor >= 2.0)) throw Error("solver: slave_factor must be >= 2");
    }

    double time_step(const Domain& d) const { return dt > 0.0 ? dt : dt_factor * d.h() * d.h(); }
    double epsilon(const Domain& d) const { return slave_factor * d.h(); }
};

struct EnergySample {
    long step = 0;
    double time = 0.0;
    double energy = 0.0;
};

class EnergyTrace {
public:
    void push(long step, double time, double energy) {
        if (!samples_.empty() && step <= samples_.back().step)
            throw Error("energy trace: steps must be strictly increasing");
        if (!std::isfinite(energy)) throw Error("energy trace: non-finite energy");
        samples_.push_back({step, time, energy});
    }

    const std::vector<EnergySample>& samples() const { return samples_; }
    bool empty() const { return samples_.empty(); }
    std::size_t size() const { return samples_.size(); }
    const EnergySample& front() const { return samples_.front(); }
    const EnergySample& back() const { return samples_.back(); }

    /// Largest single-step increase J_{k+1} - J_k (0 if monotone).
    double max_increase() const {
        double worst = 0.0;
        for (std::size_t k = 1; k < samples_.size(); ++k)
            worst = std::max(worst, samples_[k].energy - samples_[k - 1].energy);
        return worst;
    }

private:
    std::vector<EnergySample> samples_;
};

/// Initial field: the Dirichlet profile evaluated at the physical x of every node.
inline Field initial_data(const Domain& d, const BoundaryData& b) {
    b.validate();
    if (const int cols = transition_columns(d, b); cols < 4) {
        std::ostringstream os;
        os << "transition band |x - x0| < delta spans " << cols << " grid column(s) at n = " << d.n();
        log_warning(os.str());
    }
    return Field::from_function(d, [&](double xi, double eta) { return b.value(d, xi, eta); });
}

/// Overwrites the S nodes (eta = 0 and xi = 1, shared corners included).
inline Field apply_dirichlet(Field f, const BoundaryData& b) {
    const Domain& d = f.domain();
    const int n = d.n();
    for (int i = 0; i <= n; ++i) f(i, 0) = b.value(d, d.xi(i), 0.0);
    for (int j = 0; j <= n; ++j) f(n, j) = b.value(d, 1.0, d.eta(j));
    return f;
}

// ---------------------------------------------------------------------------
// Ghost-point closure of the two Neumann edges.

struct StencilEntry {
    int i = 0;
    int j = 0;
    double weight = 0.0;
};

/// Up to four lattice entries whose weighted sum gives one ghost value.
struct GhostStencil {
    std::array<StencilEntry, 4> entries{};
    int size = 0;

    void add(int i, int j, double w) { entries[static_cast<std::size_t>(size++)] = {i, j, w}; }
    double evaluate(const Field& f) const {
        double s = 0.0;
        for (int k = 0; k < size; ++k) s += entries[k].weight * f(entries[k].i, entries[k].j);
        return s;
    }
};

/// Expresses the value at an outside position (i = -1 or j = n + 1) through
/// lattice values.
///
/// eta = 1:  v(i, n+1) = v(i, n-1) + 2h cos(theta) v_xi(i, n)
/// xi = 0:   v(-1, j)  = v(1, j)   - 2h cos(theta) v_eta(0, j)
/// Tangential derivatives are centered, or second-order one-sided at the
/// Dirichlet corners. At the Neumann corner both conditions hold at once,
/// which forces v_xi = v_eta = 0 there; the three corner ghosts are the
/// reflections through the corner.
inline GhostStencil ghost_stencil(const Domain& d, int i, int j) {
    const int n = d.n();
    const double c = d.cos_theta();
    GhostStencil g;
    if (i == -1 && j == n + 1) {
        g.add(1, n - 1, 1.0);
    } else if (i == -1 && j == n) {
        g.add(1, n, 1.0);
    } else if (i == 0 && j == n + 1) {
        g.add(0, n - 1, 1.0);
    } else if (i == -1 && j >= 0 && j < n) {
        g.add(1, j, 1.0);
        if (j == 0) {
            g.add(0, 0, 3.0 * c);
            g.add(0, 1, -4.0 * c);
            g.add(0, 2, c);
        } else {
            g.add(0, j + 1, -c);
            g.add(0, j - 1, c);
        }
    } else if (j == n + 1 && i >= 1 && i <= n) {
        g.add(i, n - 1, 1.0);
        if (i == n) {
            g.add(n, n, 3.0 * c);
            g.add(n - 1, n, -4.0 * c);
            g.add(n - 2, n, c);
        } else {
            g.add(i + 1, n, c);
            g.add(i - 1, n, -c);
        }
    } else {
        throw Error("ghost_stencil: position (" + std::to_string(i) + ", " + std::to_string(j) +
                    ") is not a ghost location");
    }
    return g;
}

enum class GhostEdge { xi0, eta1, corner };

/// Ghost layer values for one Neumann edge.
///
/// xi0: v(-1, j) for j = 0..n-1. eta1: v(i, n+1) for i = 1..n.
/// corner: {v(-1, n), v(0, n+1), v(-1, n+1)}.
inline std::vector<double> ghost_values(const Field& f, GhostEdge edge) {
    const Domain& d = f.domain();
    const int n = d.n();
    std::vector<double> out;
    switch (edge) {
    case GhostEdge::xi0:
        for (int j = 0; j < n; ++j) out.push_back(ghost_stencil(d, -1, j).evaluate(f));
        break;
    case GhostEdge::eta1:
        for (int i = 1; i <= n; ++i) out.push_back(ghost_stencil(d, i, n + 1).evaluate(f));
        break;
    case GhostEdge::corner:
        out = {ghost_stencil(d, -1, n).evaluate(f), ghost_stencil(d, 0, n + 1).evaluate(f),
               ghost_stencil(d, -1, n + 1).evaluate(f)};
        break;
    }
    return out;
}

// ---------------------------------------------------------------------------

/// Discrete 2(a D_xixi + b D_xieta + c D_etaeta) with the Neumann closure
/// folded in. Rows exist for the unknown nodes (everything off S); columns span
/// all lattice nodes so Dirichlet values enter through the same matrix.
class DiffusionOperator {
public:
    using Matrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

    explicit DiffusionOperator(const Domain& d, NeumannClosure closure = NeumannClosure::energy)
        : domain_(d), closure_(closure) {
        const int n = d.n();
        unknown_of_node_.assign(d.node_count(), -1);
        for (int j = 0; j <= n; ++j)
            for (int i = 0; i <= n; ++i)
                if (!d.is_dirichlet(i, j)) {
                    unknown_of_node_[node(i, j)] = static_cast<int>(node_of_unknown_.size());
                    node_of_unknown_.push_back(static_cast<int>(node(i, j)));
                }
        std::vector<Eigen::Triplet<double>> t;
        if (closure == NeumannClosure::ghost)
            assemble_ghost(t);
        else
            assemble_energy(t);
        full_.resize(unknowns(), static_cast<Eigen::Index>(d.node_count()));
        full_.setFromTriplets(t.begin(), t.end());
        std::vector<Eigen::Triplet<double>> bt;
        for (int r = 0; r < full_.outerSize(); ++r)
            for (Matrix::InnerIterator it(full_, r); it; ++it)
                if (const int u = unknown_of_node_[static_cast<std::size_t>(it.col())]; u >= 0)
                    bt.emplace_back(r, u, it.value());
        block_.resize(unknowns(), unknowns());
        block_.setFromTriplets(bt.begin(), bt.end());
    }

    const Domain& domain() const { return domain_; }
    NeumannClosure closure() const { return closure_; }
    int unknowns() const { return static_cast<int>(node_of_unknown_.size()); }
    std::size_t node(int i, int j) const {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(domain_.n() + 1) +
               static_cast<std::size_t>(i);
    }
    int unknown_index(std::size_t node) const { return unknown_of_node_[node]; }
    int node_index(int unknown) const { return node_of_unknown_[static_cast<std::size_t>(unknown)]; }

    /// unknowns x all-nodes operator.
    const Matrix& full() const { return full_; }
    /// unknowns x unknowns block.
    const Matrix& interior_block() const { return block_; }

    /// (L v) at the unknown nodes.
    Eigen::VectorXd apply(const Field& f) const {
        Eigen::Map<const Eigen::VectorXd> v(f.values().data(), static_cast<Eigen::Index>(f.values().size()));
        return full_ * v;
    }

private:
    void assemble_ghost(std::vector<Eigen::Triplet<double>>& t) const {
        const Domain& d = domain_;
        const int n = d.n();
        const double h2 = d.h() * d.h();
        const auto k = operator_coefficients(d);
        struct Offset {
            int di, dj;
            double w;
        };
        const std::array<Offset, 9> stencil{{
            {0, 0, 2.0 * (-2.0 * k.a - 2.0 * k.c) / h2},
            {1, 0, 2.0 * k.a / h2},
            {-1, 0, 2.0 * k.a / h2},
            {0, 1, 2.0 * k.c / h2},
            {0, -1, 2.0 * k.c / h2},
            {1, 1, 2.0 * k.b / (4.0 * h2)},
            {-1, -1, 2.0 * k.b / (4.0 * h2)},
            {1, -1, -2.0 * k.b / (4.0 * h2)},
            {-1, 1, -2.0 * k.b / (4.0 * h2)},
        }};
        t.reserve(static_cast<std::size_t>(unknowns()) * 12);
        auto emit = [&](int row, int i, int j, double w) {
            if (w != 0.0) t.emplace_back(row, static_cast<int>(node(i, j)), w);
        };
        for (int row = 0; row < unknowns(); ++row) {
            const int nd = node_of_unknown_[static_cast<std::size_t>(row)];
            const int i = nd % (n + 1), j = nd / (n + 1);
            for (const auto& s : stencil) {
                const int p = i + s.di, q = j + s.dj;
                if (p >= 0 && p <= n && q >= 0 && q <= n) {
                    emit(row, p, q, s.w);
                } else {
                    const GhostStencil g = ghost_stencil(d, p, q);
                    for (int e = 0; e < g.size; ++e)
                        emit(row, g.entries[e].i, g.entries[e].j, s.w * g.entries[e].weight);
                }
            }
        }
    }

    // Hessian of one cell's share of the Dirichlet energy, corners ordered
    // (i,j), (i+1,j), (i,j+1), (i+1,j+1), without the cell area factor.
    static std::array<std::array<double, 4>, 4> cell_hessian(const OperatorCoefficients& k, double h) {
        using V = std::array<double, 4>;
        const V xb{-1, 1, 0, 0}, xt{0, 0, -1, 1}, el{-1, 0, 1, 0}, er{0, -1, 0, 1};
        std::array<V, 4> m{};
        for (int p = 0; p < 4; ++p)
            for (int q = 0; q < 4; ++q)
                m[p][q] = (k.a * (xb[p] * xb[q] + xt[p] * xt[q]) +
                           0.25 * k.b * ((xb[p] + xt[p]) * (el[q] + er[q]) + (el[p] + er[p]) * (xb[q] + xt[q])) +
                           k.c * (el[p] * el[q] + er[p] * er[q])) /
                          (h * h);
        return m;
    }

    void assemble_energy(std::vector<Eigen::Triplet<double>>& t) const {
        const Domain& d = domain_;
        const int n = d.n();
        const auto m = cell_hessian(operator_coefficients(d), d.h());
        auto weight = [n](int i, int j) {
            return ((i == 0 || i == n) ? 0.5 : 1.0) * ((j == 0 || j == n) ? 0.5 : 1.0);
        };
        t.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n) * 16);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const std::array<std::size_t, 4> corner{node(i, j), node(i + 1, j), node(i, j + 1),
                                                        node(i + 1, j + 1)};
                for (int p = 0; p < 4; ++p) {
                    const int row = unknown_of_node_[corner[p]];
                    if (row < 0) continue;
                    const int ip = i + (p & 1), jp = j + (p >> 1);
                    // The flow is W v_t = -dE/dv; the cell area cancels against W.
                    const double s = -1.0 / weight(ip, jp);
                    for (int q = 0; q < 4; ++q)
                        if (m[p][q] != 0.0) t.emplace_back(row, static_cast<int>(corner[q]), s * m[p][q]);
                }
            }
    }

    Domain domain_;
    NeumannClosure closure_;
    std::vector<int> unknown_of_node_;
    std::vector<int> node_of_unknown_;
    Matrix full_;
    Matrix block_;
};

struct StepReport {
    double linear_residual = 0.0;
    int iterations = 0;
};

/// Gradient flow v_t = 2 Lap v - Q^2 phi_eps'(v) on a fixed mesh.
///
/// Diffusion is advanced with Crank-Nicolson, the reaction explicitly at the
/// current state. The system matrix I - dt/2 L depends only on (h, dt) and is
/// built once. With dt proportional to h^2 its condition number is bounded
/// independently of the mesh, so a Krylov solver started from the linear
/// extrapolation of the last two steps needs only a few iterations. With the
/// energy closure the row-weighted system is symmetric positive definite and
/// conjugate gradients are used, otherwise BiCGSTAB; a sparse LU
/// factorization is the fallback.
///
/// Instances carry that extrapolation history and are not thread-safe.
class GradientFlow {
public:
    using Matrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

    GradientFlow(const Domain& d, const PhaseModel& m, const CoefficientField& q,
                 const SolverConfig& cfg)
        : domain_(d), model_(m), q_(q), cfg_(cfg), op_(d, cfg.closure) {
        cfg_.validate();
        model_.validate();
        if (q_.n() != d.n()) throw Error("coefficient field resolution does not match domain");
        dt_ = cfg_.time_step(d);
        const double stable = 2.0 / phi_prime_lipschitz(model_) / q_.upper() / q_.upper();
        if (!model_.is_linear() && dt_ >= stable) {
            std::ostringstream os;
            os << "dt = " << dt_ << " exceeds the explicit reaction bound " << stable;
            log_warning(os.str());
        }
        const int nu = op_.unknowns();
        Matrix system(nu, nu);
        system.setIdentity();
        system -= 0.5 * dt_ * op_.interior_block();
        system.makeCompressed();
        system_ = std::move(system);

        std::vector<Eigen::Triplet<double>> bt;
        const auto& L = op_.full();
        for (int r = 0; r < L.outerSize(); ++r)
            for (Matrix::InnerIterator it(L, r); it; ++it)
                if (op_.unknown_index(static_cast<std::size_t>(it.col())) < 0)
                    bt.emplace_back(r, static_cast<int>(it.col()), it.value());
        boundary_.resize(nu, static_cast<Eigen::Index>(d.node_count()));
        boundary_.setFromTriplets(bt.begin(), bt.end());

        if (op_.closure() == NeumannClosure::energy) {
            // W (I - dt/2 L) = W + dt/2 K is symmetric positive definite.
            weight_.resize(nu);
            const int n = d.n();
            for (int u = 0; u < nu; ++u) {
                const int nd = op_.node_index(u);
                const int i = nd % (n + 1), j = nd / (n + 1);
                weight_[u] = ((i == 0 || i == n) ? 0.5 : 1.0) * ((j == 0 || j == n) ? 0.5 : 1.0);
            }
            Eigen::SparseMatrix<double> sym = weight_.asDiagonal() * system_;
            sym.makeCompressed();
            symmetric_ = std::move(sym);
            cg_.setTolerance(0.1 * cfg_.lin_tol);
            cg_.setMaxIterations(500);
            cg_.compute(symmetric_);
        } else {
            krylov_.setTolerance(0.5 * cfg_.lin_tol);
            krylov_.setMaxIterations(200);
            krylov_.compute(system_);
        }

        rows_.resize(static_cast<std::size_t>(nu));
        q2_.resize(static_cast<std::size_t>(nu));
        for (int u = 0; u < nu; ++u) {
            const int nd = op_.node_index(u);
            rows_[static_cast<std::size_t>(u)] = nd;
            q2_[static_cast<std::size_t>(u)] = q_.squared(nd % (d.n() + 1), nd / (d.n() + 1));
        }
    }

    const Domain& domain() const { return domain_; }
    const PhaseModel& model() const { return model_; }
    const CoefficientField& coefficient() const { return q_; }
    const SolverConfig& config() const { return cfg_; }
    const DiffusionOperator& op() const { return op_; }
    double dt() const { return dt_; }

    double energy(const Field& f) const { return energy_relaxed(f, q_, model_); }

    /// Forgets the extrapolation history (the next solve starts from f).
    void reset() { history_ = 0; }

    /// Advances one step in place. Dirichlet rows are left untouched.
    StepReport advance(Field& f) {
        const int nu = op_.unknowns();
        const auto vals = f.values();
        Eigen::Map<const Eigen::VectorXd> all(vals.data(), static_cast<Eigen::Index>(vals.size()));
        Eigen::VectorXd current(nu);
        for (int u = 0; u < nu; ++u) current[u] = vals[rows_[static_cast<std::size_t>(u)]];

        // Dirichlet columns enter at both time levels of the trapezoid rule.
        Eigen::VectorXd rhs = current + 0.5 * dt_ * (op_.interior_block() * current) +
                              dt_ * (boundary_ * all);
        for (int u = 0; u < nu; ++u)
            rhs[u] -= dt_ * q2_[static_cast<std::size_t>(u)] * phi_prime(current[u], model_);

        Eigen::VectorXd guess = current;
        if (history_ > 0 && previous_.size() == nu && last_.size() == nu &&
            (last_ - current).lpNorm<Eigen::Infinity>() == 0.0)
            guess = 2.0 * current - previous_;

        StepReport report;
        Eigen::VectorXd x;
        if (weight_.size() > 0) {
            x = cg_.solveWithGuess(weight_.cwiseProduct(rhs), guess);
            report.iterations = static_cast<int>(cg_.iterations());
        } else {
            x = krylov_.solveWithGuess(rhs, guess);
            report.iterations = static_cast<int>(krylov_.iterations());
        }
        const double rn = rhs.norm();
        auto rel_residual = [&](const Eigen::VectorXd& y) {
            return rn > 0 ? (system_ * y - rhs).norm() / rn : (system_ * y).norm();
        };
        report.linear_residual = rel_residual(x);
        if (!(report.linear_residual <= cfg_.lin_tol)) {
            x = direct_solve(rhs);
            report.linear_residual = rel_residual(x);
            if (!(report.linear_residual <= cfg_.lin_tol)) {
                std::ostringstream os;
                os << "linear solve residual " << report.linear_residual << " exceeds lin_tol "
                   << cfg_.lin_tol;
                throw SolverError(os.str());
            }
        }
        for (int u = 0; u < nu; ++u) {
            if (!std::isfinite(x[u])) {
                const int nd = rows_[static_cast<std::size_t>(u)];
                std::ostringstream os;
                os << "non-finite value at node (" << nd % (domain_.n() + 1) << ", "
                   << nd / (domain_.n() + 1) << ")";
                throw SolverError(os.str());
            }
            f.values()[static_cast<std::size_t>(rows_[static_cast<std::size_t>(u)])] = x[u];
        }
        previous_ = std::move(current);
        last_ = std::move(x);
        history_ = 1;
        return report;
    }

    /// max |L v - Q^2 phi'(v)| over interior and Neumann nodes.
    double residual(const Field& f) const {
        const Eigen::VectorXd lv = op_.apply(f);
        double worst = 0.0;
        for (int u = 0; u < op_.unknowns(); ++u) {
            const double v = f.values()[static_cast<std::size_t>(rows_[static_cast<std::size_t>(u)])];
            worst = std::max(worst,
                             std::abs(lv[u] - q2_[static_cast<std::size_t>(u)] * phi_prime(v, model_)));
        }
        return worst;
    }

private:
    Eigen::VectorXd direct_solve(const Eigen::VectorXd& rhs) {
        if (!lu_) {
            lu_ = std::make_unique<LU>();
            Eigen::SparseMatrix<double> cm = system_;
            lu_->compute(cm);
            if (lu_->info() != Eigen::Success) throw SolverError("factorization of I - dt/2 L failed");
        }
        return lu_->solve(rhs);
    }

    using LU = Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>;

    Domain domain_;
    PhaseModel model_;
    CoefficientField q_;
    SolverConfig cfg_;
    DiffusionOperator op_;
    double dt_ = 0.0;
    Matrix system_;
    Matrix boundary_;
    std::vector<std::size_t> rows_;
    std::vector<double> q2_;
    Eigen::BiCGSTAB<Matrix, Eigen::DiagonalPreconditioner<double>> krylov_;
    Eigen::VectorXd weight_;
    Eigen::SparseMatrix<double> symmetric_;
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper,
                         Eigen::DiagonalPreconditioner<double>> cg_;
    std::unique_ptr<LU> lu_;
    Eigen::VectorXd previous_;
    Eigen::VectorXd last_;
    int history_ = 0;
};

/// One Crank-Nicolson / explicit-reaction step from f.
inline Field step(const Field& f, const SolverConfig& cfg, const PhaseModel& m,
                  const CoefficientField& q) {
    GradientFlow flow(f.domain(), m, q, cfg);
    Field out = f;
    flow.advance(out);
    return out;
}

struct SteadyState {
    Field field;
    EnergyTrace trace;
    bool converged = false;
    long steps = 0;
    double time = 0.0;
    /// Steps where J_eps rose by more than 10 lin_tol max(1, |J|).
    long energy_increases = 0;
    double max_energy_increase = 0.0;
};

/// Steps until |J_{k+1} - J_k| <= ss_tol dt max(1, |J_k|) holds for
/// ss_window consecutive steps, or max_steps is reached.
inline SteadyState run_to_steady_state(GradientFlow& flow, Field f0) {
    const SolverConfig& cfg = flow.config();
    const double dt = flow.dt();
    SteadyState out{std::move(f0), {}, false, 0, 0.0, 0, 0.0};
    flow.reset();
    double energy = flow.energy(out.field);
    out.trace.push(0, 0.0, energy);
    int quiet = 0;
    for (long k = 1; k <= cfg.max_steps; ++k) {
        flow.advance(out.field);
        const double next = flow.energy(out.field);
        const double scale = std::max(1.0, std::abs(energy));
        const double change = next - energy;
        if (change > 10.0 * cfg.lin_tol * scale) {
            ++out.energy_increases;
            out.max_energy_increase = std::max(out.max_energy_increase, change);
        }
        out.trace.push(k, k * dt, next);
        out.steps = k;
        out.time = k * dt;
        energy = next;
        if (std::abs(change) <= cfg.ss_tol * dt * scale) {
            if (++quiet >= cfg.ss_window) {
                out.converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    if (out.energy_increases > 0) {
        std::ostringstream os;
        os << "energy rose on " << out.energy_increases << " step(s), max increase "
           << out.max_energy_increase;
        log_warning(os.str());
    }
    if (!out.converged) log_warning("run_to_steady_state: max_steps reached without convergence");
    return out;
}

inline SteadyState run_to_steady_state(const Field& f0, const SolverConfig& cfg, const PhaseModel& m,
                                       const CoefficientField& q) {
    GradientFlow flow(f0.domain(), m, q, cfg);
    return run_to_steady_state(flow, f0);
}

/// Max-norm residual of 2 Lap u = Q^2 phi'(u) at interior and Neumann nodes.
inline double residual_el(const Field& f, const PhaseModel& m, const CoefficientField& q,
                          NeumannClosure closure = NeumannClosure::energy) {
    const DiffusionOperator op(f.domain(), closure);
    const Eigen::VectorXd lv = op.apply(f);
    const int n = f.n();
    double worst = 0.0;
    for (int u = 0; u < op.unknowns(); ++u) {
        const int nd = op.node_index(u);
        const int i = nd % (n + 1), j = nd / (n + 1);
        worst = std::max(worst, std::abs(lv[u] - q.squared(i, j) * phi_prime(f(i, j), m)));
    }
    return worst;
}

/// residual_el relative to the operator scale max(1, |u|_inf) / h^2.
inline double scaled_residual_el(const Field& f, const PhaseModel& m, const CoefficientField& q,
                                 NeumannClosure closure = NeumannClosure::energy) {
    const double h = f.domain().h();
    return residual_el(f, m, q, closure) * h * h / std::max(1.0, f.max_abs());
}

} // namespace fbflow
