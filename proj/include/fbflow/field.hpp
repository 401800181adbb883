#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "fbflow/geometry.hpp"

namespace fbflow {

/// Scalar grid function on the (xi, eta) lattice of a Domain.
///
/// Storage is row-major in eta: value (i, j) lives at j * (n+1) + i.
class Field {
public:
    explicit Field(const Domain& d, double value = 0.0)
        : domain_(d), values_(d.node_count(), value) {}

    Field(const Domain& d, std::vector<double> values) : domain_(d), values_(std::move(values)) {
        if (values_.size() != d.node_count())
            throw Error("field size " + std::to_string(values_.size()) + " does not match (n+1)^2 = " +
                        std::to_string(d.node_count()));
    }

    /// Samples g(xi, eta) at every node.
    template <typename Fn>
    static Field from_function(const Domain& d, Fn&& g) {
        Field f(d);
        for (int j = 0; j <= d.n(); ++j)
            for (int i = 0; i <= d.n(); ++i) f(i, j) = g(d.xi(i), d.eta(j));
        return f;
    }

    const Domain& domain() const { return domain_; }
    int n() const { return domain_.n(); }

    std::size_t index(int i, int j) const {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(domain_.n() + 1) +
               static_cast<std::size_t>(i);
    }

    double& operator()(int i, int j) { return values_[index(i, j)]; }
    double operator()(int i, int j) const { return values_[index(i, j)]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    bool all_finite() const {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }

    double min() const { return *std::min_element(values_.begin(), values_.end()); }
    double max() const { return *std::max_element(values_.begin(), values_.end()); }
    double max_abs() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    /// Bilinear interpolation at reference coordinates (clamped to the square).
    double sample(double xi, double eta) const {
        const int n = domain_.n();
        const double s = std::clamp(xi, 0.0, 1.0) * n;
        const double t = std::clamp(eta, 0.0, 1.0) * n;
        const int i = std::min(static_cast<int>(s), n - 1);
        const int j = std::min(static_cast<int>(t), n - 1);
        const double fs = s - i, ft = t - j;
        return (1 - fs) * (1 - ft) * (*this)(i, j) + fs * (1 - ft) * (*this)(i + 1, j) +
               (1 - fs) * ft * (*this)(i, j + 1) + fs * ft * (*this)(i + 1, j + 1);
    }

    double sample_physical(Point p) const {
        const Point r = domain_.to_reference(p);
        return sample(r.x, r.y);
    }

    friend bool operator==(const Field& a, const Field& b) { return a.values_ == b.values_; }

private:
    Domain domain_;
    std::vector<double> values_;
};

/// Nodal values of the spatially varying weight Q, with recorded bounds
/// 0 < m <= Q <= M.
class CoefficientField {
public:
    explicit CoefficientField(const Domain& d, double value = 1.0)
        : CoefficientField(d, std::vector<double>(d.node_count(), value)) {}

    CoefficientField(const Domain& d, std::vector<double> values)
        : n_(d.n()), values_(std::move(values)) {
        if (values_.size() != d.node_count()) throw Error("coefficient field size mismatch");
        lower_ = *std::min_element(values_.begin(), values_.end());
        upper_ = *std::max_element(values_.begin(), values_.end());
        if (!(lower_ > 0.0) || !std::isfinite(upper_))
            throw Error("coefficient field must satisfy 0 < Q < infinity");
        uniform_ = lower_ == upper_;
    }

    double operator()(int i, int j) const {
        return values_[static_cast<std::size_t>(j) * static_cast<std::size_t>(n_ + 1) +
                       static_cast<std::size_t>(i)];
    }
    double squared(int i, int j) const {
        const double q = (*this)(i, j);
        return q * q;
    }

    double lower() const { return lower_; }
    double upper() const { return upper_; }
    bool uniform() const { return uniform_; }
    int n() const { return n_; }

private:
    int n_;
    std::vector<double> values_;
    double lower_ = 1.0;
    double upper_ = 1.0;
    bool uniform_ = true;
};

} // namespace fbflow
