#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace nliv {

/// Uniform 1D grid on [a, b] with n nodes.
struct Grid1D {
    double a = 0.0;
    double b = 1.0;
    int n = 2;

    Grid1D() = default;
    Grid1D(double a_, double b_, int n_) : a(a_), b(b_), n(n_) {
        if (!(a < b)) throw std::invalid_argument("Grid1D: requires a < b");
        if (n < 2) throw std::invalid_argument("Grid1D: requires n >= 2");
    }

    double spacing() const { return (b - a) / (n - 1); }
    double node(int i) const { return a + i * spacing(); }

    bool operator==(const Grid1D& o) const { return a == o.a && b == o.b && n == o.n; }
    bool operator!=(const Grid1D& o) const { return !(*this == o); }
};

/// Real-valued function sampled on a Grid1D.
struct GridFn {
    Grid1D grid;
    Eigen::VectorXd values;

    GridFn() = default;
    GridFn(Grid1D g, Eigen::VectorXd v) : grid(g), values(std::move(v)) {
        if (values.size() != grid.n)
            throw std::invalid_argument("GridFn: values length must equal grid.n");
    }

    static GridFn constant(Grid1D g, double c) {
        return GridFn(g, Eigen::VectorXd::Constant(g.n, c));
    }

    template <class F>
    static GridFn sample(Grid1D g, F&& f) {
        Eigen::VectorXd v(g.n);
        for (int i = 0; i < g.n; ++i) v[i] = f(g.node(i));
        return GridFn(g, std::move(v));
    }
};

/// Tensor grid in (y, x, z).
struct Grid3 {
    Grid1D gy, gx, gz;
    long size() const { return static_cast<long>(gy.n) * gx.n * gz.n; }
};

/// Function on a Grid3, row-major in (y, x, z).
struct Field3 {
    Grid3 grid;
    Eigen::VectorXd values;

    Field3() = default;
    Field3(Grid3 g, Eigen::VectorXd v) : grid(g), values(std::move(v)) {
        if (values.size() != grid.size())
            throw std::invalid_argument("Field3: values length must match grid node count");
    }
    static Field3 zero(Grid3 g) { return Field3(g, Eigen::VectorXd::Zero(g.size())); }

    long index(int iy, int ix, int iz) const {
        return (static_cast<long>(iy) * grid.gx.n + ix) * grid.gz.n + iz;
    }
    double at(int iy, int ix, int iz) const { return values[index(iy, ix, iz)]; }
    double& at(int iy, int ix, int iz) { return values[index(iy, ix, iz)]; }
};

/// Function on a pair of grids, row-major in (first axis, second axis).
struct Field2 {
    Grid1D g0, g1;
    Eigen::VectorXd values;

    Field2() = default;
    Field2(Grid1D a, Grid1D b, Eigen::VectorXd v) : g0(a), g1(b), values(std::move(v)) {
        if (values.size() != static_cast<long>(g0.n) * g1.n)
            throw std::invalid_argument("Field2: values length must match grid node count");
    }
    static Field2 zero(Grid1D a, Grid1D b) {
        return Field2(a, b, Eigen::VectorXd::Zero(static_cast<long>(a.n) * b.n));
    }

    long index(int i0, int i1) const { return static_cast<long>(i0) * g1.n + i1; }
    double at(int i0, int i1) const { return values[index(i0, i1)]; }
    double& at(int i0, int i1) { return values[index(i0, i1)]; }
};

/// Composite trapezoid weights: h/2 at endpoints, h inside.
inline Eigen::VectorXd trapezoid_weights(const Grid1D& g) {
    Eigen::VectorXd w = Eigen::VectorXd::Constant(g.n, g.spacing());
    w[0] *= 0.5;
    w[g.n - 1] *= 0.5;
    return w;
}

inline double trapezoid_integrate(const GridFn& f) {
    return trapezoid_weights(f.grid).dot(f.values);
}

/// Trapezoid-weighted L2 inner product; both functions must share the grid.
inline double inner_l2(const GridFn& f, const GridFn& g) {
    if (f.grid != g.grid) throw std::invalid_argument("inner_l2: grid mismatch");
    return (trapezoid_weights(f.grid).array() * f.values.array() * g.values.array()).sum();
}

inline double norm_l2(const GridFn& f) { return std::sqrt(inner_l2(f, f)); }

/// First-derivative matrix: central differences inside, one-sided
/// second-order at the endpoints.
inline Eigen::MatrixXd derivative_matrix(const Grid1D& g) {
    const double h = g.spacing();
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(g.n, g.n);
    for (int i = 1; i + 1 < g.n; ++i) {
        D(i, i - 1) = -0.5 / h;
        D(i, i + 1) = 0.5 / h;
    }
    D(0, 0) = -1.5 / h;
    D(0, 1) = 2.0 / h;
    D(0, 2) = -0.5 / h;
    D(g.n - 1, g.n - 1) = 1.5 / h;
    D(g.n - 1, g.n - 2) = -2.0 / h;
    D(g.n - 1, g.n - 3) = 0.5 / h;
    return D;
}

/// H1 penalty Gram G = W + K: trapezoid mass plus the first-difference
/// stiffness K = (1/h)·tridiag(−1, 2, −1) (exact ∫f′g′ for piecewise-linear
/// functions). The central-difference form annihilates the odd–even
/// checkerboard mode, which then grows unpenalized in the solver; the cell
/// form penalizes it maximally.
inline Eigen::MatrixXd h1_gram(const Grid1D& g) {
    const double h = g.spacing();
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(g.n, g.n);
    G.diagonal() = trapezoid_weights(g);
    for (int i = 0; i + 1 < g.n; ++i) {
        G(i, i) += 1.0 / h;
        G(i + 1, i + 1) += 1.0 / h;
        G(i, i + 1) -= 1.0 / h;
        G(i + 1, i) -= 1.0 / h;
    }
    return G;
}

inline double inner_h1(const GridFn& f, const GridFn& g) {
    if (f.grid != g.grid) throw std::invalid_argument("inner_h1: grid mismatch");
    const Eigen::VectorXd w = trapezoid_weights(f.grid);
    const Eigen::MatrixXd D = derivative_matrix(f.grid);
    const Eigen::VectorXd df = D * f.values;
    const Eigen::VectorXd dg = D * g.values;
    return (w.array() * (f.values.array() * g.values.array() + df.array() * dg.array())).sum();
}

/// Linear interpolation along the y-axis of a Field3 at fixed (ix, iz).
/// Queries outside [gy.a, gy.b] clamp to the boundary value.
inline double interp_linear_y(const Field3& field, double y, int ix, int iz) {
    const Grid1D& gy = field.grid.gy;
    if (y <= gy.a) return field.at(0, ix, iz);
    if (y >= gy.b) return field.at(gy.n - 1, ix, iz);
    const double t = (y - gy.a) / gy.spacing();
    int i = static_cast<int>(t);
    if (i >= gy.n - 1) i = gy.n - 2;
    const double frac = t - i;
    return (1.0 - frac) * field.at(i, ix, iz) + frac * field.at(i + 1, ix, iz);
}

/// Value and y-derivative of a cubic Hermite interpolant.
struct HermiteEval {
    double value = 0.0;
    double deriv = 0.0;
};

namespace detail {

inline HermiteEval hermite_cell(double f0, double f1, double d0, double d1, double h, double t) {
    const double t2 = t * t, t3 = t2 * t;
    HermiteEval e;
    e.value = (2 * t3 - 3 * t2 + 1) * f0 + (t3 - 2 * t2 + t) * h * d0 +
              (-2 * t3 + 3 * t2) * f1 + (t3 - t2) * h * d1;
    e.deriv = ((6 * t2 - 6 * t) * f0 + (3 * t2 - 4 * t + 1) * h * d0 +
               (6 * t - 6 * t2) * f1 + (3 * t2 - 2 * t) * h * d1) /
              h;
    return e;
}

}  // namespace detail

/// Cubic Hermite interpolation along y of a Field3 with nodal derivatives
/// given by a second field; clamps to the boundary value (zero slope)
/// outside the grid. The reported derivative is the interpolant's own
/// derivative, so it is exactly consistent with the value.
inline HermiteEval interp_hermite_y(const Field3& field, const Field3& dfield, double y, int ix,
                                    int iz) {
    const Grid1D& gy = field.grid.gy;
    if (y <= gy.a) return {field.at(0, ix, iz), 0.0};
    if (y >= gy.b) return {field.at(gy.n - 1, ix, iz), 0.0};
    const double t = (y - gy.a) / gy.spacing();
    int i = static_cast<int>(t);
    if (i >= gy.n - 1) i = gy.n - 2;
    return detail::hermite_cell(field.at(i, ix, iz), field.at(i + 1, ix, iz),
                                dfield.at(i, ix, iz), dfield.at(i + 1, ix, iz), gy.spacing(),
                                t - i);
}

/// Same along the first axis of a Field2.
inline HermiteEval interp_hermite_0(const Field2& field, const Field2& dfield, double y, int i1) {
    const Grid1D& g = field.g0;
    if (y <= g.a) return {field.at(0, i1), 0.0};
    if (y >= g.b) return {field.at(g.n - 1, i1), 0.0};
    const double t = (y - g.a) / g.spacing();
    int i = static_cast<int>(t);
    if (i >= g.n - 1) i = g.n - 2;
    return detail::hermite_cell(field.at(i, i1), field.at(i + 1, i1), dfield.at(i, i1),
                                dfield.at(i + 1, i1), g.spacing(), t - i);
}

/// Same clamped linear interpolation along the first axis of a Field2.
inline double interp_linear_0(const Field2& field, double y, int i1) {
    const Grid1D& g = field.g0;
    if (y <= g.a) return field.at(0, i1);
    if (y >= g.b) return field.at(g.n - 1, i1);
    const double t = (y - g.a) / g.spacing();
    int i = static_cast<int>(t);
    if (i >= g.n - 1) i = g.n - 2;
    const double frac = t - i;
    return (1.0 - frac) * field.at(i, i1) + frac * field.at(i + 1, i1);
}

}  // namespace nliv
