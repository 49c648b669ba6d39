#pragma once

#include "nliv/grid.hpp"

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>

namespace nliv {

enum class IvKind { CE, IND, QUANT };

/// Element of the image space: a function on the z-grid (CE, QUANT) or on
/// the (u, z) tensor grid (IND, row-major in (u, z)), plus the optional
/// scalar mean-constraint component of the IND operator.
struct OpImage {
    Eigen::VectorXd field;
    std::optional<double> scalar;

    Eigen::VectorXd stacked() const {
        if (!scalar) return field;
        Eigen::VectorXd v(field.size() + 1);
        v.head(field.size()) = field;
        v[field.size()] = *scalar;
        return v;
    }
};

/// Weighted L2 ⊕ weighted scalar realization of the image norm.
struct ImageNorm {
    Eigen::VectorXd weights;  // quadrature weights for the field component
    double w_mean = 0.0;      // weight of the scalar component, 0 when absent

    Eigen::VectorXd stacked_weights() const {
        if (w_mean == 0.0) return weights;
        Eigen::VectorXd w(weights.size() + 1);
        w.head(weights.size()) = weights;
        w[weights.size()] = w_mean;
        return w;
    }

    double inner(const OpImage& a, const OpImage& b) const {
        double s = (weights.array() * a.field.array() * b.field.array()).sum();
        if (a.scalar && b.scalar) s += w_mean * (*a.scalar) * (*b.scalar);
        return s;
    }
    double norm(const OpImage& a) const { return std::sqrt(inner(a, a)); }
};

/// One of the three forward operators with its density fields.
///
/// CE:    F(φ)(z)   = ∫ f_{X|Z}(x|z) φ(x) dx − ψ(z),  f_{X|Z} = f_XZ / max(f_Z, ε)
/// IND:   F(φ)(u,z) = ∫ [f_YXZ(u+φ(x),x,z) − f_YX(u+φ(x),x) f_Z(z)] dx
///        plus the scalar component ∫ φ f_X dx − E[Y]
/// QUANT: F(φ)(z)   = ∫ F_YXZ(φ(x),x,z) dx − q f_Z(z)
struct IvProblem {
    IvKind kind = IvKind::CE;
    Grid1D x_grid, z_grid;
    Grid1D u_grid;          // IND only
    double q = 0.5;         // QUANT only, in (0,1)
    double w_mean = 1.0;    // IND scalar-component weight
    double eps_floor = 1e-3;  // CE conditional-density floor

    Field3 f_yxz;      // IND (apply), QUANT (derivative)
    Field3 df_dy;      // IND
    Field3 F_yxz;      // QUANT
    Field2 f_yx;       // IND, axes (y, x)
    Field2 df_dy_yx;   // IND, axes (y, x)
    Field2 f_xz;       // CE, axes (x, z)
    GridFn f_z;
    GridFn f_x;        // IND
    GridFn psi;        // CE right-hand side
    double mean_y = 0.0;  // IND

    long field_dim() const {
        return kind == IvKind::IND ? static_cast<long>(u_grid.n) * z_grid.n : z_grid.n;
    }
    long stacked_dim() const { return field_dim() + (kind == IvKind::IND ? 1 : 0); }

    ImageNorm image_norm() const {
        ImageNorm norm;
        const Eigen::VectorXd wz = trapezoid_weights(z_grid);
        if (kind == IvKind::IND) {
            const Eigen::VectorXd wu = trapezoid_weights(u_grid);
            norm.weights.resize(field_dim());
            for (int iu = 0; iu < u_grid.n; ++iu)
                norm.weights.segment(static_cast<long>(iu) * z_grid.n, z_grid.n) = wu[iu] * wz;
            norm.w_mean = w_mean;
        } else {
            norm.weights = wz;
        }
        return norm;
    }

    void check_phi(const GridFn& phi) const {
        if (phi.grid != x_grid) throw std::invalid_argument("IvProblem: phi grid mismatch");
    }

    double ce_kernel(int ix, int iz) const {
        return f_xz.at(ix, iz) / std::max(f_z.values[iz], eps_floor);
    }

    OpImage apply(const GridFn& phi) const {
        check_phi(phi);
        const Eigen::VectorXd wx = trapezoid_weights(x_grid);
        OpImage out;
        switch (kind) {
            case IvKind::CE: {
                out.field.resize(z_grid.n);
                for (int iz = 0; iz < z_grid.n; ++iz) {
                    double s = 0.0;
                    for (int ix = 0; ix < x_grid.n; ++ix)
                        s += ce_kernel(ix, iz) * wx[ix] * phi.values[ix];
                    out.field[iz] = s - psi.values[iz];
                }
                break;
            }
            case IvKind::IND: {
                out.field.resize(field_dim());
                for (int iu = 0; iu < u_grid.n; ++iu) {
                    const double u = u_grid.node(iu);
                    for (int iz = 0; iz < z_grid.n; ++iz) {
                        double s = 0.0;
                        for (int ix = 0; ix < x_grid.n; ++ix) {
                            const double yq = u + phi.values[ix];
                            s += wx[ix] * (interp_hermite_y(f_yxz, df_dy, yq, ix, iz).value -
                                           interp_hermite_0(f_yx, df_dy_yx, yq, ix).value *
                                               f_z.values[iz]);
                        }
                        out.field[static_cast<long>(iu) * z_grid.n + iz] = s;
                    }
                }
                double mean = 0.0;
                for (int ix = 0; ix < x_grid.n; ++ix)
                    mean += wx[ix] * phi.values[ix] * f_x.values[ix];
                out.scalar = mean - mean_y;
                break;
            }
            case IvKind::QUANT: {
                out.field.resize(z_grid.n);
                for (int iz = 0; iz < z_grid.n; ++iz) {
                    double s = 0.0;
                    for (int ix = 0; ix < x_grid.n; ++ix)
                        s += wx[ix] * interp_hermite_y(F_yxz, f_yxz, phi.values[ix], ix, iz).value;
                    out.field[iz] = s - q * f_z.values[iz];
                }
                break;
            }
        }
        return out;
    }

    /// ∂_y k̂ evaluated along the current iterate; the Fréchet derivative's
    /// integral kernel at image row (iu, iz) / iz and column ix. Taken as
    /// the derivative of the same interpolant apply() evaluates, so the
    /// derivative is exact for the discretized forward map.
    double derivative_kernel(const GridFn& phi, int iu, int ix, int iz) const {
        switch (kind) {
            case IvKind::CE:
                return ce_kernel(ix, iz);
            case IvKind::IND: {
                const double yq = u_grid.node(iu) + phi.values[ix];
                return interp_hermite_y(f_yxz, df_dy, yq, ix, iz).deriv -
                       interp_hermite_0(f_yx, df_dy_yx, yq, ix).deriv * f_z.values[iz];
            }
            case IvKind::QUANT:
                return interp_hermite_y(F_yxz, f_yxz, phi.values[ix], ix, iz).deriv;
        }
        return 0.0;
    }

    OpImage derivative_apply(const GridFn& phi, const GridFn& dir) const {
        check_phi(phi);
        check_phi(dir);
        const Eigen::VectorXd wx = trapezoid_weights(x_grid);
        OpImage out;
        out.field.resize(field_dim());
        const int nu = kind == IvKind::IND ? u_grid.n : 1;
        for (int iu = 0; iu < nu; ++iu) {
            for (int iz = 0; iz < z_grid.n; ++iz) {
                double s = 0.0;
                for (int ix = 0; ix < x_grid.n; ++ix)
                    s += derivative_kernel(phi, iu, ix, iz) * wx[ix] * dir.values[ix];
                out.field[static_cast<long>(iu) * z_grid.n + iz] = s;
            }
        }
        if (kind == IvKind::IND) {
            double mean = 0.0;
            for (int ix = 0; ix < x_grid.n; ++ix)
                mean += wx[ix] * dir.values[ix] * f_x.values[ix];
            out.scalar = mean;
        }
        return out;
    }

    /// Dense derivative matrix M with derivative_apply(phi, dir) = M dir;
    /// x-quadrature weights are baked in. IND stacks the scalar row last.
    Eigen::MatrixXd assemble_derivative_matrix(const GridFn& phi) const {
        check_phi(phi);
        const Eigen::VectorXd wx = trapezoid_weights(x_grid);
        Eigen::MatrixXd M(stacked_dim(), x_grid.n);
        const int nu = kind == IvKind::IND ? u_grid.n : 1;
        for (int iu = 0; iu < nu; ++iu)
            for (int iz = 0; iz < z_grid.n; ++iz) {
                const long r = static_cast<long>(iu) * z_grid.n + iz;
                for (int ix = 0; ix < x_grid.n; ++ix)
                    M(r, ix) = derivative_kernel(phi, iu, ix, iz) * wx[ix];
            }
        if (kind == IvKind::IND)
            for (int ix = 0; ix < x_grid.n; ++ix)
                M(stacked_dim() - 1, ix) = wx[ix] * f_x.values[ix];
        return M;
    }

    /// Adjoint of the derivative w.r.t. the L2 inner product on the x-grid
    /// and the ImageNorm on the image: T* η = W_x^{-1} M^T (W_Y ∘ η).
    GridFn derivative_adjoint_apply(const GridFn& phi, const OpImage& eta) const {
        if (eta.field.size() != field_dim() ||
            (kind == IvKind::IND) != eta.scalar.has_value())
            throw std::invalid_argument("derivative_adjoint_apply: image shape mismatch");
        const Eigen::MatrixXd M = assemble_derivative_matrix(phi);
        const Eigen::VectorXd wy = image_norm().stacked_weights();
        const Eigen::VectorXd wx = trapezoid_weights(x_grid);
        const Eigen::VectorXd v = M.transpose() * (wy.array() * eta.stacked().array()).matrix();
        return GridFn(x_grid, (v.array() / wx.array()).matrix());
    }

    // Vector-based surface consumed by the IRGNM driver.
    Eigen::VectorXd apply_vec(const Eigen::VectorXd& phi) const {
        return apply(GridFn(x_grid, phi)).stacked();
    }
    Eigen::MatrixXd derivative_matrix(const Eigen::VectorXd& phi) const {
        return assemble_derivative_matrix(GridFn(x_grid, phi));
    }
    Eigen::VectorXd image_weights_stacked() const { return image_norm().stacked_weights(); }
};

inline IvProblem make_ce_problem(Field2 f_xz, GridFn f_z, GridFn psi, double eps_floor = 1e-3) {
    IvProblem p;
    p.kind = IvKind::CE;
    p.x_grid = f_xz.g0;
    p.z_grid = f_xz.g1;
    p.eps_floor = eps_floor;
    p.f_xz = std::move(f_xz);
    p.f_z = std::move(f_z);
    p.psi = std::move(psi);
    return p;
}

inline IvProblem make_ind_problem(Field3 f_yxz, Field3 df_dy, Field2 f_yx, Field2 df_dy_yx,
                                  GridFn f_z, GridFn f_x, double mean_y, Grid1D u_grid,
                                  double w_mean = 1.0) {
    IvProblem p;
    p.kind = IvKind::IND;
    p.x_grid = f_yxz.grid.gx;
    p.z_grid = f_yxz.grid.gz;
    p.u_grid = u_grid;
    p.w_mean = w_mean;
    p.f_yxz = std::move(f_yxz);
    p.df_dy = std::move(df_dy);
    p.f_yx = std::move(f_yx);
    p.df_dy_yx = std::move(df_dy_yx);
    p.f_z = std::move(f_z);
    p.f_x = std::move(f_x);
    p.mean_y = mean_y;
    return p;
}

inline IvProblem make_quant_problem(Field3 F_yxz, Field3 f_yxz, GridFn f_z, double q) {
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("make_quant_problem: q must be in (0,1)");
    IvProblem p;
    p.kind = IvKind::QUANT;
    p.x_grid = F_yxz.grid.gx;
    p.z_grid = F_yxz.grid.gz;
    p.q = q;
    p.F_yxz = std::move(F_yxz);
    p.f_yxz = std::move(f_yxz);
    p.f_z = std::move(f_z);
    return p;
}

/// Default IND u-grid: the y-range shifted by the anticipated range of φ,
/// at y-grid resolution.
inline Grid1D default_u_grid(const Grid1D& gy, double phi_min, double phi_max) {
    return Grid1D(gy.a - phi_max, gy.b - phi_min, gy.n);
}

}  // namespace nliv
