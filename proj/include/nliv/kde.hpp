#pragma once

#include "nliv/grid.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace nliv {

struct Observation {
    double y, x, z;
};

struct Sample {
    std::vector<Observation> records;

    int n() const { return static_cast<int>(records.size()); }

    Eigen::VectorXd ys() const {
        Eigen::VectorXd v(n());
        for (int i = 0; i < n(); ++i) v[i] = records[i].y;
        return v;
    }
};

enum class KernelFamily { gaussian, epanechnikov };

/// Second-order symmetric kernels integrating to one.
struct KernelSpec {
    KernelFamily family = KernelFamily::gaussian;
    int order = 2;
};

inline double eval_kernel(const KernelSpec& spec, double u) {
    switch (spec.family) {
        case KernelFamily::gaussian:
            return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
        case KernelFamily::epanechnikov:
            return std::abs(u) >= 1.0 ? 0.0 : 0.75 * (1.0 - u * u);
    }
    return 0.0;
}

/// K'(u); defined for the gaussian family only.
inline double eval_kernel_deriv(const KernelSpec& spec, double u) {
    if (spec.family != KernelFamily::gaussian)
        throw std::invalid_argument("eval_kernel_deriv: kernel family not differentiable");
    return -u * std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
}

/// Integrated kernel: K̄(u) = ∫_{-∞}^{u} K.
inline double eval_kernel_cdf(const KernelSpec& spec, double u) {
    switch (spec.family) {
        case KernelFamily::gaussian:
            return 0.5 * std::erfc(-u / std::numbers::sqrt2);
        case KernelFamily::epanechnikov:
            if (u <= -1.0) return 0.0;
            if (u >= 1.0) return 1.0;
            return 0.25 * (2.0 + 3.0 * u - u * u * u);
    }
    return 0.0;
}

/// ∫ K(u)^2 du; enters the McDiarmid variance bounds.
inline double kernel_l2_sq(const KernelSpec& spec) {
    switch (spec.family) {
        case KernelFamily::gaussian:
            return 1.0 / (2.0 * std::sqrt(std::numbers::pi));
        case KernelFamily::epanechnikov:
            return 0.6;
    }
    return 0.0;
}

/// Product-kernel density model with a common bandwidth h.
struct DensityModel {
    Sample sample;
    KernelSpec kernel;
    double h = 0.1;

    DensityModel() = default;
    DensityModel(Sample s, KernelSpec k, double h_) : sample(std::move(s)), kernel(k), h(h_) {
        if (sample.n() < 1) throw std::invalid_argument("DensityModel: empty sample");
        if (!(h > 0.0)) throw std::invalid_argument("DensityModel: bandwidth must be positive");
    }
};

/// Scott-type rule for the 3D product kernel: h = c * sigma_pooled * n^(-1/6),
/// with sigma_pooled the mean of the per-coordinate standard deviations.
inline double default_bandwidth(const Sample& s, double c = 1.0) {
    const int n = s.n();
    if (n < 2) throw std::invalid_argument("default_bandwidth: need n >= 2");
    double my = 0, mx = 0, mz = 0;
    for (const auto& r : s.records) {
        my += r.y;
        mx += r.x;
        mz += r.z;
    }
    my /= n;
    mx /= n;
    mz /= n;
    double vy = 0, vx = 0, vz = 0;
    for (const auto& r : s.records) {
        vy += (r.y - my) * (r.y - my);
        vx += (r.x - mx) * (r.x - mx);
        vz += (r.z - mz) * (r.z - mz);
    }
    const double sigma = (std::sqrt(vy / (n - 1)) + std::sqrt(vx / (n - 1)) + std::sqrt(vz / (n - 1))) / 3.0;
    return c * sigma * std::pow(n, -1.0 / 6.0);
}

namespace detail {

enum class YFactor { density, derivative, cdf };

inline Eigen::VectorXd y_factor(const DensityModel& m, const Grid1D& gy, double yi, YFactor kind) {
    Eigen::VectorXd v(gy.n);
    const double h = m.h;
    for (int i = 0; i < gy.n; ++i) {
        const double u = (gy.node(i) - yi) / h;
        switch (kind) {
            case YFactor::density: v[i] = eval_kernel(m.kernel, u) / h; break;
            case YFactor::derivative: v[i] = eval_kernel_deriv(m.kernel, u) / (h * h); break;
            case YFactor::cdf: v[i] = eval_kernel_cdf(m.kernel, u); break;
        }
    }
    return v;
}

inline Eigen::VectorXd scaled_factor(const DensityModel& m, const Grid1D& g, double c) {
    Eigen::VectorXd v(g.n);
    for (int i = 0; i < g.n; ++i) v[i] = eval_kernel(m.kernel, (g.node(i) - c) / m.h) / m.h;
    return v;
}

inline Field3 accumulate_field3(const DensityModel& m, const Grid3& grid, YFactor ykind) {
    Field3 out = Field3::zero(grid);
    const int ny = grid.gy.n, nx = grid.gx.n, nz = grid.gz.n;
    const double inv_n = 1.0 / m.sample.n();
    for (const auto& r : m.sample.records) {
        const Eigen::VectorXd ky = y_factor(m, grid.gy, r.y, ykind);
        const Eigen::VectorXd kx = scaled_factor(m, grid.gx, r.x);
        const Eigen::VectorXd kz = scaled_factor(m, grid.gz, r.z);
        for (int iy = 0; iy < ny; ++iy) {
            const double cy = ky[iy] * inv_n;
            if (cy == 0.0) continue;
            for (int ix = 0; ix < nx; ++ix) {
                const double cxy = cy * kx[ix];
                if (cxy == 0.0) continue;
                out.values.segment(out.index(iy, ix, 0), nz) += cxy * kz;
            }
        }
    }
    return out;
}

}  // namespace detail

/// f̂_YXZ on the tensor grid: n^{-1} Σ_i K_h(y−y_i) K_h(x−x_i) K_h(z−z_i).
inline Field3 density_3d(const DensityModel& m, const Grid3& grid) {
    return detail::accumulate_field3(m, grid, detail::YFactor::density);
}

/// ∂f̂/∂y; gaussian family only.
inline Field3 density_dy(const DensityModel& m, const Grid3& grid) {
    if (m.kernel.family != KernelFamily::gaussian)
        throw std::invalid_argument("density_dy: requires a differentiable kernel family");
    return detail::accumulate_field3(m, grid, detail::YFactor::derivative);
}

/// F̂_YXZ(y,x,z) = n^{-1} Σ_i K̄_h(y−y_i) K_h(x−x_i) K_h(z−z_i).
inline Field3 smoothed_cdf_y(const DensityModel& m, const Grid3& grid) {
    return detail::accumulate_field3(m, grid, detail::YFactor::cdf);
}

struct Marginals {
    Field2 f_yx;   // (y, x)
    Field2 f_xz;   // (x, z)
    GridFn f_z;
    GridFn f_x;
    GridFn f_y;
};

inline Marginals marginals(const DensityModel& m, const Grid1D& gy, const Grid1D& gx, const Grid1D& gz) {
    Marginals out;
    out.f_yx = Field2::zero(gy, gx);
    out.f_xz = Field2::zero(gx, gz);
    out.f_z = GridFn::constant(gz, 0.0);
    out.f_x = GridFn::constant(gx, 0.0);
    out.f_y = GridFn::constant(gy, 0.0);
    const double inv_n = 1.0 / m.sample.n();
    for (const auto& r : m.sample.records) {
        const Eigen::VectorXd ky = detail::scaled_factor(m, gy, r.y);
        const Eigen::VectorXd kx = detail::scaled_factor(m, gx, r.x);
        const Eigen::VectorXd kz = detail::scaled_factor(m, gz, r.z);
        out.f_y.values += inv_n * ky;
        out.f_x.values += inv_n * kx;
        out.f_z.values += inv_n * kz;
        for (int iy = 0; iy < gy.n; ++iy)
            out.f_yx.values.segment(out.f_yx.index(iy, 0), gx.n) += (inv_n * ky[iy]) * kx;
        for (int ix = 0; ix < gx.n; ++ix)
            out.f_xz.values.segment(out.f_xz.index(ix, 0), gz.n) += (inv_n * kx[ix]) * kz;
    }
    return out;
}

/// Nadaraya-Watson estimate of E[Y | Z = z] on the z-grid.
inline GridFn nadaraya_watson_y_given_z(const DensityModel& m, const Grid1D& gz) {
    Eigen::VectorXd num = Eigen::VectorXd::Zero(gz.n);
    Eigen::VectorXd den = Eigen::VectorXd::Zero(gz.n);
    for (const auto& r : m.sample.records) {
        const Eigen::VectorXd kz = detail::scaled_factor(m, gz, r.z);
        num += r.y * kz;
        den += kz;
    }
    Eigen::VectorXd v(gz.n);
    for (int i = 0; i < gz.n; ++i) v[i] = den[i] > 1e-300 ? num[i] / den[i] : 0.0;
    return GridFn(gz, std::move(v));
}

}  // namespace nliv
