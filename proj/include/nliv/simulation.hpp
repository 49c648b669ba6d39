#pragma once

#include "nliv/grid.hpp"
#include "nliv/irgnm.hpp"
#include "nliv/kde.hpp"
#include "nliv/operators.hpp"
#include "nliv/stopping.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nliv {

inline double gaussian_pdf(double x, double mean, double sd) {
    const double t = (x - mean) / sd;
    return std::exp(-0.5 * t * t) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

inline double gaussian_cdf(double x, double mean, double sd) {
    return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

/// The simulation scenario: Z ~ f_Z, X = g(Z) + V, Y = φ†(X) + U with
/// U | V ~ Normal(2V, σ_U²), so X is endogenous and Z a valid instrument.
struct ScenarioSec5 {
    double sigma_v = 0.08;
    double sigma_u = 0.07;
    double mean_shift_slope = 2.0;

    static double phi_true(double x) { return std::sin(2.0 * std::numbers::pi * (x + 0.25)) / 6.0; }
    static double f_z_density(double z) { return (9.0 / 7.0) * std::sqrt(z) + 1.0 / 7.0; }
    static double f_z_cdf(double z) { return (6.0 / 7.0) * std::pow(z, 1.5) + z / 7.0; }
    static double g_fn(double z) { return 0.8 * z + 0.1; }

    Grid3 make_grid(int n_per_axis) const {
        return Grid3{Grid1D(-0.5, 0.5, n_per_axis), Grid1D(0.0, 1.0, n_per_axis),
                     Grid1D(0.0, 1.0, n_per_axis)};
    }

    // f_YXZ(y,x,z) = f_Z(z) N(x − g(z); 0, σ_V²) N(y − φ†(x); 2(x − g(z)), σ_U²)
    double density(double y, double x, double z) const {
        const double v = x - g_fn(z);
        return f_z_density(z) * gaussian_pdf(v, 0.0, sigma_v) *
               gaussian_pdf(y - phi_true(x), mean_shift_slope * v, sigma_u);
    }
    double density_dy(double y, double x, double z) const {
        const double v = x - g_fn(z);
        const double m = phi_true(x) + mean_shift_slope * v;
        return -density(y, x, z) * (y - m) / (sigma_u * sigma_u);
    }
    double density_cdf_y(double y, double x, double z) const {
        const double v = x - g_fn(z);
        return f_z_density(z) * gaussian_pdf(v, 0.0, sigma_v) *
               gaussian_cdf(y - phi_true(x), mean_shift_slope * v, sigma_u);
    }
};

/// Inverse-CDF draw of Z by monotone bisection of F_Z to 1e-12.
inline double sample_z_inverse_cdf(const ScenarioSec5&, double uniform01) {
    double lo = 0.0, hi = 1.0;
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        (ScenarioSec5::f_z_cdf(mid) < uniform01 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline Sample generate_sample(const ScenarioSec5& scn, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate_sample: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> stdnorm(0.0, 1.0);
    Sample s;
    s.records.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double z = sample_z_inverse_cdf(scn, unif(rng));
        const double v = scn.sigma_v * stdnorm(rng);
        const double x = ScenarioSec5::g_fn(z) + v;
        const double u = scn.mean_shift_slope * v + scn.sigma_u * stdnorm(rng);
        const double y = ScenarioSec5::phi_true(x) + u;
        s.records.push_back({y, x, z});
    }
    return s;
}

/// Everything the three operators consume, from either the exact closed
/// forms or a kernel density estimate.
struct ProblemFields {
    Grid3 grid;
    Field3 f_yxz;
    Field3 df_dy;
    Field3 F_yxz;
    Field2 f_yx;       // (y, x)
    Field2 df_dy_yx;   // (y, x)
    Field2 f_xz;       // (x, z)
    GridFn f_z, f_x, f_y;
    double mean_y = 0.0;
    GridFn psi;        // E[Y | Z = z]
};

namespace detail {

// Marginalize a Field3 over z by trapezoid -> Field2 on (y, x).
inline Field2 marginal_yx(const Field3& f) {
    const Grid3& g = f.grid;
    const Eigen::VectorXd wz = trapezoid_weights(g.gz);
    Field2 out = Field2::zero(g.gy, g.gx);
    for (int iy = 0; iy < g.gy.n; ++iy)
        for (int ix = 0; ix < g.gx.n; ++ix)
            out.at(iy, ix) = wz.dot(f.values.segment(f.index(iy, ix, 0), g.gz.n));
    return out;
}

}  // namespace detail

inline ProblemFields exact_density_fields(const ScenarioSec5& scn, const Grid3& grid) {
    ProblemFields out;
    out.grid = grid;
    out.f_yxz = Field3::zero(grid);
    out.df_dy = Field3::zero(grid);
    out.F_yxz = Field3::zero(grid);
    for (int iy = 0; iy < grid.gy.n; ++iy)
        for (int ix = 0; ix < grid.gx.n; ++ix)
            for (int iz = 0; iz < grid.gz.n; ++iz) {
                const double y = grid.gy.node(iy), x = grid.gx.node(ix), z = grid.gz.node(iz);
                out.f_yxz.at(iy, ix, iz) = scn.density(y, x, z);
                out.df_dy.at(iy, ix, iz) = scn.density_dy(y, x, z);
                out.F_yxz.at(iy, ix, iz) = scn.density_cdf_y(y, x, z);
            }
    out.f_yx = detail::marginal_yx(out.f_yxz);
    out.df_dy_yx = detail::marginal_yx(out.df_dy);

    // f_XZ has the closed form f_Z(z) N(x − g(z); 0, σ_V²).
    out.f_xz = Field2::zero(grid.gx, grid.gz);
    for (int ix = 0; ix < grid.gx.n; ++ix)
        for (int iz = 0; iz < grid.gz.n; ++iz) {
            const double z = grid.gz.node(iz);
            out.f_xz.at(ix, iz) = ScenarioSec5::f_z_density(z) *
                                  gaussian_pdf(grid.gx.node(ix) - ScenarioSec5::g_fn(z), 0.0, scn.sigma_v);
        }
    out.f_z = GridFn::sample(grid.gz, [](double z) { return ScenarioSec5::f_z_density(z); });

    const Eigen::VectorXd wy = trapezoid_weights(grid.gy);
    const Eigen::VectorXd wx = trapezoid_weights(grid.gx);
    const Eigen::VectorXd wz = trapezoid_weights(grid.gz);
    out.f_x = GridFn::constant(grid.gx, 0.0);
    for (int ix = 0; ix < grid.gx.n; ++ix)
        for (int iz = 0; iz < grid.gz.n; ++iz)
            out.f_x.values[ix] += wz[iz] * out.f_xz.at(ix, iz);
    out.f_y = GridFn::constant(grid.gy, 0.0);
    for (int iy = 0; iy < grid.gy.n; ++iy)
        for (int ix = 0; ix < grid.gx.n; ++ix)
            out.f_y.values[iy] += wx[ix] * out.f_yx.at(iy, ix);
    // E[Y] = E[φ†(X)]; the x-marginal is far less truncated than the
    // y-marginal, so integrate the structural function instead of y f_Y
    out.mean_y = 0.0;
    for (int ix = 0; ix < grid.gx.n; ++ix)
        out.mean_y += wx[ix] * ScenarioSec5::phi_true(grid.gx.node(ix)) * out.f_x.values[ix];

    // ψ(z) = E[Y | Z = z] = ∫∫ y f_YXZ dy dx / f_Z(z)
    out.psi = GridFn::constant(grid.gz, 0.0);
    for (int iz = 0; iz < grid.gz.n; ++iz) {
        double num = 0.0;
        for (int iy = 0; iy < grid.gy.n; ++iy) {
            double inner = 0.0;
            for (int ix = 0; ix < grid.gx.n; ++ix)
                inner += wx[ix] * out.f_yxz.at(iy, ix, iz);
            num += wy[iy] * grid.gy.node(iy) * inner;
        }
        out.psi.values[iz] = num / std::max(out.f_z.values[iz], 1e-12);
    }
    return out;
}

inline ProblemFields kde_density_fields(const DensityModel& model, const Grid3& grid) {
    ProblemFields out;
    out.grid = grid;
    out.f_yxz = density_3d(model, grid);
    out.df_dy = density_dy(model, grid);
    out.F_yxz = smoothed_cdf_y(model, grid);
    const Marginals m = marginals(model, grid.gy, grid.gx, grid.gz);
    out.f_yx = m.f_yx;
    out.f_xz = m.f_xz;
    out.f_z = m.f_z;
    out.f_x = m.f_x;
    out.f_y = m.f_y;
    out.df_dy_yx = detail::marginal_yx(out.df_dy);
    // the sample mean of Y is unbiased where the truncated grid marginal
    // ∫ y f̂_Y dy is not
    out.mean_y = model.sample.ys().mean();
    out.psi = nadaraya_watson_y_given_z(model, grid.gz);
    return out;
}

inline IvProblem make_ind_problem(const ProblemFields& f, const Grid1D& u_grid, double w_mean = 1.0) {
    return make_ind_problem(f.f_yxz, f.df_dy, f.f_yx, f.df_dy_yx, f.f_z, f.f_x, f.mean_y, u_grid,
                            w_mean);
}
inline IvProblem make_ce_problem(const ProblemFields& f, double eps_floor = 1e-3) {
    return make_ce_problem(f.f_xz, f.f_z, f.psi, eps_floor);
}
inline IvProblem make_quant_problem(const ProblemFields& f, double q) {
    return make_quant_problem(f.F_yxz, f.f_yxz, f.f_z, q);
}

/// Iterated Tikhonov solutions of a CE problem over an α grid, all started
/// from φ_0; the linear benchmark path.
inline std::vector<Eigen::VectorXd> baseline_linear_reconstruct(const IvProblem& problem,
                                                                const std::vector<double>& alpha_grid,
                                                                const Eigen::VectorXd& phi0, int m,
                                                                const Eigen::MatrixXd& gram) {
    if (problem.kind != IvKind::CE)
        throw std::invalid_argument("baseline_linear_reconstruct: CE problem required");
    LinearizedSystem sys;
    sys.T = problem.derivative_matrix(phi0);
    sys.image_weights = problem.image_weights_stacked();
    sys.rhs = problem.apply_vec(phi0);
    sys.start = Eigen::VectorXd::Zero(phi0.size());
    sys.gram = gram;
    std::vector<Eigen::VectorXd> out;
    out.reserve(alpha_grid.size());
    for (double alpha : alpha_grid)
        out.push_back(phi0 + iterated_tikhonov(sys, FilterParams(alpha, m)));
    return out;
}

struct McConfig {
    int n = 500;
    int reps = 100;
    std::uint64_t base_seed = 1;
    int grid_n = 100;
    KernelSpec kernel;
    double bandwidth_c = 1.0;  // multiplier of the Scott-type rule
    double alpha0 = 1.0;
    double q_alpha = 0.9;
    int m = 2;
    double R = 1.0;
    int max_steps = 45;
    PenaltyKind penalty = PenaltyKind::H1;
    double w_mean = 1.0;
    // Calibration of the plug-in noise levels. The theoretical bounds carry
    // unspecified constants; this value is tuned so the Lepskii selection
    // tracks the error-optimal stopping index in this scenario.
    double c_cal = 0.003;
    // The linear benchmark keeps improving at much smaller α than the
    // Newton iteration visits, so its α grid extends further.
    int ce_alpha_steps = 70;
    double mu = 1.0;
    TheoryConstants theory;
    int threads = 0;  // 0 = hardware concurrency
    double u_pad = 0.25;  // anticipated |φ − φ_0| range for the u-grid

    void validate() const {
        if (reps < 1) throw std::invalid_argument("McConfig: reps must be >= 1");
        if (n < 10) throw std::invalid_argument("McConfig: n must be >= 10");
        if (!(q_alpha > 0.0 && q_alpha < 1.0))
            throw std::invalid_argument("McConfig: q_alpha must be in (0,1)");
        if (grid_n < 8) throw std::invalid_argument("McConfig: grid_n must be >= 8");
    }
};

struct ReplicationResult {
    int rep = 0;
    int n = 0;
    double err_ind = 0.0;
    double err_ce = 0.0;
    double err_ind_interior = 0.0;
    double err_ce_interior = 0.0;
    int j_selected_ind = 0;
    double alpha_selected_ce = 0.0;
    bool emergency = false;
    bool valid = true;
    std::string error_message;
};

/// L2 norm restricted to grid nodes with lo <= x <= hi (trapezoid weights
/// of the covered subinterval).
inline double norm_l2_range(const GridFn& f, double lo, double hi) {
    const Grid1D& g = f.grid;
    int i0 = 0, i1 = g.n - 1;
    while (i0 < g.n && g.node(i0) < lo - 1e-12) ++i0;
    while (i1 >= 0 && g.node(i1) > hi + 1e-12) --i1;
    if (i1 - i0 < 1) return 0.0;
    const double h = g.spacing();
    double s = 0.0;
    for (int i = i0; i <= i1; ++i) {
        const double w = (i == i0 || i == i1) ? 0.5 * h : h;
        s += w * f.values[i] * f.values[i];
    }
    return std::sqrt(s);
}

namespace detail {

inline Eigen::MatrixXd penalty_gram(PenaltyKind kind, const Grid1D& gx) {
    if (kind == PenaltyKind::H1) return h1_gram(gx);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(gx.n, gx.n);
    G.diagonal() = trapezoid_weights(gx);
    return G;
}

inline std::vector<double> alpha_schedule(double alpha0, double q, int count) {
    std::vector<double> a(count);
    for (int j = 0; j < count; ++j) a[j] = alpha0 * std::pow(q, j);
    return a;
}

struct ErrPair {
    double full, interior;
};

inline ErrPair normalized_error(const Eigen::VectorXd& phi, const Eigen::VectorXd& phi0,
                                const Grid1D& gx) {
    GridFn diff(gx, phi);
    GridFn init(gx, phi0);
    for (int i = 0; i < gx.n; ++i) {
        const double t = ScenarioSec5::phi_true(gx.node(i));
        diff.values[i] -= t;
        init.values[i] -= t;
    }
    const double denom = norm_l2(init);
    return {norm_l2(diff) / denom, norm_l2_range(diff, 0.05, 0.95) / norm_l2_range(init, 0.05, 0.95)};
}

}  // namespace detail

inline ReplicationResult run_replication(const ScenarioSec5& scn, const McConfig& cfg, int rep) {
    ReplicationResult res;
    res.rep = rep;
    res.n = cfg.n;
    try {
        const Sample sample = generate_sample(scn, cfg.n, cfg.base_seed + rep);
        const double h = default_bandwidth(sample, cfg.bandwidth_c);
        const DensityModel model(sample, cfg.kernel, h);
        const Grid3 grid = scn.make_grid(cfg.grid_n);
        const ProblemFields fields = kde_density_fields(model, grid);

        const double ybar = sample.ys().mean();
        const Eigen::VectorXd phi0 = Eigen::VectorXd::Constant(grid.gx.n, ybar);
        const Eigen::MatrixXd gram = detail::penalty_gram(cfg.penalty, grid.gx);

        // noise levels and stopping machinery shared by both methods
        const int n_alpha = std::max(cfg.max_steps, cfg.ce_alpha_steps) + 1;
        const std::vector<double> alphas =
            detail::alpha_schedule(cfg.alpha0, cfg.q_alpha, n_alpha);
        const DataNoise dn = estimate_noise_levels(cfg.n, h, cfg.kernel, cfg.mu, cfg.c_cal);
        NoiseLevels nl;
        nl.delta_noi = dn.delta_noi;
        nl.delta_der = dn.delta_der;
        TheoryConstants tc = cfg.theory;
        tc.C_g = cfg.m;
        tc.mu = cfg.mu;
        const double c_stop = cfg.R / (4.0 * std::sqrt(cfg.alpha0));
        const PhiBound phi_bound = default_phi(nl, alphas, tc, false);
        const int j_max = compute_jmax(phi_bound, alphas, c_stop);

        // (a) IRGNM on the IND problem, Lepskii stopping
        const Grid1D u_grid = default_u_grid(grid.gy, ybar - cfg.u_pad, ybar + cfg.u_pad);
        const IvProblem ind = make_ind_problem(fields, u_grid, cfg.w_mean);
        IrgnmConfig icfg;
        icfg.alpha0 = cfg.alpha0;
        icfg.q_alpha = cfg.q_alpha;
        icfg.m = cfg.m;
        icfg.R = cfg.R;
        icfg.phi0 = phi0;
        icfg.max_steps = cfg.max_steps;
        icfg.gram = gram;
        const IrgnmRun ind_run = run(ind, icfg);
        const LepskiiSelection sel =
            lepskii_select(ind_run, phi_bound, tc.gamma_nl, std::min(j_max, ind_run.last_index()), gram);
        res.j_selected_ind = sel.index;
        res.emergency = ind_run.emergency_stopped;
        const auto e_ind = detail::normalized_error(ind_run.iterates[sel.index], phi0, grid.gx);
        res.err_ind = e_ind.full;
        res.err_ind_interior = e_ind.interior;

        // (b) CE benchmark: iterated Tikhonov on the α grid, Lepskii over α
        const IvProblem ce = make_ce_problem(fields);
        const std::vector<double> ce_alphas(alphas.begin(),
                                            alphas.begin() + cfg.ce_alpha_steps + 1);
        const std::vector<Eigen::VectorXd> path =
            baseline_linear_reconstruct(ce, ce_alphas, phi0, cfg.m, gram);
        const LepskiiSelection sel_ce =
            lepskii_select(path, phi_bound, tc.gamma_nl,
                           std::min(j_max, static_cast<int>(path.size()) - 1), gram);
        res.alpha_selected_ce = alphas[sel_ce.index];
        const auto e_ce = detail::normalized_error(path[sel_ce.index], phi0, grid.gx);
        res.err_ce = e_ce.full;
        res.err_ce_interior = e_ce.interior;
    } catch (const std::exception& e) {
        res.valid = false;
        res.error_message = e.what();
    }
    return res;
}

struct SummaryRow {
    int n = 0;
    std::string method;
    double mean = 0, q25 = 0, q50 = 0, q75 = 0, q90 = 0;
};

struct SummaryTable {
    std::vector<SummaryRow> rows;
};

/// Type-7 interpolated quantile of an unsorted sample.
inline double quantile_type7(std::vector<double> v, double q) {
    if (v.empty()) throw std::invalid_argument("quantile_type7: empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q * (static_cast<double>(v.size()) - 1.0);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= v.size()) return v.back();
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

inline SummaryRow summarize(int n, const std::string& method, const std::vector<double>& errs) {
    SummaryRow r;
    r.n = n;
    r.method = method;
    r.mean = std::accumulate(errs.begin(), errs.end(), 0.0) / errs.size();
    r.q25 = quantile_type7(errs, 0.25);
    r.q50 = quantile_type7(errs, 0.50);
    r.q75 = quantile_type7(errs, 0.75);
    r.q90 = quantile_type7(errs, 0.90);
    return r;
}

struct McOutput {
    std::vector<ReplicationResult> replications;
    SummaryTable summary;
};

/// reps independent replications with seeds base_seed + rep, run on a
/// thread pool; aborts if more than 10% of replications fail.
inline McOutput run_monte_carlo(const ScenarioSec5& scn, const McConfig& cfg) {
    cfg.validate();
    McOutput out;
    out.replications.resize(cfg.reps);
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    const int nthreads = std::max(1, std::min(cfg.threads > 0 ? cfg.threads : hw, cfg.reps));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int r = next.fetch_add(1); r < cfg.reps; r = next.fetch_add(1))
            out.replications[r] = run_replication(scn, cfg, r);
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::vector<double> errs_ind, errs_ce;
    int invalid = 0;
    for (const auto& r : out.replications) {
        if (!r.valid) {
            ++invalid;
            continue;
        }
        errs_ind.push_back(r.err_ind);
        errs_ce.push_back(r.err_ce);
    }
    if (invalid * 10 > cfg.reps)
        throw std::runtime_error("run_monte_carlo: more than 10% of replications failed");
    out.summary.rows.push_back(summarize(cfg.n, "ind", errs_ind));
    out.summary.rows.push_back(summarize(cfg.n, "ce", errs_ce));
    return out;
}

}  // namespace nliv
