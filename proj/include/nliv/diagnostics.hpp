#pragma once

#include "nliv/irgnm.hpp"
#include "nliv/simulation.hpp"
#include "nliv/stopping.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <thread>
#include <stdexcept>
#include <string>
#include <vector>

namespace nliv {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
};

inline LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
    const auto n = xs.size();
    if (n != ys.size() || n < 2) throw std::invalid_argument("fit_line: need >= 2 matched points");
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += xs[i];
        sy += ys[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx <= 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (n > 2) {
        double rss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = ys[i] - f.intercept - f.slope * xs[i];
            rss += r * r;
        }
        f.slope_stderr = std::sqrt(rss / (static_cast<double>(n) - 2.0) / sxx);
    }
    return f;
}

/// Diagonal testbed F(φ) = D̂(φ − φ†) + (β/2)‖φ − φ†‖² e₁ + ε with exactly
/// known derivative T(φ) = D̂ + β e₁ (φ − φ†)ᵀ and Lipschitz constant β.
struct SyntheticProblem {
    Eigen::VectorXd sigma;        // strictly decreasing positive singular values
    Eigen::VectorXd phi_truth;
    Eigen::VectorXd omega;        // source element, ‖ω‖ = ρ
    double mu = 1.0;
    double beta = 0.0;
    Eigen::VectorXd eps;          // data noise, ‖ε‖ = δ_noi
    Eigen::MatrixXd deriv_error;  // Ê − D, operator norm = δ_der

    long dim() const { return sigma.size(); }
    Eigen::MatrixXd true_derivative() const {
        return Eigen::MatrixXd(sigma.asDiagonal());
    }
    Eigen::MatrixXd noisy_diag() const { return true_derivative() + deriv_error; }

    // e_0 = φ_0 − φ† = (D*D)^μ ω under the source condition
    Eigen::VectorXd e0() const {
        return (sigma.array().pow(2.0 * mu) * omega.array()).matrix();
    }
    Eigen::VectorXd phi0() const { return phi_truth + e0(); }

    Eigen::VectorXd apply_vec(const Eigen::VectorXd& phi) const {
        const Eigen::VectorXd x = phi - phi_truth;
        Eigen::VectorXd out = noisy_diag() * x + eps;
        out[0] += 0.5 * beta * x.squaredNorm();
        return out;
    }
    Eigen::MatrixXd derivative_matrix(const Eigen::VectorXd& phi) const {
        Eigen::MatrixXd T = noisy_diag();
        T.row(0) += beta * (phi - phi_truth).transpose();
        return T;
    }
    Eigen::VectorXd image_weights_stacked() const { return Eigen::VectorXd::Ones(dim()); }

    void validate() const {
        for (long t = 0; t + 1 < dim(); ++t)
            if (!(sigma[t] > sigma[t + 1]) || !(sigma[t + 1] > 0.0))
                throw std::invalid_argument(
                    "SyntheticProblem: singular values must be strictly decreasing positive");
    }
};

enum class SingularDecay { polynomial, exponential };

struct SyntheticSpec {
    int dim = 60;
    SingularDecay decay = SingularDecay::polynomial;
    double decay_rate = 1.0;  // s in t^{-s} or c in e^{-ct}
    double mu = 1.0;
    double rho = 1.0;
    double beta = 0.0;
    double delta_noi = 0.0;
    double delta_der = 0.0;
    std::uint64_t seed = 1;
};

inline SyntheticProblem make_synthetic(const SyntheticSpec& spec) {
    if (spec.dim < 2) throw std::invalid_argument("make_synthetic: dim must be >= 2");
    SyntheticProblem p;
    p.mu = spec.mu;
    p.beta = spec.beta;
    p.sigma.resize(spec.dim);
    for (int t = 0; t < spec.dim; ++t)
        p.sigma[t] = spec.decay == SingularDecay::polynomial
                         ? std::pow(t + 1.0, -spec.decay_rate)
                         : std::exp(-spec.decay_rate * t);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> norm(0.0, 1.0);
    const auto draw = [&](long n) {
        Eigen::VectorXd v(n);
        for (long i = 0; i < n; ++i) v[i] = norm(rng);
        return v;
    };
    p.phi_truth = draw(spec.dim);
    p.omega = draw(spec.dim);
    p.omega *= spec.rho / p.omega.norm();
    p.eps = Eigen::VectorXd::Zero(spec.dim);
    if (spec.delta_noi > 0.0) {
        p.eps = draw(spec.dim);
        p.eps *= spec.delta_noi / p.eps.norm();
    }
    p.deriv_error = Eigen::MatrixXd::Zero(spec.dim, spec.dim);
    if (spec.delta_der > 0.0) {
        Eigen::MatrixXd E(spec.dim, spec.dim);
        for (int i = 0; i < spec.dim; ++i) E.row(i) = draw(spec.dim).transpose();
        const double opnorm = E.jacobiSvd().singularValues()[0];
        p.deriv_error = (spec.delta_der / opnorm) * E;
    }
    p.validate();
    return p;
}

inline IrgnmConfig synthetic_irgnm_config(const SyntheticProblem& p, double alpha0 = 1.0,
                                          double q_alpha = 0.9, int m = 2, int max_steps = 40) {
    IrgnmConfig cfg;
    cfg.alpha0 = alpha0;
    cfg.q_alpha = q_alpha;
    cfg.m = m;
    cfg.max_steps = max_steps;
    cfg.phi0 = p.phi0();
    cfg.gram = Eigen::MatrixXd::Identity(p.dim(), p.dim());
    cfg.R = std::max(1.0, 2.0 * p.e0().norm());
    return cfg;
}

/// φ̂_{j+1} − φ† split into approximation, propagated-noise, derivative-noise
/// and nonlinearity parts.
struct ErrorDecomposition {
    Eigen::VectorXd e_app, e_noi, e_der, e_nl;
    Eigen::VectorXd total() const { return e_app + e_noi + e_der + e_nl; }
};

/// Oracle quantities needed by the decomposition: the exact and estimated
/// derivatives at φ† and the source representation of the initial error.
struct DecompositionOracle {
    Eigen::MatrixXd T_true;      // T_† (exact operator's derivative at φ†)
    Eigen::MatrixXd T_hat_true;  // T̂_† (estimated operator's derivative at φ†)
    Eigen::VectorXd phi_truth;
    double mu = 1.0;
    Eigen::VectorXd image_weights;  // W on the image; empty = identity
    Eigen::MatrixXd gram;           // G on the domain; empty = identity
};

namespace detail {

struct SpectralOps {
    Eigen::MatrixXd V;       // G-orthonormal eigenvectors of G^{-1} TᵀWT
    Eigen::VectorXd lambda;  // eigenvalues, clamped >= 0
    Eigen::MatrixXd gram;

    // f(B) x for B = G^{-1} TᵀWT self-adjoint w.r.t. the G inner product
    template <class F>
    Eigen::VectorXd apply(F&& f, const Eigen::VectorXd& x) const {
        Eigen::VectorXd c = V.transpose() * (gram * x);
        for (long t = 0; t < lambda.size(); ++t) c[t] *= f(lambda[t]);
        return V * c;
    }
    // pseudo-inverse of Λ(B) with a relative eigenvalue floor
    Eigen::VectorXd lambda_power_pinv(double mu, const Eigen::VectorXd& x) const {
        const double floor = 1e-14 * std::max(lambda.maxCoeff(), 1.0);
        return apply([&](double l) { return l > floor ? std::pow(l, -mu) : 0.0; }, x);
    }
};

inline SpectralOps spectral_ops(const Eigen::MatrixXd& T, const Eigen::VectorXd& w,
                                const Eigen::MatrixXd& gram) {
    const Eigen::MatrixXd N = T.transpose() * w.asDiagonal() * T;
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(N, gram);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("spectral_ops: eigendecomposition failed");
    return {es.eigenvectors(), es.eigenvalues().cwiseMax(0.0), gram};
}

}  // namespace detail

/// Decompose φ̂_{j+1} − φ† for one Newton step of a recorded run; m is the
/// filter order the run was produced with.
template <ForwardOperator P>
ErrorDecomposition decompose_error(const P& problem, const DecompositionOracle& oracle,
                                   const IrgnmRun& run, int j, int m) {
    if (j < 0 || j >= static_cast<int>(run.alphas.size()))
        throw std::invalid_argument("decompose_error: step index out of range");
    if (oracle.T_true.size() == 0 || oracle.T_hat_true.size() == 0)
        throw std::invalid_argument("decompose_error: oracle derivatives missing");
    const FilterParams fp(run.alphas[j], m);
    const Eigen::VectorXd& phi_j = run.iterates[j];
    const Eigen::VectorXd& phi_t = oracle.phi_truth;

    const long d = phi_t.size();
    const Eigen::VectorXd w = oracle.image_weights.size()
                                  ? oracle.image_weights
                                  : Eigen::VectorXd::Ones(oracle.T_true.rows());
    const Eigen::MatrixXd G =
        oracle.gram.size() ? oracle.gram : Eigen::MatrixXd::Identity(d, d);

    const auto ops_true = detail::spectral_ops(oracle.T_true, w, G);
    const auto ops_hat_t = detail::spectral_ops(oracle.T_hat_true, w, G);
    const Eigen::MatrixXd T_j = problem.derivative_matrix(phi_j);
    const auto ops_j = detail::spectral_ops(T_j, w, G);

    const auto g = [&](double l) { return filter_g(l, fp); };
    const auto r = [&](double l) { return filter_r(l, fp); };
    const auto pow_mu = [&](double l) { return std::pow(l, oracle.mu); };

    // source representation of the initial error: ω = Λ(T_†*T_†)^{-1} e_0
    const Eigen::VectorXd e0 = run.iterates[0] - phi_t;
    const Eigen::VectorXd omega = ops_true.lambda_power_pinv(oracle.mu, e0);
    const Eigen::VectorXd lam_hat_omega = ops_hat_t.apply(pow_mu, omega);
    const Eigen::VectorXd lam_true_omega = ops_true.apply(pow_mu, omega);

    // T̂_j* η in the (W, G) geometry: G^{-1} T̂_jᵀ W η
    const auto adjoint_j = [&](const Eigen::VectorXd& eta) {
        return Eigen::VectorXd(
            G.ldlt().solve(T_j.transpose() * (w.array() * eta.array()).matrix()));
    };

    ErrorDecomposition dec;
    dec.e_app = ops_hat_t.apply(r, lam_hat_omega);
    dec.e_noi = ops_j.apply(g, adjoint_j(-problem.apply_vec(phi_t)));
    dec.e_der = ops_j.apply(r, lam_true_omega - lam_hat_omega);
    const Eigen::VectorXd lin_defect =
        problem.apply_vec(phi_t) - problem.apply_vec(phi_j) + T_j * (phi_j - phi_t);
    dec.e_nl = ops_j.apply(g, adjoint_j(lin_defect)) +
               (ops_j.apply(r, lam_hat_omega) - ops_hat_t.apply(r, lam_hat_omega));
    return dec;
}

inline DecompositionOracle synthetic_oracle(const SyntheticProblem& p) {
    DecompositionOracle o;
    o.T_true = p.true_derivative();
    o.T_hat_true = p.noisy_diag();  // the quadratic term's derivative vanishes at φ†
    o.phi_truth = p.phi_truth;
    o.mu = p.mu;
    return o;
}

struct SourceFit {
    double mu_hat = 0.0;
    double rho_hat = 0.0;
    int modes_used = 0;
};

/// Fit the spectral source condition by regressing log|⟨e_0, v_t⟩| on
/// log(σ_t²) over singular modes above a relative floor.
inline SourceFit fit_source_condition(const Eigen::MatrixXd& T, const Eigen::VectorXd& e0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(T, Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    if (sv.size() == 0 || !(sv[0] > 0.0))
        throw std::invalid_argument("fit_source_condition: zero operator");
    const double mode_floor = 1e-8 * sv[0];
    const double coef_floor = 1e-12 * e0.norm();
    std::vector<double> xs, ys;
    for (long t = 0; t < sv.size(); ++t) {
        if (sv[t] < mode_floor) break;
        const double coef = std::abs(svd.matrixV().col(t).dot(e0));
        if (coef < coef_floor) continue;
        xs.push_back(std::log(sv[t] * sv[t]));
        ys.push_back(std::log(coef));
    }
    if (xs.size() < 5)
        throw std::runtime_error("fit_source_condition: fewer than 5 usable modes");
    const LineFit f = fit_line(xs, ys);
    return {f.slope, std::exp(f.intercept), static_cast<int>(xs.size())};
}

struct LipschitzProbe {
    double L_hat = 0.0;
    double analytic_bound = 0.0;
};

namespace detail {

// operator norm of T between (X, diag wx) and (Y, diag wy)
inline double weighted_op_norm(const Eigen::MatrixXd& T, const Eigen::VectorXd& wy,
                               const Eigen::VectorXd& wx) {
    const Eigen::MatrixXd S = wy.cwiseSqrt().asDiagonal() * T *
                              wx.cwiseSqrt().cwiseInverse().asDiagonal();
    return S.jacobiSvd().singularValues()[0];
}

}  // namespace detail

/// Empirical Lipschitz constant of φ ↦ T̂(φ): the max over random pairs in
/// the ball of ‖T̂(φ₁) − T̂(φ₂)‖_op / ‖φ₁ − φ₂‖_{L2}, against the analytic
/// bound |supp Z| · sup|∂²_y k̂| (second y-derivative by finite differences).
inline LipschitzProbe lipschitz_probe(const IvProblem& problem, const Eigen::VectorXd& center,
                                      double radius, int n_pairs, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> norm(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const long d = center.size();
    const Eigen::VectorXd wx = trapezoid_weights(problem.x_grid);
    const Eigen::VectorXd wy = problem.image_weights_stacked();
    const auto draw_in_ball = [&] {
        Eigen::VectorXd v(d);
        for (long i = 0; i < d; ++i) v[i] = norm(rng);
        const double wnorm = std::sqrt((wx.array() * v.array().square()).sum());
        return Eigen::VectorXd(center + (radius * unif(rng) / wnorm) * v);
    };
    LipschitzProbe out;
    for (int p = 0; p < n_pairs; ++p) {
        const Eigen::VectorXd a = draw_in_ball(), b = draw_in_ball();
        const Eigen::VectorXd diff = a - b;
        const double dn = std::sqrt((wx.array() * diff.array().square()).sum());
        if (dn < 1e-12) continue;
        const Eigen::MatrixXd dT = problem.derivative_matrix(a) - problem.derivative_matrix(b);
        out.L_hat = std::max(out.L_hat, detail::weighted_op_norm(dT, wy, wx) / dn);
    }
    // sup |∂²_y k̂| by central differences of the stored ∂_y field
    double sup_d2 = 0.0;
    if (problem.kind == IvKind::IND) {
        const Grid3& g = problem.df_dy.grid;
        const double hy = g.gy.spacing();
        for (int iy = 1; iy + 1 < g.gy.n; ++iy)
            for (int ix = 0; ix < g.gx.n; ++ix)
                for (int iz = 0; iz < g.gz.n; ++iz) {
                    const double d2 = (problem.df_dy.at(iy + 1, ix, iz) -
                                       problem.df_dy.at(iy - 1, ix, iz)) /
                                      (2.0 * hy);
                    const double d2c = (problem.df_dy_yx.at(iy + 1, ix) -
                                        problem.df_dy_yx.at(iy - 1, ix)) /
                                           (2.0 * hy) * problem.f_z.values[iz];
                    sup_d2 = std::max(sup_d2, std::abs(d2 - d2c));
                }
    } else if (problem.kind == IvKind::QUANT) {
        const Grid3& g = problem.f_yxz.grid;
        const double hy = g.gy.spacing();
        for (int iy = 1; iy + 1 < g.gy.n; ++iy)
            for (int ix = 0; ix < g.gx.n; ++ix)
                for (int iz = 0; iz < g.gz.n; ++iz)
                    sup_d2 = std::max(
                        sup_d2, std::abs((problem.f_yxz.at(iy + 1, ix, iz) -
                                          problem.f_yxz.at(iy - 1, ix, iz)) /
                                         (2.0 * hy)));
    }
    out.analytic_bound = (problem.z_grid.b - problem.z_grid.a) * sup_d2;
    return out;
}

struct VarianceScalingPoint {
    int n = 0;
    double h = 0.0;
    double variance = 0.0;
};

struct VarianceScaling {
    std::vector<VarianceScalingPoint> points;
    LineFit fit;  // log-variance against log n or log h
};

namespace detail {

inline double residual_stat(const ScenarioSec5& scn, IvKind kind, int n, double h, int grid_n,
                            std::uint64_t seed, const KernelSpec& kernel) {
    const Sample sample = generate_sample(scn, n, seed);
    const DensityModel model(sample, kernel, h);
    const Grid3 grid = scn.make_grid(grid_n);
    GridFn phi_t = GridFn::sample(grid.gx, &ScenarioSec5::phi_true);
    if (kind == IvKind::IND) {
        const ProblemFields f = [&] {
            ProblemFields pf;
            pf.grid = grid;
            pf.f_yxz = density_3d(model, grid);
            const Marginals m = marginals(model, grid.gy, grid.gx, grid.gz);
            pf.f_yx = m.f_yx;
            pf.f_z = m.f_z;
            pf.f_x = m.f_x;
            pf.f_y = m.f_y;
            // derivative fields are not needed for apply()
            pf.df_dy = Field3::zero(grid);
            pf.df_dy_yx = Field2::zero(grid.gy, grid.gx);
            pf.mean_y = model.sample.ys().mean();
            return pf;
        }();
        const Grid1D u_grid = default_u_grid(grid.gy, -0.2, 0.2);
        const IvProblem prob = make_ind_problem(f, u_grid);
        return prob.image_norm().norm(prob.apply(phi_t));
    }
    if (kind == IvKind::QUANT) {
        const Field3 F = smoothed_cdf_y(model, grid);
        const Field3 fd = Field3::zero(grid);
        GridFn f_z = marginals(model, grid.gy, grid.gx, grid.gz).f_z;
        const IvProblem prob = make_quant_problem(F, fd, f_z, 0.5);
        return prob.image_norm().norm(prob.apply(phi_t));
    }
    throw std::invalid_argument("residual_stat: IND or QUANT only");
}

}  // namespace detail

/// Monte Carlo variance of ‖F̂(φ†)‖ across (n, h) points with a log-log
/// slope fit in whichever of n or h varies.
inline VarianceScaling variance_scaling_probe(const ScenarioSec5& scn, IvKind kind,
                                              const std::vector<int>& n_list,
                                              const std::vector<double>& h_list, int reps,
                                              int grid_n = 30, std::uint64_t seed = 1,
                                              int threads = 0,
                                              const KernelSpec& kernel = {}) {
    if (reps < 20) throw std::invalid_argument("variance_scaling_probe: reps must be >= 20");
    const bool sweep_n = n_list.size() > 1;
    const bool sweep_h = h_list.size() > 1;
    if (sweep_n == sweep_h)
        throw std::invalid_argument("variance_scaling_probe: sweep exactly one of n, h");
    std::vector<VarianceScalingPoint> pts;
    for (int n : n_list)
        for (double h : h_list) pts.push_back({n, h, 0.0});

    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    const int nthreads = std::max(1, threads > 0 ? threads : hw);
    for (std::size_t pi = 0; pi < pts.size(); ++pi) {
        std::vector<double> stats(reps);
        std::atomic<int> next{0};
        auto worker = [&] {
            for (int r = next.fetch_add(1); r < reps; r = next.fetch_add(1))
                stats[r] = detail::residual_stat(scn, kind, pts[pi].n, pts[pi].h, grid_n,
                                                 seed + pi * 100003ULL + r, kernel);
        };
        std::vector<std::thread> pool;
        for (int t = 1; t < std::min(nthreads, reps); ++t) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();
        double mean = std::accumulate(stats.begin(), stats.end(), 0.0) / reps;
        double var = 0.0;
        for (double s : stats) var += (s - mean) * (s - mean);
        pts[pi].variance = var / (reps - 1);
    }
    std::vector<double> xs, ys;
    for (const auto& p : pts) {
        xs.push_back(std::log(sweep_n ? static_cast<double>(p.n) : p.h));
        ys.push_back(std::log(p.variance));
    }
    return {pts, fit_line(xs, ys)};
}

struct ConcentrationReport {
    // exceedance frequencies of |stat − mean|/sd beyond sqrt(τ), τ = 1, 4, 9
    std::array<double, 3> exceedance{};
    double c_fit = 0.0;  // envelope 2 exp(−c τ)
    double mean = 0.0;
    double sd = 0.0;
};

inline ConcentrationReport concentration_probe(const ScenarioSec5& scn, IvKind kind, int n,
                                               double h, int reps, int grid_n = 30,
                                               std::uint64_t seed = 1, int threads = 0,
                                               const KernelSpec& kernel = {}) {
    if (reps < 500) throw std::invalid_argument("concentration_probe: reps must be >= 500");
    std::vector<double> stats(reps);
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    const int nthreads = std::max(1, threads > 0 ? threads : hw);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int r = next.fetch_add(1); r < reps; r = next.fetch_add(1))
            stats[r] = detail::residual_stat(scn, kind, n, h, grid_n, seed + r, kernel);
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < std::min(nthreads, reps); ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    ConcentrationReport rep;
    rep.mean = std::accumulate(stats.begin(), stats.end(), 0.0) / reps;
    double var = 0.0;
    for (double s : stats) var += (s - rep.mean) * (s - rep.mean);
    rep.sd = std::sqrt(var / (reps - 1));
    const double taus[3] = {1.0, 4.0, 9.0};
    std::vector<double> xs, ys;
    for (int k = 0; k < 3; ++k) {
        int count = 0;
        for (double s : stats)
            if (std::abs(s - rep.mean) / rep.sd > std::sqrt(taus[k])) ++count;
        rep.exceedance[k] = static_cast<double>(count) / reps;
        if (count > 0) {
            xs.push_back(taus[k]);
            ys.push_back(std::log(rep.exceedance[k] / 2.0));
        }
    }
    if (xs.size() >= 2)
        rep.c_fit = -fit_line(xs, ys).slope;
    else if (!xs.empty())
        rep.c_fit = -ys[0] / xs[0];
    else
        rep.c_fit = 1.0;  // everything concentrated below one sd
    return rep;
}

struct RatePoint {
    double delta = 0.0;
    double rmse_apriori = 0.0;
    double rmse_lepskii = 0.0;
};

struct RateFit {
    std::vector<RatePoint> points;
    double exponent = 0.0;          // fitted slope of log RMSE vs log δ (a-priori)
    double exponent_lepskii = 0.0;
};

/// Convergence-rate experiment on the diagonal testbed: full runs per noise
/// level with a-priori stopping (and Lepskii for comparison), then a log-log
/// fit of RMSE against δ.
inline RateFit synthetic_rate_experiment(SyntheticSpec base, const std::vector<double>& delta_list,
                                         int reps, double alpha0 = 1.0, double q_alpha = 0.8,
                                         int m = 2, int max_steps = 60, int threads = 0) {
    if (delta_list.size() < 6)
        throw std::invalid_argument("synthetic_rate_experiment: need >= 6 delta levels");
    const double lo = *std::min_element(delta_list.begin(), delta_list.end());
    const double hi = *std::max_element(delta_list.begin(), delta_list.end());
    if (hi / lo < 100.0)
        throw std::invalid_argument("synthetic_rate_experiment: deltas must span >= 2 decades");

    RateFit out;
    out.points.resize(delta_list.size());
    std::vector<double> alphas(max_steps + 1);
    for (int j = 0; j <= max_steps; ++j) alphas[j] = alpha0 * std::pow(q_alpha, j);

    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    const int nthreads = std::max(1, threads > 0 ? threads : hw);
    std::atomic<int> next{0};
    const int total = static_cast<int>(delta_list.size()) * reps;
    std::vector<double> se_ap(total), se_lep(total);
    auto worker = [&] {
        for (int k = next.fetch_add(1); k < total; k = next.fetch_add(1)) {
            const int di = k / reps, r = k % reps;
            SyntheticSpec spec = base;
            spec.delta_noi = delta_list[di];
            spec.seed = base.seed + 7919ULL * di + r;
            const SyntheticProblem prob = make_synthetic(spec);
            IrgnmConfig cfg = synthetic_irgnm_config(prob, alpha0, q_alpha, m, max_steps);
            const IrgnmRun rn = run(prob, cfg);

            NoiseLevels nl;
            nl.delta_noi = spec.delta_noi;
            TheoryConstants tc;
            tc.C_g = m;
            tc.mu = spec.mu;
            const auto e_app_bound = [&](int j) {
                return spec.rho * std::pow(alphas[j], spec.mu);
            };
            const int j_ap = std::min(a_priori_stop(e_app_bound, nl, alphas, tc), rn.last_index());
            const double c_stop = cfg.R / (4.0 * std::sqrt(alpha0));
            const PhiBound phi = default_phi(nl, alphas, tc, false);
            const int j_max = std::min(compute_jmax(phi, alphas, c_stop), rn.last_index());
            const int j_lep = lepskii_select(rn, phi, tc.gamma_nl, j_max, cfg.gram).index;

            se_ap[k] = (rn.iterates[j_ap] - prob.phi_truth).squaredNorm();
            se_lep[k] = (rn.iterates[j_lep] - prob.phi_truth).squaredNorm();
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < std::min(nthreads, total); ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::vector<double> xs, ys, ys_lep;
    for (std::size_t di = 0; di < delta_list.size(); ++di) {
        double s_ap = 0, s_lep = 0;
        for (int r = 0; r < reps; ++r) {
            s_ap += se_ap[di * reps + r];
            s_lep += se_lep[di * reps + r];
        }
        out.points[di] = {delta_list[di], std::sqrt(s_ap / reps), std::sqrt(s_lep / reps)};
        xs.push_back(std::log(delta_list[di]));
        ys.push_back(std::log(out.points[di].rmse_apriori));
        ys_lep.push_back(std::log(out.points[di].rmse_lepskii));
    }
    out.exponent = fit_line(xs, ys).slope;
    out.exponent_lepskii = fit_line(xs, ys_lep).slope;
    return out;
}

}  // namespace nliv
