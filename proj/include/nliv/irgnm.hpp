#pragma once

#include "nliv/regularization.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <optional>
#include <stdexcept>
#include <vector>

namespace nliv {

template <class P>
concept ForwardOperator = requires(const P& p, const Eigen::VectorXd& v) {
    { p.apply_vec(v) } -> std::convertible_to<Eigen::VectorXd>;
    { p.derivative_matrix(v) } -> std::convertible_to<Eigen::MatrixXd>;
    { p.image_weights_stacked() } -> std::convertible_to<Eigen::VectorXd>;
};

struct IrgnmConfig {
    double alpha0 = 1.0;
    double q_alpha = 0.9;
    int m = 2;
    double R = 1.0;
    Eigen::VectorXd phi0;
    int max_steps = 30;
    Eigen::MatrixXd gram;  // penalty Gram; also defines the X-norm

    void validate() const {
        if (!(alpha0 > 0.0)) throw std::invalid_argument("IrgnmConfig: alpha0 must be positive");
        if (!(q_alpha > 0.0 && q_alpha < 1.0))
            throw std::invalid_argument("IrgnmConfig: q_alpha must be in (0,1)");
        if (m < 1) throw std::invalid_argument("IrgnmConfig: m must be >= 1");
        if (!(R > 0.0)) throw std::invalid_argument("IrgnmConfig: R must be positive");
        if (max_steps < 0) throw std::invalid_argument("IrgnmConfig: max_steps must be >= 0");
        if (phi0.size() == 0) throw std::invalid_argument("IrgnmConfig: phi0 missing");
        if (gram.rows() != phi0.size() || gram.cols() != phi0.size())
            throw std::invalid_argument("IrgnmConfig: gram dimension mismatch");
    }

    double xnorm(const Eigen::VectorXd& v) const { return std::sqrt(v.dot(gram * v)); }
};

struct IrgnmRun {
    std::vector<Eigen::VectorXd> iterates;  // φ̂_0 .. φ̂_J
    std::vector<double> alphas;             // α_0 .. α_{J-1} (α used to produce iterate j+1)
    std::vector<double> residual_norms;     // ‖F̂(φ̂_j)‖_Y per iterate
    bool emergency_stopped = false;
    std::optional<int> emergency_step;
    double operator_norm_sq = 0.0;          // ‖T̂*T̂‖ at φ_0, penalty-space spectrum
    bool alpha0_saturation_warning = false; // α_0 < ‖T̂*T̂‖ / (1 − q_α)

    int last_index() const { return static_cast<int>(iterates.size()) - 1; }
};

/// One outer Newton step: linearize at φ_j and run the m-times iterated
/// Tikhonov inner solve with inner start φ_0 (the spectral form
/// φ_{j+1} = φ_0 + g_α(T*T)T*(T(φ_j − φ_0) − F(φ_j))).
template <ForwardOperator P>
Eigen::VectorXd newton_step(const P& problem, const Eigen::VectorXd& phi_j,
                            const IrgnmConfig& cfg, double alpha_j) {
    LinearizedSystem sys;
    sys.T = problem.derivative_matrix(phi_j);
    sys.image_weights = problem.image_weights_stacked();
    sys.rhs = problem.apply_vec(phi_j);
    sys.start = cfg.phi0 - phi_j;  // inner iteration in φ' = φ − φ_j coordinates
    sys.gram = cfg.gram;
    const Eigen::VectorXd v = iterated_tikhonov(sys, FilterParams(alpha_j, cfg.m));
    return phi_j + v;
}

template <ForwardOperator P>
double weighted_norm(const P& problem, const Eigen::VectorXd& image) {
    const Eigen::VectorXd w = problem.image_weights_stacked();
    return std::sqrt((w.array() * image.array().square()).sum());
}

/// Full outer iteration with geometric α schedule and the emergency reset
/// ‖φ̂_j − φ_0‖ > 2R → φ̂_{j+1} = φ_0; the iteration continues afterwards
/// so stopping rules can still select earlier iterates.
template <ForwardOperator P>
IrgnmRun run(const P& problem, const IrgnmConfig& cfg) {
    cfg.validate();
    IrgnmRun out;
    out.iterates.reserve(cfg.max_steps + 1);
    out.iterates.push_back(cfg.phi0);
    out.residual_norms.push_back(weighted_norm(problem, problem.apply_vec(cfg.phi0)));

    {
        const Eigen::MatrixXd T0 = problem.derivative_matrix(cfg.phi0);
        const Eigen::MatrixXd N = T0.transpose() * problem.image_weights_stacked().asDiagonal() * T0;
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(N, cfg.gram,
                                                                     Eigen::EigenvaluesOnly);
        out.operator_norm_sq = es.info() == Eigen::Success ? es.eigenvalues().maxCoeff() : 0.0;
        out.alpha0_saturation_warning = cfg.alpha0 < out.operator_norm_sq / (1.0 - cfg.q_alpha);
    }

    double alpha = cfg.alpha0;
    for (int j = 0; j < cfg.max_steps; ++j) {
        const Eigen::VectorXd& phi_j = out.iterates.back();
        Eigen::VectorXd next = newton_step(problem, phi_j, cfg, alpha);
        if (cfg.xnorm(next - cfg.phi0) > 2.0 * cfg.R) {
            if (!out.emergency_stopped) {
                out.emergency_stopped = true;
                out.emergency_step = j;
            }
            next = cfg.phi0;
        }
        out.alphas.push_back(alpha);
        out.iterates.push_back(next);
        out.residual_norms.push_back(weighted_norm(problem, problem.apply_vec(next)));
        alpha *= cfg.q_alpha;
    }
    return out;
}

}  // namespace nliv
