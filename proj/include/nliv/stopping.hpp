#pragma once

#include "nliv/irgnm.hpp"
#include "nliv/kde.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace nliv {

struct NoiseLevels {
    double delta_noi = 0.0;
    double sigma_noi = 0.0;
    double delta_der = 0.0;
    double sigma_der = 0.0;
};

struct TheoryConstants {
    double C_g = 1.0;      // = m, the tight sup-bound constant of g_alpha
    double C_d = 1.0;
    double rho = 1.0;
    double gamma_nl = 0.5;
    double C_stop = 1.0;
    double L = 0.0;
    double mu = 1.0;
};

/// Monotonically increasing bound Φ(j) on the noise part of the error.
struct PhiBound {
    std::function<double(int)> evaluate;
    double operator()(int j) const { return evaluate(j); }
};

/// Φ(j) = sqrt(C_g/α_j)(δ_noi + s_noi) + C_d ρ (δ_der + s_der) with
/// s = σ in deterministic mode and s = ln(σ^{-2}) σ in risk mode.
inline PhiBound default_phi(const NoiseLevels& nl, std::vector<double> alphas,
                            const TheoryConstants& tc, bool risk_mode = false) {
    const auto inflate = [risk_mode](double sigma) {
        if (sigma <= 0.0) return 0.0;
        return risk_mode ? std::log(1.0 / (sigma * sigma)) * sigma : sigma;
    };
    const double noi = nl.delta_noi + inflate(nl.sigma_noi);
    const double der = tc.C_d * tc.rho * (nl.delta_der + inflate(nl.sigma_der));
    const double cg = tc.C_g;
    return PhiBound{[noi, der, cg, alphas = std::move(alphas)](int j) {
        return std::sqrt(cg / alphas.at(j)) * noi + der;
    }};
}

/// J_max = max{ j : Φ(j)/sqrt(α_j) <= C_stop }, 0 if no index qualifies.
inline int compute_jmax(const PhiBound& phi, const std::vector<double>& alphas, double C_stop) {
    if (alphas.empty()) throw std::invalid_argument("compute_jmax: empty alpha schedule");
    int jmax = -1;
    for (int j = 0; j < static_cast<int>(alphas.size()); ++j)
        if (phi(j) / std::sqrt(alphas[j]) <= C_stop) jmax = j;
    return jmax < 0 ? 0 : jmax;
}

/// A-priori stopping: argmin_j ( e_app_bound(j) + sqrt(C_g/α_j)(δ+σ) ),
/// ties broken toward the smaller index.
inline int a_priori_stop(const std::function<double(int)>& e_app_bound, const NoiseLevels& nl,
                         const std::vector<double>& alphas, const TheoryConstants& tc) {
    if (alphas.empty()) throw std::invalid_argument("a_priori_stop: empty alpha schedule");
    const double noise = nl.delta_noi + nl.sigma_noi;
    int best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (int j = 0; j < static_cast<int>(alphas.size()); ++j) {
        const double val = e_app_bound(j) + std::sqrt(tc.C_g / alphas[j]) * noise;
        if (val < best_val) {
            best_val = val;
            best = j;
        }
    }
    return best;
}

struct LepskiiSelection {
    int index = 0;
    bool no_admissible_warning = false;
};

/// Balancing principle over an iterate history: the smallest j <= j_max with
/// ‖φ̂_i − φ̂_j‖_X <= 4(1+γ_nl)Φ(i) for all i in [j, j_max]. The X-norm is
/// induced by the penalty Gram.
inline LepskiiSelection lepskii_select(const std::vector<Eigen::VectorXd>& iterates,
                                       const PhiBound& phi, double gamma_nl, int j_max,
                                       const Eigen::MatrixXd& gram) {
    if (j_max >= static_cast<int>(iterates.size()))
        throw std::invalid_argument("lepskii_select: j_max beyond iterate history");
    const double c = 4.0 * (1.0 + gamma_nl);
    for (int j = 0; j <= j_max; ++j) {
        bool ok = true;
        for (int i = j + 1; i <= j_max && ok; ++i) {
            const Eigen::VectorXd d = iterates[i] - iterates[j];
            if (std::sqrt(d.dot(gram * d)) > c * phi(i)) ok = false;
        }
        if (ok) return {j, false};
    }
    return {j_max, true};
}

inline LepskiiSelection lepskii_select(const IrgnmRun& run, const PhiBound& phi, double gamma_nl,
                                       int j_max, const Eigen::MatrixXd& gram) {
    return lepskii_select(run.iterates, phi, gamma_nl, j_max, gram);
}

/// Plug-in noise levels for the data-driven pipeline, from the McDiarmid
/// variance bounds of the kernel estimators: the operator level scales as
/// sqrt(C_K / (n h^{d_Z+1})) and the derivative level as the HS-norm scale
/// sqrt(C_K' / (n h^{d_X+d_Z+3})) raised to the power 1+μ.
struct DataNoise {
    double delta_noi = 0.0;
    double delta_der = 0.0;
};

inline double kernel_deriv_l2_sq(const KernelSpec& spec) {
    if (spec.family != KernelFamily::gaussian)
        throw std::invalid_argument("kernel_deriv_l2_sq: gaussian family only");
    return 1.0 / (4.0 * std::sqrt(std::numbers::pi));
}

inline DataNoise estimate_noise_levels(int n, double h, const KernelSpec& kernel, double mu,
                                       double c_cal = 1.0, int d_x = 1, int d_z = 1) {
    const double k2 = kernel_l2_sq(kernel);
    const double ck_noi = k2 * k2 * k2;  // ‖K_Y‖² ‖K_X‖² ‖K_Z‖² for 1D x and z
    const double ck_der = kernel_deriv_l2_sq(kernel) * k2 * k2;
    DataNoise out;
    out.delta_noi = c_cal * std::sqrt(ck_noi / (n * std::pow(h, d_z + 1)));
    const double t = std::sqrt(ck_der / (n * std::pow(h, d_x + d_z + 3)));
    out.delta_der = c_cal * std::pow(t, 1.0 + mu);
    return out;
}

}  // namespace nliv
