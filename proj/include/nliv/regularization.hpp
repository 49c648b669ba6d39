#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace nliv {

/// Parameters of the m-times iterated Tikhonov filter.
struct FilterParams {
    double alpha = 1.0;
    int m = 1;

    FilterParams() = default;
    FilterParams(double a, int m_) : alpha(a), m(m_) {
        if (!(alpha > 0.0)) throw std::invalid_argument("FilterParams: alpha must be positive");
        if (m < 1) throw std::invalid_argument("FilterParams: m must be >= 1");
    }
};

/// g_α(λ) = ((λ+α)^m − α^m) / (λ (λ+α)^m), evaluated through the
/// cancellation-free partial-fraction form Σ_{k=1..m} α^{k−1}/(λ+α)^k,
/// which also realizes the removable singularity g_α(0) = m/α.
inline double filter_g(double lambda, const FilterParams& p) {
    if (lambda < 0.0) throw std::invalid_argument("filter_g: lambda must be nonnegative");
    const double d = lambda + p.alpha;
    double term = 1.0 / d;
    double sum = term;
    for (int k = 1; k < p.m; ++k) {
        term *= p.alpha / d;
        sum += term;
    }
    return sum;
}

/// r_α(λ) = 1 − λ g_α(λ) = (α/(λ+α))^m.
inline double filter_r(double lambda, const FilterParams& p) {
    if (lambda < 0.0) throw std::invalid_argument("filter_r: lambda must be nonnegative");
    return std::pow(p.alpha / (lambda + p.alpha), p.m);
}

enum class PenaltyKind { L2, H1 };

/// One linearized Newton system: minimize ‖Tφ' + c‖²_Y + α‖φ' − prev‖²_P,
/// iterated m times from φ̄_0 = start. T carries the image-quadrature-free
/// kernel values times x-weights; the Y-norm is Σ w_i v_i².
struct LinearizedSystem {
    Eigen::MatrixXd T;
    Eigen::VectorXd image_weights;
    Eigen::VectorXd rhs;    // c
    Eigen::VectorXd start;  // φ̄_0
    Eigen::MatrixXd gram;   // penalty Gram G (SPD)

    void validate() const {
        if (T.rows() != rhs.size() || T.rows() != image_weights.size())
            throw std::invalid_argument("LinearizedSystem: image dimension mismatch");
        if (T.cols() != start.size() || gram.rows() != T.cols() || gram.cols() != T.cols())
            throw std::invalid_argument("LinearizedSystem: domain dimension mismatch");
    }

    Eigen::MatrixXd normal_matrix() const {
        return T.transpose() * image_weights.asDiagonal() * T;
    }
};

/// m successive penalized least-squares solves; each step solves
/// (TᵀWT + αG) v = −TᵀW c + αG φ̄_i with one factorization reused.
inline Eigen::VectorXd iterated_tikhonov(const LinearizedSystem& sys, const FilterParams& p) {
    sys.validate();
    const Eigen::MatrixXd N = sys.normal_matrix() + p.alpha * sys.gram;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(N);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("iterated_tikhonov: normal matrix factorization failed");
    const Eigen::VectorXd b0 = -sys.T.transpose() * (sys.image_weights.array() * sys.rhs.array()).matrix();
    Eigen::VectorXd v = sys.start;
    for (int i = 0; i < p.m; ++i) {
        v = ldlt.solve(b0 + p.alpha * (sys.gram * v));
        if (!v.allFinite())
            throw std::runtime_error("iterated_tikhonov: solve produced non-finite values");
    }
    return v;
}

/// Same output through the spectral form r_α(B) start + g_α(B) b with
/// B = G⁻¹TᵀWT self-adjoint in the penalty space; cross-validation path.
inline Eigen::VectorXd spectral_solve_check(const LinearizedSystem& sys, const FilterParams& p) {
    sys.validate();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(sys.normal_matrix(), sys.gram);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("spectral_solve_check: eigendecomposition failed");
    const Eigen::MatrixXd& V = es.eigenvectors();  // G-orthonormal columns
    const Eigen::VectorXd lambda = es.eigenvalues().cwiseMax(0.0);
    const Eigen::VectorXd b_l2 = -sys.T.transpose() * (sys.image_weights.array() * sys.rhs.array()).matrix();
    // P-space adjoint: b = G⁻¹ b_l2; in the G-orthonormal basis its
    // coordinates are Vᵀ b_l2.
    const Eigen::VectorXd cb = V.transpose() * b_l2;
    const Eigen::VectorXd cs = V.transpose() * (sys.gram * sys.start);
    Eigen::VectorXd coef(lambda.size());
    for (int t = 0; t < lambda.size(); ++t)
        coef[t] = filter_r(lambda[t], p) * cs[t] + filter_g(lambda[t], p) * cb[t];
    return V * coef;
}

}  // namespace nliv
