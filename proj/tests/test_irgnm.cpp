#include "nliv/irgnm.hpp"
#include "nliv/operators.hpp"
#include "nliv/simulation.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace nliv;

namespace {

// scalar model F(x) = x^2 - 1 with roots at +-1
struct ScalarSquare {
    Eigen::VectorXd apply_vec(const Eigen::VectorXd& v) const {
        return Eigen::VectorXd::Constant(1, v[0] * v[0] - 1.0);
    }
    Eigen::MatrixXd derivative_matrix(const Eigen::VectorXd& v) const {
        return Eigen::MatrixXd::Constant(1, 1, 2.0 * v[0]);
    }
    Eigen::VectorXd image_weights_stacked() const { return Eigen::VectorXd::Ones(1); }
};

IrgnmConfig scalar_config(double phi0, int max_steps) {
    IrgnmConfig cfg;
    cfg.alpha0 = 1.0;
    cfg.q_alpha = 0.5;
    cfg.m = 1;
    cfg.R = 10.0;
    cfg.phi0 = Eigen::VectorXd::Constant(1, phi0);
    cfg.max_steps = max_steps;
    cfg.gram = Eigen::MatrixXd::Identity(1, 1);
    return cfg;
}

}  // namespace

TEST_CASE("IrgnmConfig::validate rejects bad parameters") {
    IrgnmConfig cfg = scalar_config(2.0, 5);
    CHECK_NOTHROW(cfg.validate());
    IrgnmConfig bad = cfg;
    bad.alpha0 = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.q_alpha = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.m = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.gram = Eigen::MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("alpha schedule is exactly geometric") {
    const ScalarSquare p;
    const IrgnmRun r = run(p, scalar_config(2.0, 12));
    REQUIRE(r.alphas.size() == 12);
    for (int j = 0; j < 12; ++j)
        CHECK(r.alphas[j] == Catch::Approx(std::pow(0.5, j)).margin(1e-14));
}

TEST_CASE("linear operator: every iterate matches iterated Tikhonov from phi0") {
    const ScenarioSec5 scn;
    const Grid3 grid = scn.make_grid(30);
    const ProblemFields f = exact_density_fields(scn, grid);
    const IvProblem ce = make_ce_problem(f);

    IrgnmConfig cfg;
    cfg.alpha0 = 1.0;
    cfg.q_alpha = 0.9;
    cfg.m = 2;
    cfg.R = 1.0;
    cfg.phi0 = Eigen::VectorXd::Constant(grid.gx.n, f.mean_y);
    cfg.max_steps = 15;
    cfg.gram = h1_gram(grid.gx);

    const IrgnmRun r = run(ce, cfg);
    LinearizedSystem sys;
    sys.T = ce.derivative_matrix(cfg.phi0);
    sys.image_weights = ce.image_weights_stacked();
    sys.rhs = ce.apply_vec(cfg.phi0);
    sys.start = Eigen::VectorXd::Zero(grid.gx.n);
    sys.gram = cfg.gram;
    for (int j = 0; j < cfg.max_steps; ++j) {
        const Eigen::VectorXd expected =
            cfg.phi0 + iterated_tikhonov(sys, FilterParams(r.alphas[j], cfg.m));
        CHECK((r.iterates[j + 1] - expected).norm() <= 1e-10 * std::max(1.0, expected.norm()));
    }
}

TEST_CASE("a root of F is a fixed point of the iteration") {
    const ScalarSquare p;
    const IrgnmRun r = run(p, scalar_config(1.0, 10));
    for (const Eigen::VectorXd& it : r.iterates) CHECK(it[0] == Catch::Approx(1.0).margin(1e-14));
    for (double res : r.residual_norms) CHECK(res <= 1e-13);
}

TEST_CASE("scalar nonlinear problem converges monotonically toward the root") {
    const ScalarSquare p;
    const IrgnmRun r = run(p, scalar_config(2.0, 25));
    CHECK_FALSE(r.emergency_stopped);
    for (int j = 1; j <= r.last_index(); ++j) {
        CHECK(std::abs(r.iterates[j][0] - 1.0) <= std::abs(r.iterates[j - 1][0] - 1.0) + 1e-12);
        CHECK(r.iterates[j][0] >= 1.0 - 1e-12);
    }
    CHECK(std::abs(r.iterates.back()[0] - 1.0) <= 1e-6);
    CHECK(r.residual_norms.back() <= 1e-5);
}

TEST_CASE("max_steps = 0 produces only the starting point") {
    const ScalarSquare p;
    const IrgnmRun r = run(p, scalar_config(2.0, 0));
    CHECK(r.iterates.size() == 1);
    CHECK(r.alphas.empty());
    CHECK(r.residual_norms.size() == 1);
}

TEST_CASE("emergency reset: tiny trust radius snaps the iterate back to phi0") {
    const ScalarSquare p;
    IrgnmConfig cfg = scalar_config(2.0, 8);
    cfg.R = 1e-9;
    const IrgnmRun r = run(p, cfg);
    CHECK(r.emergency_stopped);
    REQUIRE(r.emergency_step.has_value());
    CHECK(*r.emergency_step == 0);
    for (const Eigen::VectorXd& it : r.iterates) CHECK(it[0] == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("without an emergency every iterate stays inside the 2R ball") {
    const ScenarioSec5 scn;
    const Grid3 grid = scn.make_grid(25);
    const ProblemFields f = exact_density_fields(scn, grid);
    const IvProblem ind = make_ind_problem(f, default_u_grid(grid.gy, f.mean_y - 0.25, f.mean_y + 0.25));

    IrgnmConfig cfg;
    cfg.alpha0 = 1.0;
    cfg.q_alpha = 0.9;
    cfg.m = 2;
    cfg.R = 1.0;
    cfg.phi0 = Eigen::VectorXd::Constant(grid.gx.n, f.mean_y);
    cfg.max_steps = 20;
    cfg.gram = h1_gram(grid.gx);
    const IrgnmRun r = run(ind, cfg);
    CHECK_FALSE(r.emergency_stopped);
    for (const Eigen::VectorXd& it : r.iterates)
        CHECK(cfg.xnorm(it - cfg.phi0) <= 2.0 * cfg.R + 1e-12);
}

TEST_CASE("saturation warning fires exactly when alpha0 is below the spectral bound") {
    const ScalarSquare p;
    IrgnmConfig cfg = scalar_config(2.0, 1);
    // ||T*T|| = 16 at phi0 = 2, threshold 16 / (1 - 0.5) = 32
    const IrgnmRun low = run(p, cfg);
    CHECK(low.operator_norm_sq == Catch::Approx(16.0));
    CHECK(low.alpha0_saturation_warning);
    cfg.alpha0 = 100.0;
    CHECK_FALSE(run(p, cfg).alpha0_saturation_warning);
}

TEST_CASE("runs are deterministic and bit-identical") {
    const ScenarioSec5 scn;
    const Grid3 grid = scn.make_grid(20);
    const ProblemFields f = exact_density_fields(scn, grid);
    const IvProblem ind = make_ind_problem(f, default_u_grid(grid.gy, f.mean_y - 0.25, f.mean_y + 0.25));
    IrgnmConfig cfg;
    cfg.phi0 = Eigen::VectorXd::Constant(grid.gx.n, f.mean_y);
    cfg.max_steps = 10;
    cfg.gram = h1_gram(grid.gx);
    const IrgnmRun a = run(ind, cfg);
    const IrgnmRun b = run(ind, cfg);
    for (int j = 0; j <= a.last_index(); ++j) {
        CHECK(a.iterates[j] == b.iterates[j]);
        CHECK(a.residual_norms[j] == b.residual_norms[j]);
    }
}
