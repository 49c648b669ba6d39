#include "nliv/simulation.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

using namespace nliv;

TEST_CASE("instrument density: unit mass, CDF consistency, inverse CDF") {
    CHECK(ScenarioSec5::f_z_cdf(0.0) == 0.0);
    CHECK(ScenarioSec5::f_z_cdf(1.0) == Catch::Approx(1.0).margin(1e-14));
    const Grid1D gz(0.0, 1.0, 2001);
    CHECK(trapezoid_integrate(GridFn::sample(gz, &ScenarioSec5::f_z_density)) ==
          Catch::Approx(1.0).margin(1e-5));
    const ScenarioSec5 scn;
    for (double u : {0.05, 0.3, 0.5, 0.77, 0.99}) {
        const double z = sample_z_inverse_cdf(scn, u);
        CHECK(ScenarioSec5::f_z_cdf(z) == Catch::Approx(u).margin(1e-9));
    }
}

TEST_CASE("generate_sample: moments, endogeneity, determinism") {
    const ScenarioSec5 scn;
    const int n = 200000;
    const Sample s = generate_sample(scn, n, 99);
    REQUIRE(s.n() == n);

    // E[Z] = (9/7)(2/5) + (1/7)(1/2)
    const double ez_true = 18.0 / 35.0 + 1.0 / 14.0;
    double ez = 0.0;
    for (const auto& r : s.records) ez += r.z;
    ez /= n;
    CHECK(ez == Catch::Approx(ez_true).margin(0.003));

    // U = Y - phi(X) correlates positively with X through the shared V
    double sxu = 0.0, sx = 0.0, su = 0.0, sxx = 0.0, suu = 0.0;
    for (const auto& r : s.records) {
        const double u = r.y - ScenarioSec5::phi_true(r.x);
        sx += r.x;
        su += u;
        sxu += r.x * u;
        sxx += r.x * r.x;
        suu += u * u;
    }
    const double cov = sxu / n - (sx / n) * (su / n);
    const double corr = cov / std::sqrt((sxx / n - sx * sx / n / n) * (suu / n - su * su / n / n));
    // population value: 2σ_V² / (sd(X) sd(U)) ≈ 0.32
    CHECK(corr > 0.2);

    const Sample t = generate_sample(scn, 50, 7);
    const Sample t2 = generate_sample(scn, 50, 7);
    for (int i = 0; i < 50; ++i) {
        CHECK(t.records[i].y == t2.records[i].y);
        CHECK(t.records[i].x == t2.records[i].x);
        CHECK(t.records[i].z == t2.records[i].z);
    }
    CHECK(generate_sample(scn, 50, 8).records[0].y != t.records[0].y);
    CHECK_THROWS_AS(generate_sample(scn, 0, 1), std::invalid_argument);
}

TEST_CASE("exact_density_fields: masses, conditional structure, mean") {
    const ScenarioSec5 scn;
    const Grid3 grid = scn.make_grid(45);
    const ProblemFields f = exact_density_fields(scn, grid);

    const Eigen::VectorXd wy = trapezoid_weights(grid.gy);
    const Eigen::VectorXd wx = trapezoid_weights(grid.gx);
    const Eigen::VectorXd wz = trapezoid_weights(grid.gz);
    double mass = 0.0;
    for (int iy = 0; iy < grid.gy.n; ++iy)
        for (int ix = 0; ix < grid.gx.n; ++ix)
            for (int iz = 0; iz < grid.gz.n; ++iz)
                mass += wy[iy] * wx[ix] * wz[iz] * f.f_yxz.at(iy, ix, iz);
    CHECK(mass == Catch::Approx(1.0).margin(0.05));

    // integrating out (y, x) matches the x-marginal of f_XZ; both carry the
    // same x-truncation, so only the y-truncation separates them
    for (int iz = 0; iz < grid.gz.n; iz += 11) {
        double m = 0.0;
        for (int iy = 0; iy < grid.gy.n; ++iy)
            for (int ix = 0; ix < grid.gx.n; ++ix)
                m += wy[iy] * wx[ix] * f.f_yxz.at(iy, ix, iz);
        double mx = 0.0;
        for (int ix = 0; ix < grid.gx.n; ++ix) mx += wx[ix] * f.f_xz.at(ix, iz);
        CHECK(m == Catch::Approx(mx).margin(0.07));
    }

    // the y-argmax of the density sits at the conditional mean
    for (int ix : {5, 22, 40})
        for (int iz : {5, 22, 40}) {
            const double x = grid.gx.node(ix), z = grid.gz.node(iz);
            const double mode = ScenarioSec5::phi_true(x) + 2.0 * (x - ScenarioSec5::g_fn(z));
            if (std::abs(mode) > 0.35) continue;  // conditional mean outside the y-grid
            int best = 0;
            for (int iy = 1; iy < grid.gy.n; ++iy)
                if (f.f_yxz.at(iy, ix, iz) > f.f_yxz.at(best, ix, iz)) best = iy;
            CHECK(grid.gy.node(best) == Catch::Approx(mode).margin(1.5 * grid.gy.spacing()));
        }

    // E[Y] = E[phi(X)] against a large-sample average of Y
    const Sample big = generate_sample(scn, 400000, 5);
    CHECK(f.mean_y == Catch::Approx(big.ys().mean()).margin(0.003));

    // psi = E[Y | Z]: the CE operator residual nearly vanishes at the truth
    const IvProblem ce = make_ce_problem(f);
    const GridFn truth = GridFn::sample(grid.gx, &ScenarioSec5::phi_true);
    const GridFn start = GridFn::constant(grid.gx, f.mean_y);
    const ImageNorm nm = ce.image_norm();
    // ψ carries the y-grid truncation bias, so the residual is small but
    // not machine-zero
    CHECK(nm.norm(ce.apply(truth)) <= 0.15 * nm.norm(ce.apply(start)));
}

TEST_CASE("quantile_type7 and summarize") {
    CHECK(quantile_type7({1.0, 2.0, 3.0, 4.0}, 0.25) == Catch::Approx(1.75));
    CHECK(quantile_type7({4.0, 1.0, 3.0, 2.0}, 0.0) == 1.0);
    CHECK(quantile_type7({4.0, 1.0, 3.0, 2.0}, 1.0) == 4.0);
    CHECK(quantile_type7({5.0}, 0.9) == 5.0);
    CHECK_THROWS_AS(quantile_type7({}, 0.5), std::invalid_argument);

    const SummaryRow r = summarize(500, "ind", {0.3, 0.1, 0.4, 0.2, 0.25});
    CHECK(r.mean == Catch::Approx(0.25));
    CHECK(r.q25 <= r.q50);
    CHECK(r.q50 <= r.q75);
    CHECK(r.q75 <= r.q90);
    CHECK(r.method == "ind");
}

TEST_CASE("norm_l2_range: full range and interior window") {
    const Grid1D g(0.0, 1.0, 101);
    const GridFn one = GridFn::constant(g, 1.0);
    CHECK(norm_l2_range(one, 0.0, 1.0) == Catch::Approx(norm_l2(one)).margin(1e-12));
    CHECK(norm_l2_range(one, 0.05, 0.95) == Catch::Approx(std::sqrt(0.9)).margin(1e-12));
    CHECK(norm_l2_range(one, 0.4, 0.4) == 0.0);
}

TEST_CASE("baseline_linear_reconstruct: alpha limit and kind guard") {
    const ScenarioSec5 scn;
    const Grid3 grid = scn.make_grid(20);
    const ProblemFields f = exact_density_fields(scn, grid);
    const IvProblem ce = make_ce_problem(f);
    const Eigen::VectorXd phi0 = Eigen::VectorXd::Constant(grid.gx.n, f.mean_y);
    const Eigen::MatrixXd gram = h1_gram(grid.gx);
    const auto path = baseline_linear_reconstruct(ce, {1e12, 1.0, 0.01}, phi0, 2, gram);
    REQUIRE(path.size() == 3);
    CHECK((path[0] - phi0).norm() <= 1e-6);
    // smaller alpha moves further from the start
    CHECK((path[2] - phi0).norm() > (path[1] - phi0).norm());

    const IvProblem ind = make_ind_problem(f, default_u_grid(grid.gy, -0.25, 0.25));
    CHECK_THROWS_AS(baseline_linear_reconstruct(ind, {1.0}, phi0, 2, gram),
                    std::invalid_argument);
}

TEST_CASE("McConfig::validate rejects bad parameters") {
    McConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    McConfig bad = cfg;
    bad.reps = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.n = 5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.q_alpha = 1.2;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.grid_n = 4;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

namespace {

McConfig small_mc_config() {
    McConfig cfg;
    cfg.n = 200;
    cfg.reps = 3;
    cfg.base_seed = 11;
    cfg.grid_n = 20;
    cfg.max_steps = 20;
    cfg.ce_alpha_steps = 25;
    cfg.threads = 2;
    return cfg;
}

}  // namespace

TEST_CASE("run_replication: validity, determinism, normalization") {
    const ScenarioSec5 scn;
    const McConfig cfg = small_mc_config();
    const ReplicationResult a = run_replication(scn, cfg, 0);
    REQUIRE(a.valid);
    CHECK(a.err_ind > 0.0);
    CHECK(a.err_ind <= 3.0);
    CHECK(a.err_ce > 0.0);
    CHECK(a.err_ce <= 3.0);
    CHECK(a.j_selected_ind >= 0);
    CHECK(a.j_selected_ind <= cfg.max_steps);

    const ReplicationResult b = run_replication(scn, cfg, 0);
    CHECK(a.err_ind == b.err_ind);
    CHECK(a.err_ce == b.err_ce);
    CHECK(a.j_selected_ind == b.j_selected_ind);

    // a different replication index uses a different seed
    const ReplicationResult c = run_replication(scn, cfg, 1);
    CHECK(c.err_ind != a.err_ind);
}

TEST_CASE("run_monte_carlo: table shape, seed stability under more reps") {
    const ScenarioSec5 scn;
    McConfig cfg = small_mc_config();
    const McOutput out = run_monte_carlo(scn, cfg);
    REQUIRE(static_cast<int>(out.replications.size()) == cfg.reps);
    REQUIRE(out.summary.rows.size() == 2);
    CHECK(out.summary.rows[0].method == "ind");
    CHECK(out.summary.rows[1].method == "ce");
    for (const auto& r : out.replications) CHECK(r.valid);

    // the single-replication table entry equals a direct replication call
    McConfig one = cfg;
    one.reps = 1;
    const McOutput o1 = run_monte_carlo(scn, one);
    const ReplicationResult direct = run_replication(scn, cfg, 0);
    CHECK(o1.replications[0].err_ind == direct.err_ind);
    CHECK(o1.replications[0].err_ce == direct.err_ce);

    // growing reps with the same base seed keeps the earlier draws
    McConfig more = cfg;
    more.reps = 5;
    const McOutput o5 = run_monte_carlo(scn, more);
    for (int r = 0; r < cfg.reps; ++r) {
        CHECK(o5.replications[r].err_ind == out.replications[r].err_ind);
        CHECK(o5.replications[r].err_ce == out.replications[r].err_ce);
    }
}
