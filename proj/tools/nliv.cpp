// nliv — nonparametric IV regression via the iteratively regularized
// Gauss-Newton method. Subcommands: simulate, reconstruct, rates, diagnose.
// Exit codes: 0 success, 2 configuration/input error, 3 solver abort.

#include "nliv/config.hpp"
#include "nliv/csv.hpp"
#include "nliv/diagnostics.hpp"
#include "nliv/simulation.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace nliv;

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

struct CliFlags {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<long long> seed, reps, n, grid, threads;
};

// Flag wins over config file; config wins over the built-in default.
long long pick_int(const std::optional<long long>& flag, const Config& cfg,
                   const std::string& key, long long fallback) {
    if (flag) return *flag;
    return cfg.get_int(key, fallback);
}

McConfig mc_config_from(const Config& cfg, const CliFlags& flags) {
    McConfig mc;
    mc.n = static_cast<int>(pick_int(flags.n, cfg, "mc.n", mc.n));
    mc.reps = static_cast<int>(pick_int(flags.reps, cfg, "mc.reps", mc.reps));
    mc.base_seed = static_cast<std::uint64_t>(pick_int(flags.seed, cfg, "run.seed", 1));
    mc.grid_n = static_cast<int>(pick_int(flags.grid, cfg, "mc.grid", mc.grid_n));
    mc.threads = static_cast<int>(pick_int(flags.threads, cfg, "run.threads", 0));
    mc.bandwidth_c = cfg.get_double("mc.bandwidth_c", mc.bandwidth_c);
    mc.alpha0 = cfg.get_double("mc.alpha0", mc.alpha0);
    mc.q_alpha = cfg.get_double("mc.q_alpha", mc.q_alpha);
    mc.m = static_cast<int>(cfg.get_int("mc.m", mc.m));
    mc.R = cfg.get_double("mc.r", mc.R);
    mc.max_steps = static_cast<int>(cfg.get_int("mc.max_steps", mc.max_steps));
    const std::string pen = cfg.get_string("mc.penalty", "h1");
    if (pen == "h1")
        mc.penalty = PenaltyKind::H1;
    else if (pen == "l2")
        mc.penalty = PenaltyKind::L2;
    else
        throw ConfigError("config field 'mc.penalty': expected 'h1' or 'l2', got '" + pen + "'");
    mc.w_mean = cfg.get_double("mc.w_mean", mc.w_mean);
    mc.c_cal = cfg.get_double("mc.c_cal", mc.c_cal);
    mc.ce_alpha_steps = static_cast<int>(cfg.get_int("mc.ce_alpha_steps", mc.ce_alpha_steps));
    mc.mu = cfg.get_double("mc.mu", mc.mu);
    mc.u_pad = cfg.get_double("mc.u_pad", mc.u_pad);
    mc.validate();
    return mc;
}

std::string out_path(const CliFlags& flags, const std::string& name) {
    std::filesystem::create_directories(flags.out_dir);
    return (std::filesystem::path(flags.out_dir) / name).string();
}

int cmd_simulate(const Config& cfg, const CliFlags& flags) {
    const McConfig mc = mc_config_from(cfg, flags);
    const ScenarioSec5 scn;
    const McOutput out = run_monte_carlo(scn, mc);

    CsvWriter reps(out_path(flags, "replications.csv"), "replications v1",
                   {"rep", "n", "method", "error", "error_interior", "selected", "emergency",
                    "valid"});
    for (const auto& r : out.replications) {
        reps.row({std::to_string(r.rep), std::to_string(r.n), "ind", csv_num(r.err_ind),
                  csv_num(r.err_ind_interior), std::to_string(r.j_selected_ind),
                  r.emergency ? "1" : "0", r.valid ? "1" : "0"});
        reps.row({std::to_string(r.rep), std::to_string(r.n), "ce", csv_num(r.err_ce),
                  csv_num(r.err_ce_interior), csv_num(r.alpha_selected_ce), "0",
                  r.valid ? "1" : "0"});
    }

    CsvWriter summary(out_path(flags, "summary.csv"), "summary v1",
                      {"n", "method", "mean", "q25", "q50", "q75", "q90"});
    for (const auto& row : out.summary.rows)
        summary.row({std::to_string(row.n), row.method, csv_num(row.mean), csv_num(row.q25),
                     csv_num(row.q50), csv_num(row.q75), csv_num(row.q90)});

    // fixed-range histograms of the normalized errors, 30 bins on [0, 1.5]
    constexpr int kBins = 30;
    constexpr double kHi = 1.5;
    CsvWriter hist(out_path(flags, "histograms.csv"), "histograms v1",
                   {"method", "bin_lo", "bin_hi", "count"});
    for (const std::string method : {"ind", "ce"}) {
        std::vector<int> counts(kBins, 0);
        for (const auto& r : out.replications) {
            if (!r.valid) continue;
            const double e = method == "ind" ? r.err_ind : r.err_ce;
            int b = static_cast<int>(e / kHi * kBins);
            if (b < 0) b = 0;
            if (b >= kBins) b = kBins - 1;
            ++counts[b];
        }
        for (int b = 0; b < kBins; ++b)
            hist.row({method, csv_num(b * kHi / kBins), csv_num((b + 1) * kHi / kBins),
                      std::to_string(counts[b])});
    }
    return 0;
}

int cmd_reconstruct(const Config& cfg, const CliFlags& flags, const std::string& data_path) {
    Sample sample;
    try {
        sample = read_sample_csv(data_path);
    } catch (const std::exception& e) {
        std::cerr << "nliv: " << e.what() << "\n";
        return kExitConfig;
    }
    McConfig mc = mc_config_from(cfg, flags);
    mc.n = sample.n();

    const ScenarioSec5 scn;
    const double h = default_bandwidth(sample, mc.bandwidth_c);
    const DensityModel model(sample, mc.kernel, h);
    const Grid3 grid = scn.make_grid(mc.grid_n);
    const ProblemFields fields = kde_density_fields(model, grid);

    const double ybar = sample.ys().mean();
    const Eigen::VectorXd phi0 = Eigen::VectorXd::Constant(grid.gx.n, ybar);
    const Eigen::MatrixXd gram = mc.penalty == PenaltyKind::H1
                                     ? h1_gram(grid.gx)
                                     : Eigen::MatrixXd(trapezoid_weights(grid.gx).asDiagonal());

    std::vector<double> alphas(mc.max_steps + 1);
    for (int j = 0; j <= mc.max_steps; ++j) alphas[j] = mc.alpha0 * std::pow(mc.q_alpha, j);
    const DataNoise dn = estimate_noise_levels(sample.n(), h, mc.kernel, mc.mu, mc.c_cal);
    NoiseLevels nl;
    nl.delta_noi = dn.delta_noi;
    nl.delta_der = dn.delta_der;
    TheoryConstants tc = mc.theory;
    tc.C_g = mc.m;
    tc.mu = mc.mu;
    const PhiBound phi_bound = default_phi(nl, alphas, tc, false);
    const int j_max = compute_jmax(phi_bound, alphas, mc.R / (4.0 * std::sqrt(mc.alpha0)));

    const Grid1D u_grid = default_u_grid(grid.gy, ybar - mc.u_pad, ybar + mc.u_pad);
    const IvProblem ind = make_ind_problem(fields, u_grid, mc.w_mean);
    IrgnmConfig icfg;
    icfg.alpha0 = mc.alpha0;
    icfg.q_alpha = mc.q_alpha;
    icfg.m = mc.m;
    icfg.R = mc.R;
    icfg.phi0 = phi0;
    icfg.max_steps = mc.max_steps;
    icfg.gram = gram;
    const IrgnmRun irun = run(ind, icfg);
    const LepskiiSelection sel =
        lepskii_select(irun, phi_bound, tc.gamma_nl, std::min(j_max, irun.last_index()), gram);

    CsvWriter phi_csv(out_path(flags, "phi_hat.csv"), "phi_hat v1", {"x", "phi"});
    const Eigen::VectorXd& phi_hat = irun.iterates[sel.index];
    for (int i = 0; i < grid.gx.n; ++i)
        phi_csv.row({csv_num(grid.gx.node(i)), csv_num(phi_hat[i])});

    CsvWriter diag(out_path(flags, "diagnostics.csv"), "reconstruct_diagnostics v1",
                   {"step", "alpha", "residual", "lepskii_threshold", "selected"});
    const double c = 4.0 * (1.0 + tc.gamma_nl);
    for (int j = 0; j <= irun.last_index(); ++j)
        diag.row({std::to_string(j), csv_num(alphas[j]), csv_num(irun.residual_norms[j]),
                  csv_num(c * phi_bound(j)), j == sel.index ? "1" : "0"});
    return 0;
}

int cmd_rates(const Config& cfg, const CliFlags& flags) {
    SyntheticSpec spec;
    spec.dim = static_cast<int>(cfg.get_int("rates.dim", 60));
    const std::string decay = cfg.get_string("rates.decay", "exponential");
    if (decay == "exponential")
        spec.decay = SingularDecay::exponential;
    else if (decay == "polynomial")
        spec.decay = SingularDecay::polynomial;
    else
        throw ConfigError("config field 'rates.decay': expected 'exponential' or 'polynomial', got '" +
                          decay + "'");
    spec.decay_rate = cfg.get_double("rates.decay_rate", 0.15);
    spec.mu = cfg.get_double("rates.mu", 1.0);
    spec.rho = cfg.get_double("rates.rho", 1.0);
    spec.beta = cfg.get_double("rates.beta", 0.05);
    spec.seed = static_cast<std::uint64_t>(pick_int(flags.seed, cfg, "run.seed", 7));

    const double delta_min = cfg.get_double("rates.delta_min", 1e-5);
    const double decades = cfg.get_double("rates.delta_decades", 2.5);
    const int count = static_cast<int>(cfg.get_int("rates.delta_count", 7));
    std::vector<double> deltas(count);
    for (int k = 0; k < count; ++k)
        deltas[k] = delta_min * std::pow(10.0, decades * k / (count - 1));
    const int reps = static_cast<int>(pick_int(flags.reps, cfg, "rates.reps", 50));
    const int threads = static_cast<int>(pick_int(flags.threads, cfg, "run.threads", 0));
    const double alpha0 = cfg.get_double("rates.alpha0", 1.0);
    const double q_alpha = cfg.get_double("rates.q_alpha", 0.9);
    const int m = static_cast<int>(cfg.get_int("rates.m", 2));
    const int max_steps = static_cast<int>(cfg.get_int("rates.max_steps", 130));

    const RateFit fit =
        synthetic_rate_experiment(spec, deltas, reps, alpha0, q_alpha, m, max_steps, threads);

    CsvWriter points(out_path(flags, "rate_points.csv"), "rate_points v1",
                     {"delta", "rmse_apriori", "rmse_lepskii"});
    std::vector<double> xs, ya, yl;
    for (const auto& p : fit.points) {
        points.row({csv_num(p.delta), csv_num(p.rmse_apriori), csv_num(p.rmse_lepskii)});
        xs.push_back(std::log(p.delta));
        ya.push_back(std::log(p.rmse_apriori));
        yl.push_back(std::log(p.rmse_lepskii));
    }
    const LineFit fa = fit_line(xs, ya);
    const LineFit fl = fit_line(xs, yl);
    CsvWriter out(out_path(flags, "rate_fit.csv"), "rate_fit v1",
                  {"mu", "stopping", "exponent", "exponent_stderr", "theory"});
    const double theory = 2.0 * spec.mu / (2.0 * spec.mu + 1.0);
    out.row({csv_num(spec.mu), "apriori", csv_num(fa.slope), csv_num(fa.slope_stderr),
             csv_num(theory)});
    out.row({csv_num(spec.mu), "lepskii", csv_num(fl.slope), csv_num(fl.slope_stderr),
             csv_num(theory)});
    return 0;
}

int cmd_diagnose(const Config& cfg, const CliFlags& flags) {
    const ScenarioSec5 scn;
    const std::uint64_t seed = static_cast<std::uint64_t>(pick_int(flags.seed, cfg, "run.seed", 1));
    const int threads = static_cast<int>(pick_int(flags.threads, cfg, "run.threads", 0));
    const int grid_n = static_cast<int>(pick_int(flags.grid, cfg, "diagnose.grid", 30));
    const int var_reps = static_cast<int>(pick_int(flags.reps, cfg, "diagnose.variance_reps", 50));
    const int conc_reps = static_cast<int>(cfg.get_int("diagnose.concentration_reps", 500));

    CsvWriter var(out_path(flags, "variance_scaling.csv"), "variance_scaling v1",
                  {"sweep", "kind", "n", "h", "variance", "slope", "slope_stderr"});
    struct SweepSpec {
        const char* name;
        IvKind kind;
        std::vector<int> ns;
        std::vector<double> hs;
    };
    const std::vector<SweepSpec> sweeps = {
        {"n", IvKind::IND, {500, 1000, 2000, 4000}, {0.12}},
        {"h", IvKind::IND, {1000}, {0.06, 0.08, 0.11, 0.15, 0.2}},
        {"h", IvKind::QUANT, {250}, {0.05, 0.07, 0.09, 0.12, 0.16}},
    };
    for (const auto& s : sweeps) {
        const VarianceScaling v =
            variance_scaling_probe(scn, s.kind, s.ns, s.hs, var_reps, grid_n, seed, threads);
        for (const auto& p : v.points)
            var.row({s.name, s.kind == IvKind::IND ? "ind" : "quant", std::to_string(p.n),
                     csv_num(p.h), csv_num(p.variance), csv_num(v.fit.slope),
                     csv_num(v.fit.slope_stderr)});
    }

    const ConcentrationReport conc =
        concentration_probe(scn, IvKind::IND, 250, 0.1, conc_reps, grid_n, seed, threads);
    CsvWriter conc_csv(out_path(flags, "concentration.csv"), "concentration v1",
                       {"kind", "n", "h", "reps", "mean", "sd", "exceed_1sd", "exceed_2sd",
                        "exceed_3sd", "c_fit"});
    conc_csv.row({"ind", "250", csv_num(0.1), std::to_string(conc_reps), csv_num(conc.mean),
                  csv_num(conc.sd), csv_num(conc.exceedance[0]), csv_num(conc.exceedance[1]),
                  csv_num(conc.exceedance[2]), csv_num(conc.c_fit)});

    // Lipschitz probe on a small exact-density IND problem
    const Grid3 grid = scn.make_grid(grid_n);
    const ProblemFields fields = exact_density_fields(scn, grid);
    const Grid1D u_grid = default_u_grid(grid.gy, -0.25, 0.25);
    const IvProblem ind = make_ind_problem(fields, u_grid);
    const Eigen::VectorXd center = Eigen::VectorXd::Zero(grid.gx.n);
    const LipschitzProbe lip = lipschitz_probe(ind, center, 0.2, 20, seed);
    CsvWriter lip_csv(out_path(flags, "lipschitz.csv"), "lipschitz v1",
                      {"kind", "l_hat", "analytic_bound"});
    lip_csv.row({"ind", csv_num(lip.L_hat), csv_num(lip.analytic_bound)});

    // source-condition fit on the synthetic testbed (construction oracle μ = 1)
    SyntheticSpec sp;
    sp.seed = seed;
    const SyntheticProblem synth = make_synthetic(sp);
    const SourceFit sf = fit_source_condition(synth.true_derivative(), synth.e0());
    CsvWriter src_csv(out_path(flags, "source_fit.csv"), "source_fit v1",
                      {"mu", "mu_hat", "rho_hat", "modes_used"});
    src_csv.row({csv_num(sp.mu), csv_num(sf.mu_hat), csv_num(sf.rho_hat),
                 std::to_string(sf.modes_used)});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonparametric IV regression via iteratively regularized Gauss-Newton"};
    app.require_subcommand(1);

    CliFlags flags;
    app.add_option("--config", flags.config_path, "configuration file (key = value with [sections])");
    app.add_option("--out", flags.out_dir, "output directory");
    std::optional<long long> seed, reps, n, grid, threads;
    app.add_option("--seed", seed, "RNG seed (overrides config)");
    app.add_option("--reps", reps, "replication count (overrides config)");
    app.add_option("--n", n, "sample size (overrides config)");
    app.add_option("--grid", grid, "grid nodes per axis (overrides config)");
    app.add_option("--threads", threads, "worker threads, 0 = all cores (overrides config)");

    auto* sim = app.add_subcommand("simulate", "Monte Carlo study of both estimators");
    std::string data_path;
    auto* rec = app.add_subcommand("reconstruct", "estimate the regression function from a y,x,z CSV");
    rec->add_option("data", data_path, "observation CSV with header y,x,z")->required();
    auto* rates = app.add_subcommand("rates", "synthetic convergence-rate experiment");
    auto* diag = app.add_subcommand("diagnose", "variance/concentration/Lipschitz/source probes");
    for (auto* s : {sim, rec, rates, diag}) s->fallthrough();

    CLI11_PARSE(app, argc, argv);
    flags.seed = seed;
    flags.reps = reps;
    flags.n = n;
    flags.grid = grid;
    flags.threads = threads;

    try {
        Config cfg;
        if (!flags.config_path.empty()) cfg = Config::load(flags.config_path);
        if (sim->parsed()) return cmd_simulate(cfg, flags);
        if (rec->parsed()) return cmd_reconstruct(cfg, flags, data_path);
        if (rates->parsed()) return cmd_rates(cfg, flags);
        if (diag->parsed()) return cmd_diagnose(cfg, flags);
        std::cerr << "nliv: no subcommand\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "nliv: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "nliv: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "nliv: solver aborted: " << e.what() << "\n";
        return kExitSolver;
    }
}
