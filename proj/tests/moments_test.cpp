#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "fracheat/bounds.hpp"
#include "fracheat/moments.hpp"

using namespace fracheat;

namespace {

PathEnsemble constant_ensemble(double c, int n, long paths) {
    PathEnsemble ens;
    ens.n_paths = paths;
    ens.disc.grid = build_grid(1.0, n, 0.25);
    ens.disc.dt = 0.01;
    ens.disc.t_end = 0.1;
    ens.disc.snapshot_times = {0.1};
    ens.times = {0.1};
    ens.snapshots = {Eigen::MatrixXd::Constant(n, paths, c)};
    ens.flagged.assign(static_cast<std::size_t>(paths), 0);
    return ens;
}

struct Model {
    Grid grid;
    DiscreteOperator op;
    ModelParams params;
    Discretization disc;
};

Model model(int n, double lambda, double dt, double t_end, std::vector<double> snaps) {
    Model m;
    m.grid = build_grid(1.0, n, 0.25);
    m.op = assemble(1.5, m.grid);
    m.params.lambda = lambda;
    m.params.u0 = tent_profile(m.grid);
    m.disc = {m.grid, dt, t_end, std::move(snaps)};
    return m;
}

}  // namespace

TEST(Energy, ConstantField) {
    const auto ens = constant_ensemble(2.0, 31, 5);
    const double covered = ens.disc.grid.dx * 31;  // interior nodes cover n dx = L n/(n+1)
    for (double p : {2.0, 3.0, 6.0}) {
        const auto e = estimate_energy(ens, 0.1, p);
        EXPECT_NEAR(e.value, 2.0 * std::pow(covered, 1.0 / p), 1e-13);
        EXPECT_EQ(e.std_error, 0.0);
        EXPECT_EQ(e.n_effective, 5);
        EXPECT_NEAR(estimate_sup_moment(ens, 0.1, p).value, std::pow(2.0, p), 1e-12);
        EXPECT_NEAR(estimate_inf_subinterval_moment(ens, 0.1, p, 0.25).value, std::pow(2.0, p), 1e-12);
    }
    EXPECT_THROW(estimate_energy(ens, 0.05, 2.0), domain_error);
    EXPECT_THROW(estimate_energy(ens, 0.1, 1.0), domain_error);
}

TEST(Energy, FlaggedPathsExcluded) {
    auto ens = constant_ensemble(1.0, 15, 4);
    ens.snapshots[0].col(2).setConstant(std::nan(""));
    ens.flagged[2] = 1;
    ens.flagged_count = 1;
    const auto e = estimate_energy(ens, 0.1, 2.0);
    EXPECT_EQ(e.n_effective, 3);
    EXPECT_DOUBLE_EQ(e.flagged_fraction, 0.25);
    EXPECT_TRUE(std::isfinite(e.value));
}

TEST(InfSubinterval, NeedsNodes) {
    // nodes at 0.25, 0.5, 0.75: mu = 0.4 leaves only 0.5
    EXPECT_NO_THROW(estimate_inf_subinterval_moment(constant_ensemble(1.0, 3, 2), 0.1, 2.0, 0.4));
    // nodes at 0.2, 0.4, 0.6, 0.8: [0.45, 0.55] holds none
    EXPECT_THROW(estimate_inf_subinterval_moment(constant_ensemble(1.0, 4, 2), 0.1, 2.0, 0.45), domain_error);
}

TEST(Energy, DeterministicFlowWithoutNoise) {
    auto m = model(32, 0.0, 1.0 / 256, 0.5, {0.25, 0.5});
    const auto ens = run_ensemble(m.params, m.disc, m.op, 6, 1);
    for (double t : {0.25, 0.5}) {
        const auto e = estimate_energy(ens, t, 2.0);
        const Eigen::VectorXd u = ens.snapshots[ens.time_index(t)].col(0);
        EXPECT_NEAR(e.value, std::sqrt(m.grid.dx * u.squaredNorm()), 1e-14);
        EXPECT_EQ(e.std_error, 0.0);
    }
}

TEST(Energy, MatchesSecondMomentOracle) {
    auto m = model(32, 1.0, 1.0 / 1024, 0.5, {0.5});
    const auto ens = run_ensemble(m.params, m.disc, m.op, 4000, 2024);
    const auto e = estimate_energy(ens, 0.5, 2.0);
    const auto tab = second_moment_volterra(m.params, m.op, m.grid, 0.5, 256);
    const double oracle = std::exp(tab.log_energy(tab.times.size() - 1));
    EXPECT_NEAR(e.value * e.value / oracle, 1.0, 0.05);
}

TEST(Orderings, JensenAndEnergyBounds) {
    auto m = model(32, 2.0, 1.0 / 256, 0.5, {0.25, 0.5});
    const auto ens = run_ensemble(m.params, m.disc, m.op, 300, 9);
    for (double t : {0.25, 0.5})
        for (double p : {2.0, 3.0, 5.0}) {
            const auto n2 = estimate_node_moments(ens, t, 2.0);
            const auto np = estimate_node_moments(ens, t, p);
            for (std::size_t i = 0; i < n2.size(); ++i)
                EXPECT_LE(std::sqrt(n2[i].value), std::pow(np[i].value, 1.0 / p) * (1 + 1e-12));
            const double energy = std::pow(estimate_energy(ens, t, p).value, p);
            const double sup = estimate_sup_moment(ens, t, p).value;
            const double inf = estimate_inf_subinterval_moment(ens, t, p, 0.25).value;
            EXPECT_LE(energy, 1.0 * sup);
            EXPECT_GE(energy, (1.0 - 0.5) * inf);
            EXPECT_GE(sup, inf);
        }
}

TEST(SupMoment, GridRefinement) {
    std::vector<double> sup;
    // default step 0.1/lambda1; a finer dt roughens the field and widens the gap
    for (int n : {128, 256}) {
        auto m = model(n, 1.0, 1.0, 0.25, {0.25});
        m.disc.dt = default_time_step(m.op);
        const auto ens = run_ensemble(m.params, m.disc, m.op, 3000, 31);
        sup.push_back(estimate_sup_moment(ens, 0.25, 2.0).value);
    }
    EXPECT_NEAR(sup[1] / sup[0], 1.0, 0.05);
}

TEST(Energy, MonotoneInLambdaOnOracle) {
    auto m = model(32, 0.0, 1.0, 1.0, {});
    double prev = -1e300;
    for (double lam : {0.0, 0.5, 1.0, 1.5, 2.0}) {
        m.params.lambda = lam;
        const auto tab = second_moment_volterra(m.params, m.op, m.grid, 0.5, 128);
        const double v = tab.log_phi2(tab.times.size() - 1);
        EXPECT_GE(v, prev) << lam;
        prev = v;
    }
}

TEST(Lyapunov, SyntheticExponentials) {
    std::vector<TimedMoment> up, down;
    for (int k = 0; k <= 40; ++k) {
        const double t = 0.1 * k;
        up.push_back({t, 3.0 * std::exp(2.0 * t)});
        down.push_back({t, 5.0 * std::exp(-t)});
    }
    EXPECT_NEAR(fit_lyapunov(up).gamma_hat, 2.0, 1e-12);
    EXPECT_NEAR(fit_lyapunov(down).gamma_hat, -1.0, 1e-12);
    const auto f = fit_lyapunov(up);
    EXPECT_LE(f.ci_low, f.gamma_hat);
    EXPECT_GE(f.ci_high, f.gamma_hat);
    up[3].moment = 0.0;
    EXPECT_THROW(fit_lyapunov(up), domain_error);
}

TEST(Lyapunov, GroundStateFlowDecaysAtTwiceLambda1) {
    auto m = model(64, 0.0, 1.0 / 512, 1.0, {});
    m.params.u0 = m.op.ground_state();
    for (int k = 0; k <= 16; ++k) m.disc.snapshot_times.push_back(k / 16.0);
    const auto ens = run_ensemble(m.params, m.disc, m.op, 1, 1);
    std::vector<TimedMoment> s;
    for (double t : ens.times) s.push_back({t, std::pow(estimate_energy(ens, t, 2.0).value, 2.0)});
    EXPECT_NEAR(fit_lyapunov(s).gamma_hat / (-2.0 * m.op.lambda1), 1.0, 0.02);
}

TEST(WeightedSupNorm, FiniteHorizonDiagnostic) {
    std::vector<TimedLogMoment> s;
    for (int k = 0; k <= 10; ++k) s.push_back({0.1 * k, std::log(4.0) - 3.0 * 0.1 * k});
    MomentSpec spec;
    EXPECT_NEAR(weighted_sup_norm(s, spec), 2.0, 1e-12);
    spec.gamma_diag = 3.0;
    EXPECT_NEAR(weighted_sup_norm(s, spec), 2.0, 1e-12);
    spec.gamma_diag = 5.0;
    EXPECT_NEAR(weighted_sup_norm(s, spec), std::sqrt(4.0 * std::exp(2.0)), 1e-10);
    spec.p = 1.0;
    EXPECT_THROW(weighted_sup_norm(s, spec), validation_error);
}

TEST(Excitation, SyntheticPowers) {
    std::vector<ExcitationPoint> six, alpha19;
    const double e19 = 2.0 * 1.9 / 0.9;
    for (int k = 0; k < 9; ++k) {
        const double lam = 4.0 * std::pow(2.0, k);
        six.push_back({lam, 0.3 * std::pow(lam, 6.0)});
        alpha19.push_back({lam, 0.7 * std::pow(lam, e19)});
    }
    const auto f = fit_excitation(six);
    EXPECT_NEAR(f.e_hat, 6.0, 1e-10);
    EXPECT_EQ(f.lambdas_used.size(), 5u);
    EXPECT_NEAR(fit_excitation(alpha19).e_hat, e19, 1e-10);
    // Phi -> Phi^c leaves the slope unchanged
    for (auto& pt : six) pt.log_phi *= 17.0;
    EXPECT_NEAR(fit_excitation(six).e_hat, 6.0, 1e-10);
}

TEST(Excitation, Errors) {
    std::vector<ExcitationPoint> pts;
    for (int k = 0; k < 6; ++k) pts.push_back({std::pow(2.0, k), 0.5});
    try {
        fit_excitation(pts);
        FAIL();
    } catch (const domain_error& e) {
        EXPECT_NE(std::string(e.what()).find("lambda"), std::string::npos);
    }
    pts[2].lambda = 4.5;
    EXPECT_THROW(fit_excitation(pts), domain_error);
    pts.resize(3);
    EXPECT_THROW(fit_excitation(pts), domain_error);
}

TEST(Excitation, LocalOracleAtAlphaOnePointFive) {
    const Grid g = build_grid(1.0, 32, 0.25);
    const auto op = assemble(1.5, g);
    ModelParams p;
    p.u0 = tent_profile(g);
    std::vector<ExcitationPoint> pts;
    LocalOracleOptions opt;
    opt.steps = 512;
    opt.output_every = 512;
    for (double lam : {8.0, 16.0, 32.0, 64.0, 128.0}) {
        p.lambda = lam;
        const auto tab = second_moment_local(p, op, g, 1.0, opt);
        pts.push_back({lam, tab.log_phi2(tab.times.size() - 1)});
    }
    const auto f = fit_excitation(pts);
    EXPECT_GE(f.e_hat, 5.1);
    EXPECT_LE(f.e_hat, 6.9);
}
