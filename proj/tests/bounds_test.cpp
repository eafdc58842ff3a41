#include <cmath>
#include <tuple>
#include <vector>

#include <gtest/gtest.h>

#include "fracheat/bounds.hpp"

using namespace fracheat;

namespace {

struct Fixture {
    Grid grid = build_grid(1.0, 32, 0.25);
    DiscreteOperator op = assemble(1.5, grid);
    ModelParams params;
    Fixture() { params.u0 = tent_profile(grid); }
};

OracleTable synthetic_lower(const EnvelopeConstants& k, double lambda, int times) {
    OracleTable tab;
    tab.lambda = lambda;
    tab.alpha = k.alpha;
    tab.grid = build_grid(1.0, 8, 0.25);
    tab.log_m.resize(times, 8);
    for (int i = 0; i < times; ++i) {
        const double t = static_cast<double>(i) / (times - 1);
        tab.times.push_back(t);
        tab.log_m.row(i).setConstant(log_lower_envelope(t, k, lambda, 1.0, k.alpha));
    }
    return tab;
}

}  // namespace

TEST(Renewal, NoCouplingGivesForcing) {
    const auto s = volterra_lower_solve(RenewalProblem::constant(2.5, 0.0, 0.4), 1.0, 128);
    for (double v : s.v) EXPECT_DOUBLE_EQ(v, 2.5);
    EXPECT_DOUBLE_EQ(renewal_closed_form(2.5, 0.0, 0.4, 3.0), 2.5);
    EXPECT_DOUBLE_EQ(renewal_closed_form(2.5, 1.0, 0.4, 0.0), 2.5);
}

TEST(Renewal, ThetaFormula) {
    const auto p = RenewalProblem::constant(1.0, 2.0, 1.0 / 3.0);
    EXPECT_NEAR(p.theta(), std::pow(2.0 * std::tgamma(1.0 / 3.0), 3.0), 1e-12 * p.theta());
}

TEST(Renewal, GronwallCase) {
    const auto s = volterra_lower_solve(RenewalProblem::constant(1.5, 2.0, 1.0), 1.0, 1024);
    for (std::size_t k = 0; k < s.t.size(); k += 64) EXPECT_NEAR(s.v[k] / (1.5 * std::exp(2.0 * s.t[k])), 1.0, 0.005);
}

TEST(Renewal, MatchesClosedFormAtEveryTime) {
    // horizon 0.5 for b = 2: theta = (2 Gamma(1/3))^3 ~ 154 makes v(1) ~ 1e66 and needs 8192+ steps for 1%
    for (auto [b, beta, T] : {std::tuple{2.0, 1.0 / 3.0, 0.5}, std::tuple{1.0, 1.0 / 3.0, 1.0}, std::tuple{1.0, 0.5, 1.0}}) {
        const auto s = volterra_lower_solve(RenewalProblem::constant(1.0, b, beta), T, 4096);
        for (std::size_t k = 0; k < s.t.size(); k += 256)
            EXPECT_NEAR(s.v[k] / renewal_closed_form(1.0, b, beta, s.t[k]), 1.0, 0.01) << b << ' ' << beta << ' ' << s.t[k];
    }
}

TEST(Renewal, SelfConvergence) {
    const auto p = RenewalProblem::constant(1.0, 2.0, 1.0 / 3.0);
    const double v1 = volterra_lower_solve(p, 0.5, 1024).v.back();
    const double v2 = volterra_lower_solve(p, 0.5, 2048).v.back();
    const double v4 = volterra_lower_solve(p, 0.5, 4096).v.back();
    EXPECT_LT(std::abs(v4 - v2), 4.0 * 0.01 * v4);
    EXPECT_LT(std::abs(v4 - v2), std::abs(v2 - v1));
}

TEST(Renewal, Errors) {
    EXPECT_THROW(volterra_lower_solve(RenewalProblem::constant(1.0, 1.0, 0.0), 1.0, 128), domain_error);
    EXPECT_THROW(volterra_lower_solve(RenewalProblem::constant(1.0, 1.0, 0.5), 1.0, 32), domain_error);
    EXPECT_THROW(volterra_lower_solve(RenewalProblem::constant(1.0, 1.0, 0.5), 0.0, 128), domain_error);
}

TEST(Renewal, VariableForcing) {
    // a(t) = 1 + t with beta = 1: v' = 1 + b v, v(0) = 1
    RenewalProblem p{[](double t) { return 1.0 + t; }, 1.0, 1.0};
    const auto s = volterra_lower_solve(p, 1.0, 1024);
    const double exact = 2.0 * std::exp(1.0) - 1.0;
    EXPECT_NEAR(s.v.back() / exact, 1.0, 1e-4);
}

TEST(GridOracle, NoNoiseIsSquaredFlow) {
    Fixture f;
    f.params.lambda = 0.0;
    const auto tab = second_moment_volterra(f.params, f.op, f.grid, 0.5, 64);
    for (std::size_t k = 0; k < tab.times.size(); k += 8) {
        const Eigen::VectorXd g = apply_semigroup(f.op, tab.times[k], f.params.u0);
        for (int i = 0; i < f.grid.n; ++i) EXPECT_NEAR(tab.log_m(static_cast<Eigen::Index>(k), i), 2.0 * std::log(g(i)), 1e-10);
    }
    const auto loc = second_moment_local(f.params, f.op, f.grid, 0.5);
    for (std::size_t k = 0; k < loc.times.size(); ++k) {
        const Eigen::VectorXd g = apply_semigroup(f.op, loc.times[k], f.params.u0);
        EXPECT_NEAR(loc.log_m(static_cast<Eigen::Index>(k), 5), 2.0 * std::log(g(5)), 1e-10);
    }
}

TEST(GridOracle, NondecreasingInLambda) {
    Fixture f;
    f.params.lambda = 1.0;
    const auto a = second_moment_volterra(f.params, f.op, f.grid, 0.5, 128);
    f.params.lambda = 2.0;
    const auto b = second_moment_volterra(f.params, f.op, f.grid, 0.5, 128);
    EXPECT_TRUE(((b.log_m - a.log_m).array() >= -1e-12).all());
}

TEST(GridOracle, AgreesWithSchemeExpectation) {
    // exact expectation of the time-stepper, converging to the oracle at first order in dt
    Fixture f;
    f.params.lambda = 1.0;
    const auto oracle = second_moment_volterra(f.params, f.op, f.grid, 0.5, 256);
    const auto fine = scheme_second_moment(f.params, f.op, f.grid, 1.0 / 2048, 1024);
    const auto coarse = scheme_second_moment(f.params, f.op, f.grid, 1.0 / 1024, 512);
    const Eigen::VectorXd o = oracle.log_m.row(oracle.log_m.rows() - 1);
    const double e_fine = (fine.log_m.row(fine.log_m.rows() - 1).transpose() - o).cwiseAbs().maxCoeff();
    const double e_coarse = (coarse.log_m.row(coarse.log_m.rows() - 1).transpose() - o).cwiseAbs().maxCoeff();
    EXPECT_LT(e_coarse, 0.05);
    EXPECT_NEAR(e_coarse / e_fine, 2.0, 0.5);
}

TEST(Oracles, RejectNonlinearSigma) {
    Fixture f;
    f.params.sigma = SigmaSpec::bounded_linear(0.5, 1.0);
    EXPECT_THROW(second_moment_volterra(f.params, f.op, f.grid, 0.5, 64), domain_error);
    EXPECT_THROW(second_moment_local(f.params, f.op, f.grid, 0.5), domain_error);
    EXPECT_THROW(scheme_second_moment(f.params, f.op, f.grid, 0.01, 10), domain_error);
}

TEST(LocalOracle, FiniteTailSlopesAndSmallNoiseDecay) {
    Fixture f;
    for (double lam : {0.25, 1.0, 4.0, 16.0}) {
        f.params.lambda = lam;
        const auto tab = second_moment_local(f.params, f.op, f.grid, 1.0);
        const auto fit = fit_lyapunov_log(tab.sup_series());
        EXPECT_TRUE(std::isfinite(fit.gamma_hat)) << lam;
        if (lam <= 1.0) {
            for (int i = 0; i < f.grid.n; ++i) EXPECT_LT(fit_lyapunov_log(tab.node_series(i)).gamma_hat, 0.0) << lam << ' ' << i;
        }
    }
}

TEST(Envelopes, LowerBasics) {
    EnvelopeConstants k{0.3, 0.5, 1.0, 0.2, 10.0, 1.0, 2.0, 1.5};
    EXPECT_NEAR(lower_envelope(0.0, k, 7.0, 1.0, 1.5), 0.3, 1e-15);
    double prev = 0.0;
    for (double t = 0.0; t <= 2.0; t += 0.05) {
        const double v = lower_envelope(t, k, 2.0, 1.0, 1.5);
        EXPECT_GE(v, prev);
        EXPECT_GE(lower_envelope(t, k, 2.5, 1.0, 1.5), v);
        prev = v;
    }
    EXPECT_THROW(lower_envelope(-0.1, k, 1.0, 1.0, 1.5), domain_error);
}

TEST(Envelopes, LowerLargeLambdaAsymptote) {
    EnvelopeConstants k{1.0, 0.5, 1.0, 0.2, 10.0, 1.0, 2.0, 1.5};
    const double target = std::pow(0.5, 3.0);
    for (double lam : {1e2, 1e3, 1e4}) {
        const double ratio = log_lower_envelope(1.0, k, lam, 1.0, 1.5) / std::pow(lam, 6.0);
        EXPECT_LT(std::abs(ratio / target - 1.0), 1e-6) << lam;
    }
    // at moderate lambda the log prefactor is still visible and shrinks with lambda
    const double r3 = log_lower_envelope(1.0, k, 3.0, 1.0, 1.5) / std::pow(3.0, 6.0);
    const double r6 = log_lower_envelope(1.0, k, 6.0, 1.0, 1.5) / std::pow(6.0, 6.0);
    EXPECT_LT(std::abs(r6 / target - 1.0), std::abs(r3 / target - 1.0));
}

TEST(Envelopes, UpperBasicsAndSaturation) {
    EnvelopeConstants k{0.3, 0.5, 1.2, 0.2, 10.0, 1.0, 2.0, 1.5};
    EXPECT_NEAR(upper_envelope(0.0, k, 3.0, 1.0, 1.5).value, 1.2, 1e-15);
    const double slope = 0.2 * std::pow(9.0, 3.0);
    const double l1 = upper_envelope(0.5, k, 3.0, 1.0, 1.5).log_value, l2 = upper_envelope(0.75, k, 3.0, 1.0, 1.5).log_value;
    EXPECT_NEAR((l2 - l1) / 0.25, slope, 1e-9 * slope);
    const auto big = upper_envelope(1.0, k, 1e3, 1.0, 1.5);
    EXPECT_TRUE(big.saturated);
    EXPECT_TRUE(std::isfinite(big.value));
    EXPECT_NEAR(big.log_value, std::log(1.2) + 0.2 * 1e18, 1e3);
    EXPECT_FALSE(upper_envelope(1.0, k, 1.0, 1.0, 1.5).saturated);
}

TEST(Envelopes, SelfFitRecoversLowerConstants) {
    EnvelopeConstants truth{0.3, 0.05, 1.0, 1.0, 10.0, 1.0, 2.0, 1.5};
    std::vector<OracleTable> tabs;
    for (double lam : {1.0, 2.0, 4.0}) tabs.push_back(synthetic_lower(truth, lam, 16));
    const std::vector<StabilityPoint> stab{{0.5, -1.0}, {1.0, -0.2}, {2.0, 1e6}};
    const auto k = fit_envelope_constants({tabs, stab, 1.5, 1.0, 1.0, 10.0});
    EXPECT_NEAR(k.kappa1 / truth.kappa1, 1.0, 1e-6);
    EXPECT_NEAR(k.kappa2 / truth.kappa2, 1.0, 1e-6);
    EXPECT_GT(k.kappa3, 0.0);
    EXPECT_GT(k.kappa4, 0.0);
    EXPECT_DOUBLE_EQ(k.lambda_L, 1.0);
    EXPECT_DOUBLE_EQ(k.lambda0, 2.0);
    EXPECT_LE(k.lambda_L, k.lambda0);
    for (const auto& t : tabs) EXPECT_TRUE(check_sandwich(t, k, 1.0, 1.0).holds);
}

TEST(Envelopes, FitRejectsThinTables) {
    EnvelopeConstants truth{0.3, 0.05, 1.0, 1.0, 10.0, 1.0, 2.0, 1.5};
    std::vector<OracleTable> tabs{synthetic_lower(truth, 1.0, 16), synthetic_lower(truth, 2.0, 16)};
    const std::vector<StabilityPoint> stab{{1.0, -1.0}, {2.0, 1e6}};
    EXPECT_THROW(fit_envelope_constants({tabs, stab, 1.5, 1.0, 1.0, 10.0}), domain_error);
}

TEST(Envelopes, ConstantsContract) {
    EnvelopeConstants k{0.3, 0.05, 1.0, 1.0, 10.0, 1.0, 2.0, 1.5};
    EXPECT_NO_THROW(k.validate());
    k.lambda_L = 3.0;
    EXPECT_THROW(k.validate(), validation_error);
    k = {0.3, 0.0, 1.0, 1.0, 10.0, 1.0, 2.0, 1.5};
    EXPECT_THROW(k.validate(), validation_error);
}

TEST(Thresholds, FromStabilityTable) {
    const std::vector<StabilityPoint> stab{{0.5, -3.0}, {1.0, -1.0}, {2.0, 0.5}, {4.0, 50.0}, {8.0, 1e5}};
    EXPECT_DOUBLE_EQ(small_noise_threshold(stab), 1.0);
    // reference rate 0.5 (kappa2 lambda^2)^3 with kappa2 = 0.1: 0.5*0.064 at 2, 0.5*4.096 at 4
    EXPECT_DOUBLE_EQ(large_noise_threshold(stab, 1.0, 0.1, 1.0, 1.5), 2.0);
    EXPECT_DOUBLE_EQ(large_noise_threshold(stab, 3.0, 0.1, 1.0, 1.5), 4.0);
    const std::vector<StabilityPoint> none{{1.0, 2.0}};
    EXPECT_THROW(small_noise_threshold(none), domain_error);
}
