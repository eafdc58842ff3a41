#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "fracheat/fractional_laplacian.hpp"

using namespace fracheat;

namespace {

const DiscreteOperator& op_15_128() {
    static const DiscreteOperator op = assemble(1.5, build_grid(1.0, 128, 0.25));
    return op;
}

double lambda1(double alpha, double L, int n) { return assemble(alpha, build_grid(L, n, 0.25 * L)).lambda1; }

}  // namespace

TEST(Grid, Examples) {
    Grid g = build_grid(1.0, 3, 0.2);
    EXPECT_DOUBLE_EQ(g.dx, 0.25);
    ASSERT_EQ(g.nodes.size(), 3u);
    EXPECT_DOUBLE_EQ(g.node(0), 0.25);
    EXPECT_DOUBLE_EQ(g.node(1), 0.5);
    EXPECT_DOUBLE_EQ(g.node(2), 0.75);
    EXPECT_DOUBLE_EQ(build_grid(2.0, 7, 0.5).dx, 0.25);
    EXPECT_THROW(build_grid(1.0, 3, 0.6), domain_error);
    EXPECT_THROW(build_grid(1.0, 3, 0.0), domain_error);
    EXPECT_THROW(build_grid(-1.0, 3, 0.1), domain_error);
    EXPECT_THROW(build_grid(1.0, 0, 0.1), domain_error);
}

TEST(Grid, SpacingClosesDomain) {
    for (int n : {8, 31, 64, 255}) {
        Grid g = build_grid(3.7, n, 1.0);
        EXPECT_NEAR(g.dx * (n + 1), 3.7, 1e-14);
    }
}

TEST(OperatorConfig, NormalizationClosedForm) {
    // alpha -> 2 gives c = 2^2 Gamma(3/2) / (sqrt(pi) |Gamma(-1)|) -> 0; check a direct value instead
    const double a = 1.5;
    const double ref = std::pow(2.0, a) * std::tgamma(1.25) / (std::sqrt(std::numbers::pi) * std::abs(std::tgamma(-0.75)));
    EXPECT_NEAR(fractional_laplacian_constant(a) / ref, 1.0, 1e-12);
    EXPECT_NO_THROW(OperatorConfig::make(1.5).validate());
    EXPECT_THROW(OperatorConfig::make(2.0), domain_error);
    OperatorConfig bad = OperatorConfig::make(1.5);
    bad.normalization *= 1.001;
    EXPECT_THROW(bad.validate(), validation_error);
}

TEST(Operator, SymmetricWithSignPattern) {
    const auto& op = op_15_128();
    EXPECT_EQ((op.matrix - op.matrix.transpose()).cwiseAbs().maxCoeff(), 0.0);
    double min_off = 1.0;
    for (int i = 0; i < op.size(); ++i)
        for (int j = 0; j < op.size(); ++j)
            if (i != j) min_off = std::min(min_off, op.matrix(i, j));
    EXPECT_GE(min_off, 0.0);
    EXPECT_LE(op.matrix.rowwise().sum().maxCoeff(), 0.0);
}

TEST(Operator, SpectrumReconstructsMatrix) {
    const auto& op = op_15_128();
    const Eigen::MatrixXd rec = op.eigenvectors * op.eigenvalues.asDiagonal() * op.eigenvectors.transpose();
    EXPECT_LE((op.matrix - rec).cwiseAbs().maxCoeff(), 1e-8 * op.matrix.cwiseAbs().maxCoeff());
    const Eigen::MatrixXd gram = op.eigenvectors.transpose() * op.eigenvectors;
    EXPECT_LE((gram - Eigen::MatrixXd::Identity(op.size(), op.size())).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_GT(op.lambda1, 0.0);
    EXPECT_LT(op.eigenvalues.maxCoeff(), 0.0);
    EXPECT_DOUBLE_EQ(op.lambda1, -op.eigenvalues.maxCoeff());
}

TEST(Operator, SimpleGroundStateAndMonotoneSpectrum) {
    const auto& op = op_15_128();
    for (int k = 1; k < op.size(); ++k) EXPECT_GT(op.eigenvalues(k), op.eigenvalues(k - 1));
    const Eigen::VectorXd phi = op.ground_state();
    EXPECT_GT(phi.minCoeff(), 0.0);
}

TEST(Operator, NegativeDefiniteOnRandomVectors) {
    const auto& op = op_15_128();
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd v(op.size());
        for (int i = 0; i < op.size(); ++i) v(i) = nd(rng);
        EXPECT_LT(v.dot(op.matrix * v), 0.0);
    }
}

TEST(Operator, NearlyClassicalAtAlphaCloseToTwo) {
    const double target = std::pow(std::numbers::pi, 1.95);
    EXPECT_NEAR(lambda1(1.95, 1.0, 256) / target, 1.0, 0.10);
    // the gap to pi^alpha shrinks as alpha -> 2
    double prev = 1e300;
    for (double a : {1.5, 1.8, 1.95}) {
        const double gap = std::abs(lambda1(a, 1.0, 256) / std::pow(std::numbers::pi, a) - 1.0);
        EXPECT_LT(gap, prev) << a;
        prev = gap;
    }
}

TEST(Operator, LengthScaling) {
    for (double a : {1.3, 1.5, 1.8}) EXPECT_NEAR(lambda1(a, 2.0, 256) / (std::pow(2.0, -a) * lambda1(a, 1.0, 256)), 1.0, 0.01);
}

TEST(Operator, GridConvergence) {
    EXPECT_NEAR(lambda1(1.5, 1.0, 128) / lambda1(1.5, 1.0, 256), 1.0, 0.02);
}

TEST(Operator, ApproachesSecondDifferenceStencil) {
    const Grid g = build_grid(1.0, 256, 0.25);
    const Eigen::MatrixXd a2 = second_difference_laplacian(g);
    Eigen::VectorXd v(g.n);
    for (int i = 0; i < g.n; ++i) {
        const double x = g.node(i);
        const double s = (x - 0.5) / 0.3;
        v(i) = std::abs(s) < 1.0 ? std::pow(1.0 - s * s, 4) : 0.0;
    }
    const Eigen::VectorXd ref = a2 * v;
    double prev = 1e300;
    for (double a : {1.5, 1.8, 1.95}) {
        const double rel = (assemble(a, g).matrix * v - ref).norm() / ref.norm();
        EXPECT_LT(rel, prev) << a;
        prev = rel;
    }
}

TEST(HeatKernel, IdentityAtZero) {
    const auto& op = op_15_128();
    const Eigen::MatrixXd p0 = heat_kernel_matrix(op, 0.0);
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(op.size(), op.size()) / op.dx;
    EXPECT_LE((p0 - id).cwiseAbs().maxCoeff(), 1e-10 / op.dx);
    EXPECT_THROW(heat_kernel_matrix(op, -0.1), domain_error);
}

TEST(HeatKernel, SubstochasticAndPositive) {
    const auto& op = op_15_128();
    for (double t : {0.001, 0.01, 0.1, 1.0}) {
        const Eigen::MatrixXd p = heat_kernel_matrix(op, t);
        const Eigen::VectorXd mass = op.dx * p.rowwise().sum();
        EXPECT_GE(mass.minCoeff(), 0.0) << t;
        EXPECT_LE(mass.maxCoeff(), 1.0 + 1e-8) << t;
        if (t >= 0.01) {
            EXPECT_GE(p.minCoeff(), -1e-10 * p.maxCoeff()) << t;
        }
        EXPECT_LE((p - p.transpose()).cwiseAbs().maxCoeff(), 1e-10 * p.maxCoeff());
    }
}

TEST(HeatKernel, ChapmanKolmogorov) {
    const auto& op = op_15_128();
    const Eigen::MatrixXd lhs = heat_kernel_matrix(op, 0.1) * op.dx * heat_kernel_matrix(op, 0.1);
    EXPECT_LE((lhs - heat_kernel_matrix(op, 0.2)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Semigroup, IdentityAndEigenRelation) {
    const auto& op = op_15_128();
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(op.size(), 0.1, 2.0);
    EXPECT_LE((apply_semigroup(op, 0.0, v) - v).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::VectorXd phi = op.ground_state();
    for (double t : {0.05, 0.3, 1.0})
        EXPECT_LE((apply_semigroup(op, t, phi) - std::exp(-op.lambda1 * t) * phi).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(apply_semigroup(op, 0.1, Eigen::VectorXd::Ones(3)), domain_error);
    EXPECT_THROW(apply_semigroup(op, -1.0, v), domain_error);
}

TEST(Semigroup, MatchesKernelTimesDx) {
    const auto& op = op_15_128();
    const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(op.size(), 1.0, 0.0);
    EXPECT_LE((apply_semigroup(op, 0.07, v) - heat_kernel_matrix(op, 0.07) * v * op.dx).cwiseAbs().maxCoeff(), 1e-10);
    SemigroupOrbit orbit(op, v);
    EXPECT_LE((orbit.at(0.07) - apply_semigroup(op, 0.07, v)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Semigroup, AlignsWithGroundStateAtLongTimes) {
    const auto& op = op_15_128();
    Eigen::VectorXd u0(op.size());
    for (int i = 0; i < op.size(); ++i) u0(i) = i < op.size() / 3 ? 1.0 : 0.0;
    const double gap = op.eigenvalues(op.size() - 1) - op.eigenvalues(op.size() - 2);
    const double t = 20.0 / gap;
    const Eigen::VectorXd u = apply_semigroup(op, t, u0);
    const double angle = std::acos(std::min(1.0, std::abs(u.normalized().dot(op.ground_state()))));
    EXPECT_LT(angle, 1e-3);
}
