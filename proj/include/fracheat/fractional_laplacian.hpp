#pragma once

// Restricted fractional Laplacian on (0, L) with zero exterior data.
//
// The principal-value integral
//   c(alpha) * PV int (u(x+y) - u(x)) / |y|^{1+alpha} dy
// is split at |y| = dx. Inside, u is replaced by its quadratic Taylor
// polynomial built from the centred second difference; outside, u is the
// piecewise-linear interpolant of the nodal values (zero at and beyond the
// endpoints) and the hat functions are integrated against |y|^{-1-alpha}
// exactly. Nodes beyond the interval carry no value, so the exterior tail of
// the kernel ends up only on the diagonal and every row sum is <= 0.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fracheat/errors.hpp"
#include "fracheat/special_functions.hpp"

namespace fracheat {

struct Grid {
    double L = 1.0;
    int n = 0;
    double dx = 0.0;
    double mu = 0.0;
    std::vector<double> nodes;

    double node(int i) const { return nodes[static_cast<std::size_t>(i)]; }
    double boundary_distance(int i) const { return std::min(node(i), L - node(i)); }
    bool in_subinterval(int i) const { return node(i) >= mu - 1e-12 * L && node(i) <= L - mu + 1e-12 * L; }
};

inline Grid build_grid(double L, int n, double mu) {
    if (!(L > 0.0) || !std::isfinite(L)) throw domain_error("build_grid: L must be positive");
    if (n < 1) throw domain_error("build_grid: n must be positive");
    if (!(mu > 0.0 && mu < 0.5 * L)) throw domain_error("build_grid: mu must lie in (0, L/2)");
    Grid g;
    g.L = L;
    g.n = n;
    g.mu = mu;
    g.dx = L / static_cast<double>(n + 1);
    g.nodes.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g.nodes[static_cast<std::size_t>(i)] = static_cast<double>(i + 1) * g.dx;
    return g;
}

/// c(alpha) = 2^alpha Gamma((1+alpha)/2) / (sqrt(pi) |Gamma(-alpha/2)|); symbol -|xi|^alpha.
inline double fractional_laplacian_constant(double alpha) {
    // |Gamma(-a/2)| = Gamma(1 - a/2) / (a/2) for a in (0,2).
    const double abs_gamma_neg = gamma(1.0 - 0.5 * alpha) / (0.5 * alpha);
    return std::pow(2.0, alpha) * gamma(0.5 * (1.0 + alpha)) / (std::sqrt(std::numbers::pi) * abs_gamma_neg);
}

struct OperatorConfig {
    double alpha = 1.5;
    double normalization = 0.0;

    static OperatorConfig make(double alpha) {
        if (!(alpha > 1.0 && alpha < 2.0)) throw domain_error("OperatorConfig: alpha must lie in (1,2)");
        return OperatorConfig{alpha, fractional_laplacian_constant(alpha)};
    }

    void validate() const {
        if (!(alpha > 1.0 && alpha < 2.0)) throw validation_error("OperatorConfig: alpha must lie in (1,2)");
        const double ref = fractional_laplacian_constant(alpha);
        if (!(normalization > 0.0) || std::abs(normalization - ref) > 1e-10 * ref)
            throw validation_error("OperatorConfig: normalization does not match c(alpha)");
    }
};

struct DiscreteOperator {
    double alpha = 0.0;
    double dx = 0.0;
    Eigen::MatrixXd matrix;        // A, symmetric, approximates Delta^{alpha/2}
    Eigen::VectorXd eigenvalues;   // of A, ascending (all negative)
    Eigen::MatrixXd eigenvectors;  // columns orthonormal, same order
    double lambda1 = 0.0;          // -max eigenvalue of A

    int size() const { return static_cast<int>(matrix.rows()); }
    /// Leading eigenvector phi_1 normalised to be positive in sum.
    Eigen::VectorXd ground_state() const {
        Eigen::VectorXd v = eigenvectors.col(eigenvectors.cols() - 1);
        if (v.sum() < 0.0) v = -v;
        return v;
    }
};

namespace detail {

// Weight of the hat function centred at k (k >= 1, in units of dx) against
// s^{-1-alpha} over s >= 1.
inline double hat_tail_weight(double alpha, int k) {
    auto i0 = [alpha](double a, double b) { return (std::pow(a, -alpha) - std::pow(b, -alpha)) / alpha; };
    auto i1 = [alpha](double a, double b) { return (std::pow(b, 1.0 - alpha) - std::pow(a, 1.0 - alpha)) / (1.0 - alpha); };
    const double kd = static_cast<double>(k);
    double w = (kd + 1.0) * i0(kd, kd + 1.0) - i1(kd, kd + 1.0);
    if (k >= 2) w += i1(kd - 1.0, kd) - (kd - 1.0) * i0(kd - 1.0, kd);
    return w;
}

}  // namespace detail

/// Full symmetric eigendecomposition; fills eigenvalues, eigenvectors and lambda1.
inline void spectrum(DiscreteOperator& op) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.matrix);
    if (es.info() != Eigen::Success)
        throw numeric_error("spectrum: eigendecomposition failed for n=" + std::to_string(op.matrix.rows()));
    op.eigenvalues = es.eigenvalues();
    op.eigenvectors = es.eigenvectors();
    if (op.eigenvalues.maxCoeff() >= 0.0)
        throw numeric_error("spectrum: operator is not negative definite (max eigenvalue " +
                            detail::fmt_num(op.eigenvalues.maxCoeff()) + ")");
    op.lambda1 = -op.eigenvalues(op.eigenvalues.size() - 1);
}

inline DiscreteOperator assemble(const OperatorConfig& cfg, const Grid& grid) {
    cfg.validate();
    const int n = grid.n;
    const double alpha = cfg.alpha;
    const double scale = cfg.normalization * std::pow(grid.dx, -alpha);

    std::vector<double> band(static_cast<std::size_t>(n), 0.0);
    band[0] = -scale * (2.0 / (2.0 - alpha) + 2.0 / alpha);
    for (int k = 1; k < n; ++k) band[static_cast<std::size_t>(k)] = scale * detail::hat_tail_weight(alpha, k);
    if (n > 1) band[1] += scale / (2.0 - alpha);

    DiscreteOperator op;
    op.alpha = alpha;
    op.dx = grid.dx;
    op.matrix.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) op.matrix(i, j) = band[static_cast<std::size_t>(std::abs(i - j))];
    spectrum(op);
    return op;
}

inline DiscreteOperator assemble(double alpha, const Grid& grid) { return assemble(OperatorConfig::make(alpha), grid); }

/// P_D(t) = V exp(t Lambda) V^T / dx, the discrete Dirichlet heat kernel.
inline Eigen::MatrixXd heat_kernel_matrix(const DiscreteOperator& op, double t) {
    if (!(t >= 0.0)) throw domain_error("heat_kernel_matrix: t must be nonnegative");
    const Eigen::VectorXd decay = (t * op.eigenvalues.array()).exp().matrix();
    return op.eigenvectors * decay.asDiagonal() * op.eigenvectors.transpose() / op.dx;
}

/// exp(tA) v: the integral operator with kernel P_D(t) acting on nodal samples.
inline Eigen::VectorXd apply_semigroup(const DiscreteOperator& op, double t, const Eigen::VectorXd& v) {
    if (!(t >= 0.0)) throw domain_error("apply_semigroup: t must be nonnegative");
    if (v.size() != op.size()) throw domain_error("apply_semigroup: dimension mismatch");
    const Eigen::VectorXd coeff = op.eigenvectors.transpose() * v;
    return op.eigenvectors * ((t * op.eigenvalues.array()).exp() * coeff.array()).matrix();
}

/// Semigroup orbit t -> exp(tA) u0 with the spectral coefficients cached.
class SemigroupOrbit {
public:
    SemigroupOrbit(const DiscreteOperator& op, const Eigen::VectorXd& u0)
        : op_(&op), coeff_(op.eigenvectors.transpose() * u0) {
        if (u0.size() != op.size()) throw domain_error("SemigroupOrbit: dimension mismatch");
    }

    Eigen::VectorXd at(double t) const {
        return op_->eigenvectors * ((t * op_->eigenvalues.array()).exp() * coeff_.array()).matrix();
    }

private:
    const DiscreteOperator* op_;
    Eigen::VectorXd coeff_;
};

/// Classical second-difference Laplacian with zero Dirichlet data.
inline Eigen::MatrixXd second_difference_laplacian(const Grid& grid) {
    const int n = grid.n;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    const double h2 = grid.dx * grid.dx;
    for (int i = 0; i < n; ++i) {
        a(i, i) = -2.0 / h2;
        if (i > 0) a(i, i - 1) = 1.0 / h2;
        if (i + 1 < n) a(i, i + 1) = 1.0 / h2;
    }
    return a;
}

}  // namespace fracheat
