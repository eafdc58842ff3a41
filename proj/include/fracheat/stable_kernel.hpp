#pragma once

// Free-space heat kernel of Delta^{alpha/2} on the line (symbol exp(-t|xi|^alpha))
// and its comparison with the discrete Dirichlet kernel.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fracheat/errors.hpp"
#include "fracheat/fractional_laplacian.hpp"
#include "fracheat/special_functions.hpp"

namespace fracheat {

namespace detail {

// 10-point Gauss-Legendre on [-1, 1].
inline constexpr std::array<double, 5> gl10_x = {0.1488743389816312, 0.4333953941292472, 0.6794095682990244,
                                                  0.8650633666889845, 0.9739065285171717};
inline constexpr std::array<double, 5> gl10_w = {0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
                                                  0.1494513491505806, 0.0666713443086881};

template <class F>
double gauss_legendre_10(F&& f, double a, double b) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = 0.0;
    for (std::size_t i = 0; i < gl10_x.size(); ++i) s += gl10_w[i] * (f(c - h * gl10_x[i]) + f(c + h * gl10_x[i]));
    return s * h;
}

// (1/pi) int_0^inf cos(xi r) exp(-xi^alpha) dxi with panels of width `width`.
inline double cosine_inversion(double alpha, double r, double width) {
    const double xi_max = std::pow(-std::log(1e-14), 1.0 / alpha);
    auto f = [alpha, r](double xi) { return std::cos(xi * r) * std::exp(-std::pow(xi, alpha)); };
    double s = 0.0;
    // xi^alpha is not smooth at the origin: grade the first panel geometrically.
    double lo = width * std::pow(0.5, 30);
    s += gauss_legendre_10(f, 0.0, lo);
    while (lo < width) {
        s += gauss_legendre_10(f, lo, 2.0 * lo);
        lo *= 2.0;
    }
    for (double a = width; a < xi_max; a += width) s += gauss_legendre_10(f, a, std::min(a + width, xi_max));
    return s / std::numbers::pi;
}

}  // namespace detail

/// Density of the standardised symmetric stable law at distance r (t = 1).
inline double standard_stable_density(double alpha, double r) {
    if (!(alpha >= 1.0 && alpha <= 2.0)) throw domain_error("stable_density: alpha must lie in [1,2]");
    r = std::abs(r);
    const double width = r > 0.0 ? std::min(0.25, 0.5 * std::numbers::pi / r) : 0.25;
    const double coarse = detail::cosine_inversion(alpha, r, width);
    const double fine = detail::cosine_inversion(alpha, r, 0.5 * width);
    if (std::abs(coarse - fine) > 1e-9 * std::abs(fine) + 1e-15)
        throw precision_error("stable_density: cosine inversion did not converge at r=" + detail::fmt_num(r));
    return fine;
}

/// p(t, 0, r) = t^{-1/alpha} g_alpha(t^{-1/alpha} r).
inline double stable_density(double alpha, double t, double r) {
    if (!(t > 0.0) || !std::isfinite(t)) throw domain_error("stable_density: t must be positive");
    if (!(r >= 0.0)) throw domain_error("stable_density: r must be nonnegative");
    const double s = std::pow(t, -1.0 / alpha);
    return s * standard_stable_density(alpha, s * r);
}

/// Leading terms of the large-r expansion of g_alpha integrated over (R, inf).
inline double stable_tail_mass(double alpha, double R, int terms = 3) {
    double m = 0.0;
    double kfact = 1.0;
    for (int k = 1; k <= terms; ++k) {
        kfact *= k;
        const double ka = k * alpha;
        const double coef = (k % 2 == 1 ? 1.0 : -1.0) * gamma(ka + 1.0) * std::sin(k * std::numbers::pi * alpha / 2.0) /
                            (std::numbers::pi * kfact);
        m += coef * std::pow(R, -ka) / ka;
    }
    return m;
}

struct StableKernelTable {
    double alpha = 0.0;
    std::vector<double> r_grid;
    std::vector<double> g_values;

    /// 2 * trapezoid over the table plus the analytic tail beyond the last node.
    double total_mass() const {
        double s = 0.0;
        for (std::size_t i = 1; i < r_grid.size(); ++i)
            s += 0.5 * (g_values[i] + g_values[i - 1]) * (r_grid[i] - r_grid[i - 1]);
        return 2.0 * (s + stable_tail_mass(alpha, r_grid.back()));
    }
};

inline StableKernelTable make_stable_kernel_table(double alpha, double r_max, int count) {
    if (count < 2 || !(r_max > 0.0)) throw domain_error("make_stable_kernel_table: need count >= 2 and r_max > 0");
    StableKernelTable tab;
    tab.alpha = alpha;
    for (int i = 0; i < count; ++i) {
        const double r = r_max * i / (count - 1);
        tab.r_grid.push_back(r);
        tab.g_values.push_back(standard_stable_density(alpha, r));
    }
    return tab;
}

struct EnvelopeShape {
    double lower_shape = 0.0;
    double upper_shape = 0.0;
};

/// t / (t^{1/alpha} + r)^{1+alpha}, the two-sided comparison shape with unit constants.
inline EnvelopeShape comparison_envelope(double alpha, double t, double r) {
    if (!(t > 0.0)) throw domain_error("comparison_envelope: t must be positive");
    const double s = t / std::pow(std::pow(t, 1.0 / alpha) + std::abs(r), 1.0 + alpha);
    return {s, s};
}

struct ComparisonConstants {
    double c1 = 0.0;
    double c2 = 0.0;
};

/// Realised constants c1 = min p/shape, c2 = max p/shape on a scan grid.
inline ComparisonConstants fit_comparison_constants(double alpha, std::span<const double> times,
                                                    std::span<const double> radii) {
    ComparisonConstants c{std::numeric_limits<double>::infinity(), 0.0};
    for (double t : times)
        for (double r : radii) {
            const double ratio = stable_density(alpha, t, r) / comparison_envelope(alpha, t, r).lower_shape;
            c.c1 = std::min(c.c1, ratio);
            c.c2 = std::max(c.c2, ratio);
        }
    return c;
}

struct DominationReport {
    double max_violation = 0.0;   // max_ij P_D(t)_ij - p(t, x_i, x_j)
    double max_free = 0.0;        // max p over the node pairs
    double max_dirichlet = 0.0;
    double min_dirichlet = 0.0;
};

/// Compares P_D(t) entrywise with the free kernel p(t, x_i, x_j).
inline DominationReport check_domination(const DiscreteOperator& op, const Grid& grid, const OperatorConfig& cfg,
                                         double t) {
    if (!(t > 0.0)) throw domain_error("check_domination: t must be positive");
    const Eigen::MatrixXd pd = heat_kernel_matrix(op, t);
    const int n = grid.n;
    std::vector<double> free(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) free[static_cast<std::size_t>(k)] = stable_density(cfg.alpha, t, k * grid.dx);

    DominationReport rep;
    rep.max_violation = -std::numeric_limits<double>::infinity();
    rep.max_free = free[0];
    rep.max_dirichlet = pd.maxCoeff();
    rep.min_dirichlet = pd.minCoeff();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            rep.max_violation = std::max(rep.max_violation, pd(i, j) - free[static_cast<std::size_t>(std::abs(i - j))]);
    return rep;
}

/// int p(s, x, y)^2 dy = p(2s, 0, 0) = C s^{-1/alpha}; returns C.
inline double collision_constant(double alpha) {
    return std::pow(2.0, -1.0 / alpha) * standard_stable_density(alpha, 0.0);
}

}  // namespace fracheat
