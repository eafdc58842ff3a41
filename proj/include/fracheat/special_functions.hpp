#pragma once

// Gamma, Mittag-Leffler E_beta and the companion F_beta(z) = E_beta(z^beta).
//
// E_beta grows like exp(z^{1/beta}) and overflows a double long before the
// arguments used by the moment bounds, so every routine has a log-domain twin.
// Positive arguments are summed in log space around the dominant term of the
// series; beyond the switch threshold the large-argument expansion
//
//   E_beta(z) = exp(z^{1/beta}) / beta - sum_{k=1..q} z^{-k} / Gamma(1 - beta k)
//
// is used instead.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <string>

#include "fracheat/errors.hpp"

namespace fracheat {

struct MLEvalConfig {
    long series_terms_max = 1'000'000;
    double switch_threshold = 12.0;
    int asymptotic_order_q = 3;

    void validate() const {
        if (series_terms_max < 16) throw validation_error("MLEvalConfig: series_terms_max must be >= 16");
        if (!(switch_threshold > 1.0)) throw validation_error("MLEvalConfig: switch_threshold must be > 1");
        if (asymptotic_order_q < 1) throw validation_error("MLEvalConfig: asymptotic_order_q must be >= 1");
    }
};

namespace testing {
// Negative-control hook: perturbs the leading Lanczos coefficient so that the
// self-test can prove it notices a broken Gamma.
inline std::atomic<bool> gamma_fault{false};
inline void set_gamma_fault(bool on) { gamma_fault.store(on, std::memory_order_relaxed); }
}  // namespace testing

namespace detail {

// Lanczos approximation, g = 7, nine terms.
inline constexpr double lanczos_g = 7.0;
inline constexpr std::array<double, 9> lanczos_coef = {
    0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
    771.32342877765313,      -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};

inline double lanczos_series(double xm1) {
    double a = lanczos_coef[0];
    if (testing::gamma_fault.load(std::memory_order_relaxed)) a *= 1.0 + 1e-6;
    for (std::size_t i = 1; i < lanczos_coef.size(); ++i) a += lanczos_coef[i] / (xm1 + static_cast<double>(i));
    return a;
}

// log Gamma(x) for x >= 0.5.
inline double log_gamma_lanczos(double x) {
    const double xm1 = x - 1.0;
    const double t = xm1 + lanczos_g + 0.5;
    return 0.5 * std::log(2.0 * std::numbers::pi) + (xm1 + 0.5) * std::log(t) - t +
           std::log(lanczos_series(xm1));
}

inline std::string fmt_num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace detail

/// Gamma(x) for x > 0.
inline double gamma(double x) {
    if (!std::isfinite(x) || x <= 0.0) throw domain_error("gamma: argument must be positive and finite, got " + detail::fmt_num(x));
    if (x < 0.5) {
        // Reflection keeps the Lanczos sum in its accurate range.
        const double g1mx = std::exp(detail::log_gamma_lanczos(1.0 - x));
        return std::numbers::pi / (std::sin(std::numbers::pi * x) * g1mx);
    }
    return std::exp(detail::log_gamma_lanczos(x));
}

/// log Gamma(x) for x > 0.
inline double log_gamma(double x) {
    if (!std::isfinite(x) || x <= 0.0) throw domain_error("log_gamma: argument must be positive and finite, got " + detail::fmt_num(x));
    if (x < 0.5) return std::log(std::numbers::pi / std::sin(std::numbers::pi * x)) - detail::log_gamma_lanczos(1.0 - x);
    return detail::log_gamma_lanczos(x);
}

/// 1/Gamma(x) for any finite real x; zero at the poles.
inline double reciprocal_gamma(double x) {
    if (!std::isfinite(x)) throw domain_error("reciprocal_gamma: non-finite argument");
    if (x > 0.0) return 1.0 / gamma(x);
    if (x == std::floor(x)) return 0.0;
    return std::sin(std::numbers::pi * x) * gamma(1.0 - x) / std::numbers::pi;
}

namespace detail {

inline void check_beta(double beta, const char* who) {
    if (!(beta > 0.0 && beta < 2.0)) throw domain_error(std::string(who) + ": beta must lie in (0,2), got " + fmt_num(beta));
}

inline double log1m_exp_diff(double a, double b) {
    // log(exp(a) - exp(b)) for a >= b.
    if (b == -std::numeric_limits<double>::infinity()) return a;
    return a + std::log(-std::expm1(b - a));
}

/// log E_beta(z), z > 0, by summing the terms within exp(-50) of the largest.
inline double log_ml_series(double beta, double z, const MLEvalConfig& cfg) {
    const double lz = std::log(z);
    auto term = [&](long n) { return static_cast<double>(n) * lz - log_gamma(static_cast<double>(n) * beta + 1.0); };

    // Concave in n; start near the stationary point beta*psi(n beta + 1) = log z.
    long peak = 0;
    if (z > 1.0) {
        const double guess = (std::pow(z, 1.0 / beta) - 0.5) / beta;
        peak = guess > 0.0 ? static_cast<long>(guess) : 0;
    }
    double lpeak = term(peak);
    long walked = 0;
    while (true) {
        const double up = term(peak + 1);
        if (up > lpeak) { ++peak; lpeak = up; }
        else if (peak > 0 && term(peak - 1) > lpeak) { --peak; lpeak = term(peak); }
        else break;
        if (++walked > cfg.series_terms_max) throw precision_error("mittag_leffler: could not locate dominant series term");
    }

    constexpr double cutoff = 50.0;
    double sum = 1.0, comp = 0.0;
    long used = 1;
    auto add = [&](double v) {
        const double t = sum + v;
        comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
        sum = t;
    };
    for (long n = peak - 1; n >= 0; --n) {
        const double d = term(n) - lpeak;
        if (d < -cutoff) break;
        add(std::exp(d));
        if (++used > cfg.series_terms_max) throw precision_error("mittag_leffler: series did not converge within series_terms_max");
    }
    for (long n = peak + 1;; ++n) {
        const double d = term(n) - lpeak;
        if (d < -cutoff) break;
        add(std::exp(d));
        if (++used > cfg.series_terms_max) throw precision_error("mittag_leffler: series did not converge within series_terms_max");
    }
    return lpeak + std::log(sum + comp);
}

/// log E_beta(z) from the large-argument expansion, z > 0.
inline double log_ml_asymptotic(double beta, double z, const MLEvalConfig& cfg) {
    const double expo = std::pow(z, 1.0 / beta);
    double s = 0.0;
    for (int k = 1; k <= cfg.asymptotic_order_q; ++k) s += std::pow(z, -k) * reciprocal_gamma(1.0 - beta * k);
    // E = exp(expo)/beta * (1 - beta * s * exp(-expo))
    const double corr = beta * s * std::exp(-expo);
    if (!(corr < 1.0)) throw precision_error("mittag_leffler: asymptotic expansion used outside its range");
    return expo - std::log(beta) + std::log1p(-corr);
}

/// E_beta(z) for z < 0 by the alternating series.
inline double ml_negative(double beta, double z, const MLEvalConfig& cfg) {
    if (-z >= cfg.switch_threshold && beta < 1.0) {
        double s = 0.0;
        for (int k = 1; k <= cfg.asymptotic_order_q; ++k) s -= std::pow(z, -k) * reciprocal_gamma(1.0 - beta * k);
        return s;
    }
    // Extended precision: each term carries the rounding of exp(log term).
    const long double la = std::log(static_cast<long double>(-z));
    long double sum = 1.0L, comp = 0.0L, biggest = 1.0L, prev = 1.0L;
    for (long n = 1; n <= cfg.series_terms_max; ++n) {
        const long double nl = static_cast<long double>(n);
        const long double mag = std::exp(nl * la - std::lgamma(nl * static_cast<long double>(beta) + 1.0L));
        const long double v = (n % 2 == 0) ? mag : -mag;
        const long double t = sum + v;
        comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
        sum = t;
        biggest = std::max(biggest, mag);
        if (mag < prev && mag <= 1e-20L * std::abs(sum + comp)) {
            const double result = static_cast<double>(sum + comp);
            if (biggest > 1e10L * std::abs(sum + comp))
                throw precision_error("mittag_leffler: cancellation in the alternating series is too severe");
            return result;
        }
        prev = mag;
    }
    throw precision_error("mittag_leffler: series did not converge within series_terms_max");
}

}  // namespace detail

/// log E_beta(z) for z >= 0 (finite for every finite z).
inline double log_mittag_leffler(double beta, double z, const MLEvalConfig& cfg = {}) {
    detail::check_beta(beta, "log_mittag_leffler");
    cfg.validate();
    if (!std::isfinite(z) || z < 0.0) throw domain_error("log_mittag_leffler: z must be finite and nonnegative");
    if (z == 0.0) return 0.0;
    if (z >= cfg.switch_threshold) return detail::log_ml_asymptotic(beta, z, cfg);
    return detail::log_ml_series(beta, z, cfg);
}

/// E_beta(z) for real z; returns +inf when the value exceeds the double range.
inline double mittag_leffler(double beta, double z, const MLEvalConfig& cfg = {}) {
    detail::check_beta(beta, "mittag_leffler");
    cfg.validate();
    if (!std::isfinite(z)) throw domain_error("mittag_leffler: z must be finite");
    if (z == 0.0) return 1.0;
    if (z < 0.0) return detail::ml_negative(beta, z, cfg);
    return std::exp(log_mittag_leffler(beta, z, cfg));
}

/// log F_beta(z) = log E_beta(z^beta), z >= 0.
inline double log_f_beta(double beta, double z, const MLEvalConfig& cfg = {}) {
    if (!(beta > 0.0)) throw domain_error("f_beta: beta must be positive");
    if (!std::isfinite(z) || z < 0.0) throw domain_error("f_beta: z must be finite and nonnegative, got " + detail::fmt_num(z));
    return log_mittag_leffler(beta, std::pow(z, beta), cfg);
}

/// F_beta(z) = sum_n z^{n beta} / Gamma(n beta + 1), z >= 0.
inline double f_beta(double beta, double z, const MLEvalConfig& cfg = {}) {
    return std::exp(log_f_beta(beta, z, cfg));
}

/// Smallest c with E_tau(omega t^tau) <= c exp(omega^{1/tau} t) on the grid.
inline double ml_exponential_bound_check(double tau, double omega, std::span<const double> t_grid,
                                         const MLEvalConfig& cfg = {}) {
    detail::check_beta(tau, "ml_exponential_bound_check");
    if (!(omega > 0.0)) throw domain_error("ml_exponential_bound_check: omega must be positive");
    if (t_grid.empty()) throw domain_error("ml_exponential_bound_check: empty grid");
    if (!std::is_sorted(t_grid.begin(), t_grid.end())) throw domain_error("ml_exponential_bound_check: grid must be sorted");
    const double rate = std::pow(omega, 1.0 / tau);
    double worst = -std::numeric_limits<double>::infinity();
    for (double t : t_grid) {
        if (t < 0.0) throw domain_error("ml_exponential_bound_check: negative time in grid");
        const double l = log_mittag_leffler(tau, omega * std::pow(t, tau), cfg) - rate * t;
        worst = std::max(worst, l);
    }
    return std::exp(worst);
}

}  // namespace fracheat
