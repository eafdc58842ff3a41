#pragma once

// Moment estimators over path ensembles and the two regression fits used to
// read growth rates off them: the tail Lyapunov slope of ln E|u|^p against t,
// and the excitation slope of log log Phi_p against log lambda.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "fracheat/errors.hpp"
#include "fracheat/spde.hpp"

namespace fracheat {

struct MomentSpec {
    double p = 2.0;
    std::optional<double> gamma_diag;

    void validate() const {
        if (!(p >= 2.0)) throw validation_error("MomentSpec: p must be >= 2");
    }
};

struct MomentEstimate {
    double value = 0.0;
    double std_error = 0.0;
    long n_effective = 0;
    double log_value = 0.0;  // ln(value); stays finite when value overflows
    double flagged_fraction = 0.0;
};

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    std::size_t points = 0;

    /// Two-sided 95% Student-t interval for the slope.
    std::pair<double, double> ci95() const {
        if (points <= 2) return {slope, slope};
        boost::math::students_t dist(static_cast<double>(points - 2));
        const double q = boost::math::quantile(dist, 0.975);
        return {slope - q * slope_se, slope + q * slope_se};
    }
};

inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw domain_error("least_squares: need >= 2 matched points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
    mx /= n; my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) { sxx += (x[i] - mx) * (x[i] - mx); sxy += (x[i] - mx) * (y[i] - my); }
    if (!(sxx > 0)) throw domain_error("least_squares: abscissae are all equal");
    LinearFit f;
    f.points = n;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (n > 2) {
        double rss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - (f.intercept + f.slope * x[i]);
            rss += r * r;
        }
        f.slope_se = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
    }
    return f;
}

namespace detail {

inline void mean_and_se(const std::vector<double>& v, double& mean, double& se) {
    const double n = static_cast<double>(v.size());
    mean = 0;
    for (double x : v) mean += x;
    mean /= n;
    // identical samples: the two-pass sum would leave roundoff in se
    if (std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end()) {
        if (!v.empty()) mean = v.front();
        se = 0.0;
        return;
    }
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
}

inline MomentEstimate finish(const PathEnsemble& ens, const std::vector<double>& samples) {
    MomentEstimate e;
    e.n_effective = static_cast<long>(samples.size());
    e.flagged_fraction = static_cast<double>(ens.flagged_count) / static_cast<double>(ens.n_paths);
    if (samples.empty()) throw domain_error("moment estimate: every path is flagged");
    mean_and_se(samples, e.value, e.std_error);
    e.log_value = std::log(e.value);
    return e;
}

template <class F>
std::vector<double> per_path(const PathEnsemble& ens, std::size_t ti, F&& f) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(ens.n_paths));
    const Eigen::MatrixXd& snap = ens.snapshots[ti];
    for (long k = 0; k < ens.n_paths; ++k) {
        if (ens.flagged[static_cast<std::size_t>(k)]) continue;
        out.push_back(f(snap.col(k)));
    }
    return out;
}

}  // namespace detail

/// Phi_p(t) = (E dx sum_i |u_i|^p)^{1/p}, stderr by the delta method.
inline MomentEstimate estimate_energy(const PathEnsemble& ens, double t, double p) {
    if (!(p >= 2.0)) throw domain_error("estimate_energy: p must be >= 2");
    const std::size_t ti = ens.time_index(t);
    const double dx = ens.disc.grid.dx;
    auto samples = detail::per_path(ens, ti, [&](const auto& col) { return dx * col.array().abs().pow(p).sum(); });
    MomentEstimate m = detail::finish(ens, samples);
    MomentEstimate e = m;
    e.value = std::pow(m.value, 1.0 / p);
    e.std_error = m.value > 0 ? e.value / (p * m.value) * m.std_error : 0.0;
    e.log_value = m.log_value / p;
    return e;
}

/// E max_i |u_i|^p (no 1/p power).
inline MomentEstimate estimate_sup_moment(const PathEnsemble& ens, double t, double p) {
    if (!(p >= 2.0)) throw domain_error("estimate_sup_moment: p must be >= 2");
    const std::size_t ti = ens.time_index(t);
    auto samples = detail::per_path(ens, ti, [&](const auto& col) { return std::pow(col.array().abs().maxCoeff(), p); });
    return detail::finish(ens, samples);
}

/// Per-node E|u(t, x_i)|^p over unflagged paths.
inline std::vector<MomentEstimate> estimate_node_moments(const PathEnsemble& ens, double t, double p) {
    const std::size_t ti = ens.time_index(t);
    std::vector<MomentEstimate> out;
    for (int i = 0; i < ens.nodes(); ++i) {
        auto samples = detail::per_path(ens, ti, [&](const auto& col) { return std::pow(std::abs(col(i)), p); });
        out.push_back(detail::finish(ens, samples));
    }
    return out;
}

/// min over nodes in [mu, L - mu] of E|u(t, x)|^p.
inline MomentEstimate estimate_inf_subinterval_moment(const PathEnsemble& ens, double t, double p, double mu) {
    if (!(p >= 2.0)) throw domain_error("estimate_inf_subinterval_moment: p must be >= 2");
    Grid g = ens.disc.grid;
    g.mu = mu;
    auto nodes = estimate_node_moments(ens, t, p);
    std::optional<MomentEstimate> best;
    for (int i = 0; i < g.n; ++i)
        if (g.in_subinterval(i) && (!best || nodes[static_cast<std::size_t>(i)].value < best->value))
            best = nodes[static_cast<std::size_t>(i)];
    if (!best) throw domain_error("estimate_inf_subinterval_moment: no grid node in [mu, L - mu]");
    return *best;
}

struct LyapunovFit {
    double gamma_hat = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t points = 0;
};

struct TimedLogMoment {
    double t = 0.0;
    double log_moment = 0.0;
};

/// Slope of ln(moment) against t over the tail window [t_end/2, t_end].
inline LyapunovFit fit_lyapunov_log(std::span<const TimedLogMoment> series) {
    if (series.empty()) throw domain_error("fit_lyapunov: empty series");
    double t_end = -std::numeric_limits<double>::infinity();
    for (const auto& s : series) t_end = std::max(t_end, s.t);
    std::vector<double> x, y;
    for (const auto& s : series)
        if (s.t >= 0.5 * t_end - 1e-12 * std::abs(t_end)) {
            if (!std::isfinite(s.log_moment)) throw domain_error("fit_lyapunov: non-finite log moment");
            x.push_back(s.t);
            y.push_back(s.log_moment);
        }
    if (x.size() < 5) throw domain_error("fit_lyapunov: fewer than 5 points in the tail window");
    const LinearFit f = least_squares(x, y);
    const auto [lo, hi] = f.ci95();
    return {f.slope, lo, hi, f.points};
}

/// (sup_t e^{gamma t} moment(t))^{1/p} over a finite horizon, from ln moments.
inline double weighted_sup_norm(std::span<const TimedLogMoment> series, const MomentSpec& spec) {
    spec.validate();
    if (series.empty()) throw domain_error("weighted_sup_norm: empty series");
    const double g = spec.gamma_diag.value_or(0.0);
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& s : series) best = std::max(best, g * s.t + s.log_moment);
    return std::exp(best / spec.p);
}

struct TimedMoment {
    double t = 0.0;
    double moment = 0.0;
};

inline LyapunovFit fit_lyapunov(std::span<const TimedMoment> series) {
    std::vector<TimedLogMoment> logs;
    for (const auto& s : series) {
        if (!(s.moment > 0.0)) throw domain_error("fit_lyapunov: moments must be positive (t=" + std::to_string(s.t) + ")");
        logs.push_back({s.t, std::log(s.moment)});
    }
    return fit_lyapunov_log(logs);
}

struct ExcitationPoint {
    double lambda = 0.0;
    double log_phi = 0.0;  // ln Phi_p(t, lambda)
};

struct ExcitationFit {
    double e_hat = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::vector<double> lambdas_used;
    double intercept = 0.0;  // of log log Phi = intercept + e_hat log lambda
};

/// Slope of log log Phi_p against log lambda over the largest-lambda half of a geometric grid.
inline ExcitationFit fit_excitation(std::span<const ExcitationPoint> table) {
    if (table.size() < 5) throw domain_error("fit_excitation: need at least 5 lambda values");
    std::vector<ExcitationPoint> pts(table.begin(), table.end());
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.lambda < b.lambda; });
    if (!(pts.front().lambda > 0.0)) throw domain_error("fit_excitation: lambda values must be positive");
    const double ratio = pts[1].lambda / pts[0].lambda;
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (!(ratio > 1.0) || std::abs(pts[i].lambda / pts[i - 1].lambda - ratio) > 1e-6 * ratio)
            throw domain_error("fit_excitation: lambda grid must be geometric and increasing");

    const std::size_t keep = (pts.size() + 1) / 2;
    std::vector<double> x, y;
    ExcitationFit fit;
    for (std::size_t i = pts.size() - keep; i < pts.size(); ++i) {
        if (!(pts[i].log_phi > 1.0))
            throw domain_error("fit_excitation: Phi_p <= e at lambda = " + std::to_string(pts[i].lambda));
        x.push_back(std::log(pts[i].lambda));
        y.push_back(std::log(pts[i].log_phi));
        fit.lambdas_used.push_back(pts[i].lambda);
    }
    const LinearFit f = least_squares(x, y);
    fit.e_hat = f.slope;
    fit.intercept = f.intercept;
    std::tie(fit.ci_low, fit.ci_high) = f.ci95();
    return fit;
}

struct SweepRow {
    double lambda = 0.0;
    double t = 0.0;
    MomentEstimate phi_p;
    MomentEstimate sup_moment;
    MomentEstimate inf_moment;
    long n_effective = 0;
    long flagged = 0;
};

struct SweepResult {
    double p = 2.0;
    std::vector<SweepRow> rows;
    std::optional<ExcitationFit> excitation;
    std::vector<std::pair<double, LyapunovFit>> lyapunov;  // per lambda

    void sort_rows() {
        std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
            return a.lambda != b.lambda ? a.lambda < b.lambda : a.t < b.t;
        });
    }
};

/// Appends one row per snapshot time of an ensemble.
inline void append_ensemble_rows(SweepResult& out, const PathEnsemble& ens, double p, double mu) {
    for (double t : ens.times) {
        SweepRow r;
        r.lambda = ens.params.lambda;
        r.t = t;
        r.phi_p = estimate_energy(ens, t, p);
        r.sup_moment = estimate_sup_moment(ens, t, p);
        r.inf_moment = estimate_inf_subinterval_moment(ens, t, p, mu);
        r.n_effective = r.phi_p.n_effective;
        r.flagged = ens.flagged_count;
        out.rows.push_back(r);
    }
}

}  // namespace fracheat
