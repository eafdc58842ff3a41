#pragma once

// Deterministic second-moment machinery.
//
//  * The renewal equation v = a + b int_0^t (t-s)^{beta-1} v(s) ds, solved by
//    product trapezoidal quadrature and in closed form a F_beta(theta t).
//  * The grid oracle: for linear sigma the nodal second moment m = E u^2 of
//    the space-discrete equation solves the closed Volterra system
//      m(t) = g(t)^2 + lambda^2 L_sigma^2 int_0^t Q(t-s) m(s) ds,
//      Q(tau)_il = P_D(tau)_il^2 dx,  g(t) = exp(tA) u0,
//    marched with m piecewise linear and Q integrated by Gauss-Legendre.
//  * The local oracle: the continuum reduction that keeps only the on-diagonal
//    collision density int p(tau,x,y)^2 dy = C tau^{-1/alpha}. Each node then
//    obeys a scalar renewal equation whose resolvent is theta F_beta'(theta .)
//    with beta = 1 - 1/alpha, and the solution is carried in log space, which
//    is what makes lambda in the hundreds tractable.
//  * The Mittag-Leffler lower and exponential upper envelopes and the
//    fit-then-verify procedure for their constants.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fracheat/errors.hpp"
#include "fracheat/fractional_laplacian.hpp"
#include "fracheat/moments.hpp"
#include "fracheat/spde.hpp"
#include "fracheat/special_functions.hpp"
#include "fracheat/stable_kernel.hpp"

namespace fracheat {

// ---------------------------------------------------------------------------
// Renewal equation

struct RenewalProblem {
    std::function<double(double)> a = [](double) { return 1.0; };
    double b = 0.0;
    double beta = 1.0;

    static RenewalProblem constant(double a_const, double b, double beta) {
        return RenewalProblem{[a_const](double) { return a_const; }, b, beta};
    }

    /// theta = (b Gamma(beta))^{1/beta}
    double theta() const {
        if (!(beta > 0.0)) throw domain_error("RenewalProblem: beta must be positive");
        return b == 0.0 ? 0.0 : std::pow(b * gamma(beta), 1.0 / beta);
    }
};

struct TimeSeries {
    std::vector<double> t;
    std::vector<double> v;
};

/// Product-trapezoidal solution of the renewal equation with equality.
inline TimeSeries volterra_lower_solve(const RenewalProblem& prob, double T, int steps) {
    if (!(prob.beta > 0.0)) throw domain_error("volterra_lower_solve: beta must be positive");
    if (!(prob.b >= 0.0)) throw domain_error("volterra_lower_solve: b must be nonnegative");
    if (!(T > 0.0)) throw domain_error("volterra_lower_solve: T must be positive");
    if (steps < 64) throw domain_error("volterra_lower_solve: need steps >= 64");

    const double beta = prob.beta;
    const double h = T / steps;
    const double c = prob.b * std::pow(h, beta) / (beta * (beta + 1.0));
    if (!(c < 1.0)) throw precision_error("volterra_lower_solve: step too coarse for b and beta");

    // w[d] = (d+1)^{b+1} + (d-1)^{b+1} - 2 d^{b+1}, d = k - j >= 1
    std::vector<double> pw(static_cast<std::size_t>(steps) + 2);
    for (std::size_t d = 0; d < pw.size(); ++d) pw[d] = std::pow(static_cast<double>(d), beta + 1.0);
    std::vector<double> w(static_cast<std::size_t>(steps) + 1, 0.0);
    for (int d = 1; d <= steps; ++d) w[static_cast<std::size_t>(d)] = pw[d + 1] + pw[d - 1] - 2.0 * pw[d];

    TimeSeries out;
    out.t.resize(static_cast<std::size_t>(steps) + 1);
    out.v.resize(static_cast<std::size_t>(steps) + 1);
    out.t[0] = 0.0;
    out.v[0] = prob.a(0.0);
    for (int k = 1; k <= steps; ++k) {
        const double tk = k * h;
        const double kd = k;
        double acc = (pw[k - 1] - (kd - 1.0 - beta) * std::pow(kd, beta)) * out.v[0];
        for (int j = 1; j < k; ++j) acc += w[static_cast<std::size_t>(k - j)] * out.v[static_cast<std::size_t>(j)];
        out.t[static_cast<std::size_t>(k)] = tk;
        out.v[static_cast<std::size_t>(k)] = (prob.a(tk) + c * acc) / (1.0 - c);
    }
    return out;
}

/// log(a F_beta(theta t)), theta = (b Gamma(beta))^{1/beta}.
inline double log_renewal_closed_form(double a_const, double b, double beta, double t, const MLEvalConfig& cfg = {}) {
    if (!(a_const >= 0.0)) throw domain_error("renewal_closed_form: a must be nonnegative");
    if (!(t >= 0.0)) throw domain_error("renewal_closed_form: t must be nonnegative");
    const double theta = RenewalProblem::constant(a_const, b, beta).theta();
    return std::log(a_const) + (theta == 0.0 ? 0.0 : log_f_beta(beta, theta * t, cfg));
}

inline double renewal_closed_form(double a_const, double b, double beta, double t, const MLEvalConfig& cfg = {}) {
    if (a_const == 0.0) return 0.0;
    return std::exp(log_renewal_closed_form(a_const, b, beta, t, cfg));
}

// ---------------------------------------------------------------------------
// Oracle tables

namespace detail {
inline double log_sum_exp(std::span<const double> v) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double s = 0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}
}  // namespace detail

/// Second moment m(t, x) on (time x node), stored as ln m.
struct OracleTable {
    double lambda = 0.0;
    double alpha = 0.0;
    Grid grid;
    std::vector<double> times;
    Eigen::MatrixXd log_m;  // rows: times, cols: nodes

    double log_sup(std::size_t k) const { return log_m.row(static_cast<Eigen::Index>(k)).maxCoeff(); }

    double log_inf_subinterval(std::size_t k) const {
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < grid.n; ++i)
            if (grid.in_subinterval(i)) best = std::min(best, log_m(static_cast<Eigen::Index>(k), i));
        if (!std::isfinite(best) && best > 0) throw domain_error("OracleTable: no node in [mu, L - mu]");
        return best;
    }

    /// ln of dx sum_i m_i, i.e. ln Phi_2^2.
    double log_energy(std::size_t k) const {
        std::vector<double> v(static_cast<std::size_t>(grid.n));
        for (int i = 0; i < grid.n; ++i) v[static_cast<std::size_t>(i)] = log_m(static_cast<Eigen::Index>(k), i);
        return detail::log_sum_exp(v) + std::log(grid.dx);
    }

    double log_phi2(std::size_t k) const { return 0.5 * log_energy(k); }

    std::size_t time_index(double t) const {
        std::size_t best = 0;
        for (std::size_t k = 1; k < times.size(); ++k)
            if (std::abs(times[k] - t) < std::abs(times[best] - t)) best = k;
        const double tol = times.size() > 1 ? 0.5 * (times[1] - times[0]) : 0.0;
        if (std::abs(times[best] - t) > tol * (1 + 1e-9)) throw domain_error("OracleTable: time not on the oracle grid");
        return best;
    }

    std::vector<TimedLogMoment> sup_series() const {
        std::vector<TimedLogMoment> s;
        for (std::size_t k = 0; k < times.size(); ++k) s.push_back({times[k], log_sup(k)});
        return s;
    }

    std::vector<TimedLogMoment> node_series(int i) const {
        std::vector<TimedLogMoment> s;
        for (std::size_t k = 0; k < times.size(); ++k) s.push_back({times[k], log_m(static_cast<Eigen::Index>(k), i)});
        return s;
    }
};

// ---------------------------------------------------------------------------
// Grid oracle

/// Time-integrated kernel moments for the grid oracle; independent of lambda.
class GridOracleKernel {
public:
    GridOracleKernel(const DiscreteOperator& op, const Grid& grid, double T, int steps)
        : op_(&op), grid_(grid), h_(T / steps), steps_(steps) {
        if (!(T > 0.0) || steps < 1) throw domain_error("second_moment_volterra: need T > 0 and steps >= 1");
        const int n = grid.n;
        m0_.assign(static_cast<std::size_t>(steps), Eigen::MatrixXd::Zero(n, n));
        m1_.assign(static_cast<std::size_t>(steps), Eigen::MatrixXd::Zero(n, n));
        const double fastest = 2.0 * (-op.eigenvalues(0));
        Eigen::VectorXd decay(n);
        for (int e = 0; e < steps; ++e) {
            // Subdivide where the stiffest modes still matter.
            const bool stiff = fastest * e * h_ < 60.0;
            const int nsub = stiff ? std::max(1, static_cast<int>(std::ceil(fastest * h_ / 1.5))) : 1;
            const double sub = h_ / nsub;
            for (int s = 0; s < nsub; ++s) {
                const double a = e * h_ + s * sub;
                const double c = a + 0.5 * sub, half = 0.5 * sub;
                for (std::size_t q = 0; q < detail::gl10_x.size(); ++q)
                    for (int sign : {-1, 1}) {
                        const double tau = c + sign * half * detail::gl10_x[q];
                        const double wq = detail::gl10_w[q] * half;
                        decay = (tau * op.eigenvalues.array()).exp().matrix();
                        Eigen::MatrixXd e_ta = op.eigenvectors * decay.asDiagonal() * op.eigenvectors.transpose();
                        Eigen::MatrixXd qm = e_ta.array().square().matrix() / grid.dx;
                        const double frac = tau / h_ - e;
                        m0_[static_cast<std::size_t>(e)] += wq * qm;
                        m1_[static_cast<std::size_t>(e)] += (wq * frac) * qm;
                    }
            }
        }
    }

    double step() const { return h_; }
    int steps() const { return steps_; }

    /// m(t_k) for linear sigma; throws if lambda is too large for the step.
    OracleTable solve(double lambda, double L_sigma, const Eigen::VectorXd& u0) const {
        const int n = grid_.n;
        const int K = steps_;
        const double c = lambda * lambda * L_sigma * L_sigma;
        SemigroupOrbit orbit(*op_, u0);

        // B_0 acts on the unknown m_k (falling half-hat of the newest node).
        const Eigen::MatrixXd b0 = m0_[0] - m1_[0];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c * 0.5 * (b0 + b0.transpose()), Eigen::EigenvaluesOnly);
        if (es.eigenvalues().maxCoeff() >= 0.9)
            throw precision_error("second_moment_volterra: time step too coarse for lambda = " + detail::fmt_num(lambda));
        const Eigen::PartialPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd::Identity(n, n) - c * b0);

        std::vector<Eigen::VectorXd> m(static_cast<std::size_t>(K) + 1);
        m[0] = u0.array().square().matrix();
        Eigen::VectorXd rhs(n);
        for (int k = 1; k <= K; ++k) {
            rhs = orbit.at(k * h_).array().square().matrix();
            Eigen::VectorXd acc = m1_[static_cast<std::size_t>(k - 1)] * m[0];
            for (int j = 1; j < k; ++j) {
                const auto d = static_cast<std::size_t>(k - j);
                acc.noalias() += (m1_[d - 1] + m0_[d] - m1_[d]) * m[static_cast<std::size_t>(j)];
            }
            rhs += c * acc;
            m[static_cast<std::size_t>(k)] = lu.solve(rhs);
            if (!m[static_cast<std::size_t>(k)].allFinite() || (m[static_cast<std::size_t>(k)].array() <= 0.0).any())
                throw precision_error("second_moment_volterra: non-positive or non-finite moment at step " + std::to_string(k));
        }

        OracleTable tab;
        tab.lambda = lambda;
        tab.alpha = op_->alpha;
        tab.grid = grid_;
        tab.log_m.resize(K + 1, n);
        for (int k = 0; k <= K; ++k) {
            tab.times.push_back(k * h_);
            tab.log_m.row(k) = m[static_cast<std::size_t>(k)].array().log().matrix().transpose();
        }
        return tab;
    }

private:
    const DiscreteOperator* op_;
    Grid grid_;
    double h_;
    int steps_;
    std::vector<Eigen::MatrixXd> m0_;  // int_{e h}^{(e+1) h} Q
    std::vector<Eigen::MatrixXd> m1_;  // int_{e h}^{(e+1) h} Q (tau/h - e)
};

inline OracleTable second_moment_volterra(const ModelParams& params, const DiscreteOperator& op, const Grid& grid,
                                          double T, int steps) {
    if (params.sigma.kind != SigmaSpec::Kind::linear)
        throw domain_error("second_moment_volterra: the closed second-moment equation needs linear sigma");
    GridOracleKernel kernel(op, grid, T, steps);
    return kernel.solve(params.lambda, params.sigma.L_sigma, params.u0);
}

/// Exact E u_k^2 of the semi-implicit scheme (linear sigma) via the covariance recursion
///   C+ = R (C + lambda^2 L^2 dt/dx diag(C)) R^T.
inline OracleTable scheme_second_moment(const ModelParams& params, const DiscreteOperator& op, const Grid& grid,
                                        double dt, int steps) {
    if (params.sigma.kind != SigmaSpec::Kind::linear)
        throw domain_error("scheme_second_moment: needs linear sigma");
    Stepper stepper(op, dt);
    const Eigen::MatrixXd& R = stepper.resolvent();
    const double c = params.lambda * params.lambda * params.sigma.L_sigma * params.sigma.L_sigma * dt / grid.dx;
    Eigen::MatrixXd C = params.u0 * params.u0.transpose();

    OracleTable tab;
    tab.lambda = params.lambda;
    tab.alpha = op.alpha;
    tab.grid = grid;
    tab.log_m.resize(steps + 1, grid.n);
    tab.times.push_back(0.0);
    tab.log_m.row(0) = C.diagonal().array().log().matrix().transpose();
    for (int k = 1; k <= steps; ++k) {
        C.diagonal() *= (1.0 + c);
        C = R * C * R.transpose();
        tab.times.push_back(k * dt);
        tab.log_m.row(k) = C.diagonal().array().log().matrix().transpose();
    }
    return tab;
}

// ---------------------------------------------------------------------------
// Local (continuum) oracle

struct LocalOracleOptions {
    int steps = 2048;        // uniform cells on [0, T]
    int output_every = 128;  // emit every k-th time
    int grading_levels = 40; // geometric refinement of the first cell
    std::optional<double> killing_rate;  // collision decay rate; defaults to 2 lambda1
    MLEvalConfig ml;
};

/// Renewal rate theta = (lambda^2 L_sigma^2 C Gamma(beta))^{1/beta}, C the collision constant.
inline double local_renewal_rate(double alpha, double lambda, double L_sigma, double collision_c) {
    const double beta = 1.0 - 1.0 / alpha;
    const double b = lambda * lambda * L_sigma * L_sigma * collision_c;
    return b == 0.0 ? 0.0 : std::pow(b * gamma(beta), 1.0 / beta);
}

/// m(t,x) = g(t,x)^2 + int_0^t theta F_beta'(theta (t-s)) e^{-c (t-s)} g(s,x)^2 ds,
/// the resolvent of the collision kernel C tau^{-1/alpha} e^{-c tau}; c defaults to 2 lambda1.
inline OracleTable second_moment_local(const ModelParams& params, const DiscreteOperator& op, const Grid& grid,
                                       double T, const LocalOracleOptions& opt = {}) {
    if (params.sigma.kind != SigmaSpec::Kind::linear) throw domain_error("second_moment_local: needs linear sigma");
    if (!(T > 0.0) || opt.steps < 1 || opt.output_every < 1) throw domain_error("second_moment_local: bad time grid");
    const int n = grid.n;
    const double alpha = op.alpha;
    const double beta = 1.0 - 1.0 / alpha;
    const double theta = local_renewal_rate(alpha, params.lambda, params.sigma.L_sigma, collision_constant(alpha));
    const double h = T / opt.steps;
    const double kill = opt.killing_rate.value_or(2.0 * op.lambda1);
    if (!(kill >= 0.0)) throw domain_error("second_moment_local: killing rate must be nonnegative");
    SemigroupOrbit orbit(op, params.u0);

    // Cell boundaries: geometric refinement of [0, h], then uniform.
    std::vector<double> s_nodes{0.0};
    for (int i = opt.grading_levels; i >= 1; --i) s_nodes.push_back(h * std::pow(0.5, i));
    for (int k = 1; k <= opt.steps; ++k) s_nodes.push_back(k * h);
    const std::size_t first_uniform = static_cast<std::size_t>(opt.grading_levels) + 1;  // index of s = h

    std::vector<Eigen::VectorXd> log_g2(s_nodes.size());
    for (std::size_t j = 0; j < s_nodes.size(); ++j)
        log_g2[j] = orbit.at(s_nodes[j]).array().square().log().matrix();

    std::map<long, double> lf_lag;  // ln F(theta * lag * h)
    auto log_f = [&](double tau) { return theta == 0.0 ? 0.0 : log_f_beta(beta, theta * tau, opt.ml); };
    auto log_f_lag = [&](long lag) {
        auto it = lf_lag.find(lag);
        if (it != lf_lag.end()) return it->second;
        const double v = log_f(static_cast<double>(lag) * h);
        lf_lag.emplace(lag, v);
        return v;
    };

    OracleTable tab;
    tab.lambda = params.lambda;
    tab.alpha = alpha;
    tab.grid = grid;
    std::vector<int> out_steps;
    for (int k = 0; k <= opt.steps; k += opt.output_every) out_steps.push_back(k);
    if (out_steps.back() != opt.steps) out_steps.push_back(opt.steps);
    tab.log_m.resize(static_cast<Eigen::Index>(out_steps.size()), n);

    std::vector<double> cell_logw;
    std::vector<double> terms;
    for (std::size_t r = 0; r < out_steps.size(); ++r) {
        const int k = out_steps[r];
        const double t = k * h;
        tab.times.push_back(t);
        const std::size_t last = k == 0 ? 0 : first_uniform + static_cast<std::size_t>(k - 1);  // s_nodes[last] == t

        // ln(F(theta (t - s_a)) - F(theta (t - s_b))) per cell [s_a, s_b]
        cell_logw.clear();
        for (std::size_t j = 0; j < last; ++j) {
            double la, lb;
            if (j + 1 >= first_uniform) {
                la = log_f_lag(k - static_cast<long>(j + 1 - first_uniform));
                lb = log_f_lag(k - static_cast<long>(j + 2 - first_uniform));
            } else {
                la = log_f(t - s_nodes[j]);
                lb = j + 1 == first_uniform ? log_f_lag(k - 1) : log_f(t - s_nodes[j + 1]);
            }
            const double mid = t - 0.5 * (s_nodes[j] + s_nodes[j + 1]);
            cell_logw.push_back(theta == 0.0 ? -std::numeric_limits<double>::infinity()
                                             : detail::log1m_exp_diff(la, lb) - kill * mid);
        }
        for (int i = 0; i < n; ++i) {
            terms.assign(1, log_g2[last](i));
            for (std::size_t j = 0; j < last; ++j) {
                const double la = log_g2[j](i), lb = log_g2[j + 1](i);
                const double log_avg = std::max(la, lb) + std::log(0.5 * (1.0 + std::exp(-std::abs(la - lb))));
                terms.push_back(log_avg + cell_logw[j]);
            }
            tab.log_m(static_cast<Eigen::Index>(r), i) = detail::log_sum_exp(terms);
        }
    }
    return tab;
}

// ---------------------------------------------------------------------------
// Envelopes

struct EnvelopeConstants {
    double kappa1 = 0.0;
    double kappa2 = 0.0;
    double kappa3 = 0.0;
    double kappa4 = 0.0;
    double lambda1 = 0.0;
    double lambda_L = 0.0;
    double lambda0 = 0.0;
    double alpha = 0.0;

    void validate() const {
        for (double v : {kappa1, kappa2, kappa3, kappa4, lambda1, lambda_L, lambda0})
            if (!(v > 0.0) || !std::isfinite(v)) throw validation_error("EnvelopeConstants: every constant must be positive and finite");
        if (lambda_L > lambda0) throw validation_error("EnvelopeConstants: lambda_L must not exceed lambda0");
    }
};

/// ln of kappa1 E_{1-1/alpha}(lambda^2 l^2 kappa2 t^{(alpha-1)/alpha}).
inline double log_lower_envelope(double t, const EnvelopeConstants& k, double lambda, double l_sigma, double alpha,
                                 const MLEvalConfig& cfg = {}) {
    if (!(t >= 0.0)) throw domain_error("lower_envelope: t must be nonnegative");
    const double beta = 1.0 - 1.0 / alpha;
    return std::log(k.kappa1) + log_mittag_leffler(beta, lambda * lambda * l_sigma * l_sigma * k.kappa2 * std::pow(t, beta), cfg);
}

inline double lower_envelope(double t, const EnvelopeConstants& k, double lambda, double l_sigma, double alpha,
                             const MLEvalConfig& cfg = {}) {
    return std::exp(log_lower_envelope(t, k, lambda, l_sigma, alpha, cfg));
}

struct EnvelopeValue {
    double value = 0.0;
    double log_value = 0.0;
    bool saturated = false;  // value exceeds the double range; log_value is exact
};

/// kappa3 exp(kappa4 (lambda^2 L^2)^{alpha/(alpha-1)} t).
inline EnvelopeValue upper_envelope(double t, const EnvelopeConstants& k, double lambda, double L_sigma, double alpha) {
    if (!(t >= 0.0)) throw domain_error("upper_envelope: t must be nonnegative");
    EnvelopeValue v;
    v.log_value = std::log(k.kappa3) + k.kappa4 * std::pow(lambda * lambda * L_sigma * L_sigma, alpha / (alpha - 1.0)) * t;
    v.saturated = v.log_value > std::log(std::numeric_limits<double>::max());
    v.value = v.saturated ? std::numeric_limits<double>::max() : std::exp(v.log_value);
    return v;
}

struct StabilityPoint {
    double lambda = 0.0;
    double slope = 0.0;  // tail log-slope of sup_x m
};

/// Largest lambda in the table whose tail slope is negative.
inline double small_noise_threshold(std::span<const StabilityPoint> table) {
    std::optional<double> lam;
    for (const auto& s : table)
        if (s.slope < 0.0 && (!lam || s.lambda > *lam)) lam = s.lambda;
    if (!lam) throw domain_error("small_noise_threshold: no lambda in the stability table has a negative tail slope");
    return *lam;
}

/// Smallest lambda >= lambda_L whose tail slope exceeds (kappa2 lambda^2 l^2)^{alpha/(alpha-1)} / 2.
inline double large_noise_threshold(std::span<const StabilityPoint> table, double lambda_L, double kappa2, double l_sigma,
                                    double alpha) {
    std::optional<double> lam;
    for (const auto& s : table) {
        const double ref = 0.5 * std::pow(kappa2 * s.lambda * s.lambda * l_sigma * l_sigma, alpha / (alpha - 1.0));
        if (s.lambda >= lambda_L && s.slope > ref && (!lam || s.lambda < *lam)) lam = s.lambda;
    }
    if (!lam) throw domain_error("large_noise_threshold: no lambda in the stability table reaches the large-noise rate");
    return *lam;
}

struct EnvelopeFitInput {
    std::span<const OracleTable> kappa_tables;
    std::span<const StabilityPoint> stability;
    double alpha = 1.5;
    double l_sigma = 1.0;
    double L_sigma = 1.0;
    double lambda1 = 0.0;
};

/// Tight constants: the lower envelope touches inf-subinterval m and the upper
/// touches sup m at one cell each; thresholds from the stability table.
inline EnvelopeConstants fit_envelope_constants(const EnvelopeFitInput& in, const MLEvalConfig& cfg = {}) {
    std::set<double> lambdas;
    std::size_t max_times = 0;
    for (const auto& tab : in.kappa_tables) {
        lambdas.insert(tab.lambda);
        max_times = std::max(max_times, tab.times.size());
    }
    if (lambdas.size() < 3 || max_times < 8)
        throw domain_error("fit_envelope_constants: need >= 3 lambda values and >= 8 times");

    const double alpha = in.alpha;
    const double rate_exp = alpha / (alpha - 1.0);
    EnvelopeConstants k;
    k.alpha = alpha;
    k.lambda1 = in.lambda1;

    // kappa1: smallest inf-subinterval moment; kappa3: largest sup moment at t = 0.
    double log_k1 = std::numeric_limits<double>::infinity();
    double log_k3 = -std::numeric_limits<double>::infinity();
    for (const auto& tab : in.kappa_tables) {
        for (std::size_t i = 0; i < tab.times.size(); ++i) log_k1 = std::min(log_k1, tab.log_inf_subinterval(i));
        log_k3 = std::max(log_k3, tab.log_sup(0));
    }
    k.kappa1 = std::exp(log_k1);
    k.kappa3 = std::exp(log_k3);

    // kappa2: largest value keeping the lower envelope below every cell (bisection in ln kappa2).
    auto lower_ok = [&](double kap2) {
        EnvelopeConstants trial = k;
        trial.kappa2 = kap2;
        for (const auto& tab : in.kappa_tables)
            for (std::size_t i = 0; i < tab.times.size(); ++i)
                if (log_lower_envelope(tab.times[i], trial, tab.lambda, in.l_sigma, alpha, cfg) >
                    tab.log_inf_subinterval(i) + 1e-12 * std::max(1.0, std::abs(tab.log_inf_subinterval(i))))
                    return false;
        return true;
    };
    double lo = -60.0, hi = 10.0;
    if (!lower_ok(std::exp(lo))) throw domain_error("fit_envelope_constants: lower envelope infeasible even for tiny kappa2");
    while (lower_ok(std::exp(hi))) {
        hi += 10.0;
        if (hi > 200.0) throw domain_error("fit_envelope_constants: lower envelope never binds");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        const double mid = 0.5 * (lo + hi);
        (lower_ok(std::exp(mid)) ? lo : hi) = mid;
    }
    k.kappa2 = std::exp(lo);

    // kappa4: smallest rate keeping the upper envelope above every cell.
    double k4 = 0.0;
    for (const auto& tab : in.kappa_tables) {
        const double rate = std::pow(tab.lambda * tab.lambda * in.L_sigma * in.L_sigma, rate_exp);
        for (std::size_t i = 0; i < tab.times.size(); ++i)
            if (tab.times[i] > 0.0) k4 = std::max(k4, (tab.log_sup(i) - log_k3) / (rate * tab.times[i]));
    }
    k.kappa4 = k4 > 0.0 ? k4 * (1.0 + 1e-12) : std::numeric_limits<double>::min();

    // Crossing check.
    std::ostringstream bad;
    for (const auto& tab : in.kappa_tables)
        for (std::size_t i = 0; i < tab.times.size(); ++i) {
            const double lo_env = log_lower_envelope(tab.times[i], k, tab.lambda, in.l_sigma, alpha, cfg);
            const double up_env = upper_envelope(tab.times[i], k, tab.lambda, in.L_sigma, alpha).log_value;
            if (lo_env > up_env) bad << " (lambda=" << tab.lambda << ", t=" << tab.times[i] << ")";
        }
    if (!bad.str().empty()) throw domain_error("fit_envelope_constants: lower and upper envelopes cross at" + bad.str());

    k.lambda_L = small_noise_threshold(in.stability);
    k.lambda0 = large_noise_threshold(in.stability, k.lambda_L, k.kappa2, in.l_sigma, alpha);
    k.validate();
    return k;
}

struct SandwichReport {
    bool holds = true;
    double worst_lower_gap = std::numeric_limits<double>::infinity();  // min of ln inf m - ln lower
    double worst_upper_gap = std::numeric_limits<double>::infinity();  // min of ln upper - ln sup m
    std::vector<std::string> violations;
};

/// lower <= inf-subinterval m <= sup m <= upper on every cell of the table.
inline SandwichReport check_sandwich(const OracleTable& tab, const EnvelopeConstants& k, double l_sigma, double L_sigma,
                                     const MLEvalConfig& cfg = {}) {
    SandwichReport rep;
    for (std::size_t i = 0; i < tab.times.size(); ++i) {
        const double t = tab.times[i];
        const double inf_m = tab.log_inf_subinterval(i), sup_m = tab.log_sup(i);
        const double lo = log_lower_envelope(t, k, tab.lambda, l_sigma, k.alpha, cfg);
        const double up = upper_envelope(t, k, tab.lambda, L_sigma, k.alpha).log_value;
        rep.worst_lower_gap = std::min(rep.worst_lower_gap, inf_m - lo);
        rep.worst_upper_gap = std::min(rep.worst_upper_gap, up - sup_m);
        const double tol = 1e-9 * std::max(1.0, std::abs(sup_m));
        if (lo > inf_m + tol || inf_m > sup_m + tol || sup_m > up + tol) {
            rep.holds = false;
            std::ostringstream os;
            os << "lambda=" << tab.lambda << " t=" << t;
            rep.violations.push_back(os.str());
        }
    }
    return rep;
}

}  // namespace fracheat
