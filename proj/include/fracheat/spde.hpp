#pragma once

// Monte-Carlo solver for
//   du = Delta^{alpha/2} u dt + lambda sigma(u) dW,  u = 0 outside (0, L),
// with space-time white noise discretised into independent cell increments
// of variance dt*dx. Each step is semi-implicit Euler-Maruyama:
//   u+ = (I - dt A)^{-1} (u + lambda sigma(u) .* xi / dx).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "fracheat/errors.hpp"
#include "fracheat/fractional_laplacian.hpp"

namespace fracheat {

struct SigmaSpec {
    enum class Kind { linear, bounded_linear, custom_table };

    Kind kind = Kind::linear;
    double l_sigma = 1.0;
    double L_sigma = 1.0;
    // custom_table: sorted knots, must contain u = 0 with value 0.
    std::vector<double> knots_u;
    std::vector<double> knots_sigma;

    static SigmaSpec linear(double L) {
        SigmaSpec s;
        s.kind = Kind::linear;
        s.l_sigma = s.L_sigma = L;
        s.validate();
        return s;
    }

    /// sigma(u) = u (l + (L - l) / (1 + u^2)).
    static SigmaSpec bounded_linear(double l, double L) {
        SigmaSpec s;
        s.kind = Kind::bounded_linear;
        s.l_sigma = l;
        s.L_sigma = L;
        s.validate();
        return s;
    }

    static SigmaSpec custom_table(std::vector<double> u, std::vector<double> sigma, double l, double L) {
        SigmaSpec s;
        s.kind = Kind::custom_table;
        s.knots_u = std::move(u);
        s.knots_sigma = std::move(sigma);
        s.l_sigma = l;
        s.L_sigma = L;
        s.validate();
        return s;
    }

    double operator()(double u) const {
        switch (kind) {
            case Kind::linear: return L_sigma * u;
            case Kind::bounded_linear: return u * (l_sigma + (L_sigma - l_sigma) / (1.0 + u * u));
            case Kind::custom_table: return table_eval(u);
        }
        return 0.0;
    }

    void validate() const {
        if (!(l_sigma > 0.0 && l_sigma <= L_sigma) || !std::isfinite(L_sigma))
            throw validation_error("SigmaSpec: need 0 < l_sigma <= L_sigma");
        if (kind == Kind::linear && l_sigma != L_sigma) throw validation_error("SigmaSpec: linear sigma needs l_sigma == L_sigma");
        if (kind != Kind::custom_table) return;

        if (knots_u.size() < 2 || knots_u.size() != knots_sigma.size())
            throw validation_error("SigmaSpec: custom table needs >= 2 knots with matching values");
        if (!std::is_sorted(knots_u.begin(), knots_u.end()) ||
            std::adjacent_find(knots_u.begin(), knots_u.end()) != knots_u.end())
            throw validation_error("SigmaSpec: custom table knots must be strictly increasing");
        const auto zero = std::find(knots_u.begin(), knots_u.end(), 0.0);
        if (zero == knots_u.end() || knots_sigma[static_cast<std::size_t>(zero - knots_u.begin())] != 0.0)
            throw validation_error("SigmaSpec: custom table must contain the knot (0, 0)");
        constexpr double slack = 1e-12;
        for (std::size_t i = 0; i < knots_u.size(); ++i) {
            const double a = std::abs(knots_u[i]), s = std::abs(knots_sigma[i]);
            if (s < l_sigma * a * (1 - slack) || s > L_sigma * a * (1 + slack))
                throw validation_error("SigmaSpec: custom table violates l|u| <= |sigma(u)| <= L|u| at u=" +
                                       std::to_string(knots_u[i]));
            if (i > 0) {
                const double slope = (knots_sigma[i] - knots_sigma[i - 1]) / (knots_u[i] - knots_u[i - 1]);
                if (std::abs(slope) > L_sigma * (1 + slack))
                    throw validation_error("SigmaSpec: custom table is not Lipschitz with constant L_sigma");
            }
        }
    }

private:
    double table_eval(double u) const {
        // Beyond the table the ratio sigma(u)/u of the end knot is continued.
        if (u <= knots_u.front()) return u * knots_sigma.front() / knots_u.front();
        if (u >= knots_u.back()) return u * knots_sigma.back() / knots_u.back();
        const auto hi = static_cast<std::size_t>(std::upper_bound(knots_u.begin(), knots_u.end(), u) - knots_u.begin());
        const std::size_t lo = hi - 1;
        const double w = (u - knots_u[lo]) / (knots_u[hi] - knots_u[lo]);
        return (1.0 - w) * knots_sigma[lo] + w * knots_sigma[hi];
    }
};

inline double sigma_eval(const SigmaSpec& spec, double u) { return spec(u); }

inline Eigen::VectorXd tent_profile(const Grid& grid) {
    Eigen::VectorXd u(grid.n);
    for (int i = 0; i < grid.n; ++i) u(i) = grid.boundary_distance(i) * 2.0 / grid.L;
    return u;
}

struct ModelParams {
    double alpha = 1.5;
    double L = 1.0;
    double lambda = 1.0;
    SigmaSpec sigma = SigmaSpec::linear(1.0);
    Eigen::VectorXd u0;
    double mu = 0.25;
    double p = 2.0;

    /// Throws on hard violations, returns advisory warnings.
    std::vector<std::string> validate(const Grid& grid) const {
        std::vector<std::string> warnings;
        if (!(alpha > 1.0 && alpha < 2.0)) throw validation_error("ModelParams: alpha must lie in (1,2)");
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw validation_error("ModelParams: lambda must be nonnegative");
        if (!(p >= 2.0)) throw validation_error("ModelParams: p must be >= 2");
        sigma.validate();
        if (u0.size() != grid.n) throw validation_error("ModelParams: u0 must have one value per grid node");
        if ((u0.array() < 0.0).any() || !u0.allFinite()) throw validation_error("ModelParams: u0 must be finite and nonnegative");
        double inner_min = std::numeric_limits<double>::infinity();
        for (int i = 0; i < grid.n; ++i)
            if (grid.in_subinterval(i)) inner_min = std::min(inner_min, u0(i));
        if (!(inner_min > 0.0)) throw validation_error("ModelParams: u0 must be positive on [mu, L - mu]");
        if (p <= 2.0 / (alpha - 1.0))
            warnings.push_back("p = " + std::to_string(p) + " is at most 2/(alpha-1) = " + std::to_string(2.0 / (alpha - 1.0)) +
                               "; the moment bounds are only asserted above that threshold");
        return warnings;
    }
};

struct Discretization {
    Grid grid;
    double dt = 0.0;
    double t_end = 0.0;
    std::vector<double> snapshot_times;

    long total_steps() const { return std::lround(t_end / dt); }
    long step_index(double t) const { return std::lround(t / dt); }
    double snapped(double t) const { return static_cast<double>(step_index(t)) * dt; }

    void validate(const DiscreteOperator& op) const {
        if (!(dt > 0.0) || !(t_end > 0.0)) throw validation_error("Discretization: dt and t_end must be positive");
        if (dt * op.lambda1 > 10.0) throw validation_error("Discretization: dt * lambda1 exceeds 10");
        if (!std::is_sorted(snapshot_times.begin(), snapshot_times.end()))
            throw validation_error("Discretization: snapshot_times must be sorted");
        for (double t : snapshot_times)
            if (t < 0.0 || step_index(t) > total_steps()) throw validation_error("Discretization: snapshot time outside [0, t_end]");
    }
};

/// dt = 0.1 / lambda1, the default step.
inline double default_time_step(const DiscreteOperator& op) { return 0.1 / op.lambda1; }

struct NoiseIncrement {
    Eigen::VectorXd values;
};

inline NoiseIncrement sample_noise(std::mt19937_64& rng, const Grid& grid, double dt) {
    if (!(dt > 0.0)) throw domain_error("sample_noise: dt must be positive");
    std::normal_distribution<double> normal(0.0, std::sqrt(dt * grid.dx));
    NoiseIncrement inc;
    inc.values.resize(grid.n);
    for (int i = 0; i < grid.n; ++i) inc.values(i) = normal(rng);
    return inc;
}

/// Cached resolvent (I - dt A)^{-1} = V diag(1 / (1 - dt mu_k)) V^T.
class Stepper {
public:
    Stepper(const DiscreteOperator& op, double dt) : dx_(op.dx), dt_(dt) {
        if (!(dt > 0.0)) throw domain_error("Stepper: dt must be positive");
        const Eigen::VectorXd d = (1.0 / (1.0 - dt * op.eigenvalues.array())).matrix();
        resolvent_ = op.eigenvectors * d.asDiagonal() * op.eigenvectors.transpose();
        scratch_.resize(op.size());
    }

    double dt() const { return dt_; }
    const Eigen::MatrixXd& resolvent() const { return resolvent_; }

    /// In-place u <- R (u + lambda sigma(u) .* noise / dx).
    void advance(Eigen::VectorXd& u, const SigmaSpec& sigma, double lambda, const Eigen::VectorXd& noise) {
        if (noise.size() != u.size() || u.size() != resolvent_.rows()) throw domain_error("step: dimension mismatch");
        for (Eigen::Index i = 0; i < u.size(); ++i) scratch_(i) = u(i) + lambda * sigma(u(i)) * noise(i) / dx_;
        u.noalias() = resolvent_ * scratch_;
    }

private:
    double dx_;
    double dt_;
    Eigen::MatrixXd resolvent_;
    Eigen::VectorXd scratch_;
};

inline Eigen::VectorXd step(const Eigen::VectorXd& u, const DiscreteOperator& op, const ModelParams& params, double dt,
                            const NoiseIncrement& noise) {
    if (u.size() != op.size()) throw domain_error("step: dimension mismatch");
    Stepper s(op, dt);
    Eigen::VectorXd out = u;
    s.advance(out, params.sigma, params.lambda, noise.values);
    return out;
}

/// Seed of path k: splitmix64(master_seed + (k + 1) * 0x9E3779B97F4A7C15).
inline std::uint64_t path_seed(std::uint64_t master_seed, std::uint64_t k) {
    std::uint64_t z = master_seed + (k + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct PathResult {
    std::vector<Eigen::VectorXd> snapshots;  // one per snapshot time; NaN-filled after a blow-up
    bool flagged = false;
    long failed_step = -1;
};

namespace detail {

inline PathResult simulate_with(Stepper& stepper, const ModelParams& params, const Discretization& disc,
                                std::uint64_t seed) {
    const int n = disc.grid.n;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(disc.dt * disc.grid.dx));

    PathResult res;
    res.snapshots.assign(disc.snapshot_times.size(), Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN()));
    std::vector<long> at(disc.snapshot_times.size());
    for (std::size_t s = 0; s < at.size(); ++s) at[s] = disc.step_index(disc.snapshot_times[s]);

    Eigen::VectorXd u = params.u0;
    Eigen::VectorXd xi(n);
    std::size_t next = 0;
    const long steps = disc.total_steps();
    for (long k = 0;; ++k) {
        while (next < at.size() && at[next] == k) res.snapshots[next++] = u;
        if (k == steps || next == at.size()) break;
        for (int i = 0; i < n; ++i) xi(i) = normal(rng);
        stepper.advance(u, params.sigma, params.lambda, xi);
        if (!u.allFinite()) {
            res.flagged = true;
            res.failed_step = k + 1;
            break;
        }
    }
    return res;
}

}  // namespace detail

inline PathResult simulate_path(const ModelParams& params, const Discretization& disc, const DiscreteOperator& op,
                                std::uint64_t seed) {
    Stepper stepper(op, disc.dt);
    return detail::simulate_with(stepper, params, disc, seed);
}

struct PathEnsemble {
    long n_paths = 0;
    std::uint64_t master_seed = 0;
    ModelParams params;
    Discretization disc;
    std::vector<double> times;                // snapped snapshot times
    std::vector<Eigen::MatrixXd> snapshots;   // per time: n x n_paths, column k is path k
    std::vector<unsigned char> flagged;       // per path
    long flagged_count = 0;

    int nodes() const { return disc.grid.n; }

    /// Index of a snapshot time, matched to within half a step.
    std::size_t time_index(double t) const {
        for (std::size_t i = 0; i < times.size(); ++i)
            if (std::abs(times[i] - t) <= 0.5 * disc.dt * (1 + 1e-9)) return i;
        throw domain_error("PathEnsemble: t = " + std::to_string(t) + " is not a snapshot time");
    }
};

/// Runs n_paths independent paths; path k always uses path_seed(master_seed, k),
/// so the result does not depend on worker_count or scheduling.
inline PathEnsemble run_ensemble(const ModelParams& params, const Discretization& disc, const DiscreteOperator& op,
                                 long n_paths, std::uint64_t master_seed, int worker_count = 1) {
    if (n_paths < 1) throw domain_error("run_ensemble: n_paths must be >= 1");
    disc.validate(op);
    params.validate(disc.grid);

    PathEnsemble ens;
    ens.n_paths = n_paths;
    ens.master_seed = master_seed;
    ens.params = params;
    ens.disc = disc;
    for (double t : disc.snapshot_times) ens.times.push_back(disc.snapped(t));
    ens.snapshots.assign(disc.snapshot_times.size(), Eigen::MatrixXd(disc.grid.n, n_paths));
    ens.flagged.assign(static_cast<std::size_t>(n_paths), 0);

    std::atomic<long> next{0};
    auto worker = [&] {
        Stepper stepper(op, disc.dt);
        for (long k = next.fetch_add(1); k < n_paths; k = next.fetch_add(1)) {
            PathResult r = detail::simulate_with(stepper, params, disc, path_seed(master_seed, static_cast<std::uint64_t>(k)));
            for (std::size_t s = 0; s < r.snapshots.size(); ++s) ens.snapshots[s].col(k) = r.snapshots[s];
            ens.flagged[static_cast<std::size_t>(k)] = r.flagged ? 1 : 0;
        }
    };
    const int workers = std::max(1, worker_count);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    ens.flagged_count = std::count(ens.flagged.begin(), ens.flagged.end(), 1);
    return ens;
}

}  // namespace fracheat
