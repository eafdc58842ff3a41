#pragma once

// lambda sweeps (Monte Carlo or oracle) and their file outputs.

#include <filesystem>
#include <string>
#include <vector>

#include "fracheat/bounds.hpp"
#include "fracheat/config.hpp"
#include "fracheat/io.hpp"
#include "fracheat/moments.hpp"
#include "fracheat/svg.hpp"

namespace fracheat {

struct SweepOutput {
    SweepResult result;
    std::vector<std::string> warnings;
};

/// Sweep rows from a second-moment oracle table (p = 2, zero standard error).
inline void append_oracle_rows(SweepResult& out, const OracleTable& tab) {
    for (std::size_t k = 0; k < tab.times.size(); ++k) {
        auto est = [](double log_v) {
            MomentEstimate e;
            e.log_value = log_v;
            e.value = std::exp(log_v);
            return e;
        };
        SweepRow r;
        r.lambda = tab.lambda;
        r.t = tab.times[k];
        r.phi_p = est(tab.log_phi2(k));
        r.sup_moment = est(tab.log_sup(k));
        r.inf_moment = est(tab.log_inf_subinterval(k));
        out.rows.push_back(r);
    }
}

/// Tail Lyapunov fit per lambda and the excitation fit at the last time.
inline void fit_sweep(SweepOutput& out) {
    SweepResult& res = out.result;
    res.sort_rows();
    res.lyapunov.clear();
    std::vector<ExcitationPoint> table;
    for (std::size_t a = 0; a < res.rows.size();) {
        std::size_t b = a;
        std::vector<TimedLogMoment> series;
        while (b < res.rows.size() && res.rows[b].lambda == res.rows[a].lambda) {
            series.push_back({res.rows[b].t, res.rows[b].sup_moment.log_value});
            ++b;
        }
        try {
            res.lyapunov.emplace_back(res.rows[a].lambda, fit_lyapunov_log(series));
        } catch (const domain_error& e) {
            out.warnings.push_back(e.what());
        }
        table.push_back({res.rows[a].lambda, res.rows[b - 1].phi_p.log_value});
        a = b;
    }
    try {
        res.excitation = fit_excitation(table);
    } catch (const domain_error& e) {
        res.excitation.reset();
        out.warnings.push_back(e.what());
    }
}

inline SweepOutput run_sweep(const ExperimentConfig& cfg, bool oracle) {
    if (!cfg.sweep) throw config_error("sweep", "required section is missing");
    const Grid grid = cfg.grid();
    const DiscreteOperator op = assemble(cfg.alpha, grid);
    SweepOutput out;
    out.result.p = cfg.p;

    if (oracle) {
        if (cfg.sigma.kind != SigmaSpec::Kind::linear)
            throw config_error("model.sigma.kind", "the oracle needs linear sigma");
        if (cfg.p != 2.0) throw config_error("model.p", "the oracle gives second moments only (p = 2)");
        ModelParams params = cfg.model(grid);
        if (cfg.sweep->oracle_model == "grid") {
            const int steps = 512;
            GridOracleKernel kernel(op, grid, cfg.t_end, steps);
            for (double lam : cfg.sweep->lambdas()) {
                OracleTable tab = kernel.solve(lam, cfg.sigma.L_sigma, params.u0);
                OracleTable sub = tab;  // keep every 32nd step
                sub.times.clear();
                sub.log_m.resize(steps / 32 + 1, grid.n);
                for (int k = 0; k <= steps; k += 32) {
                    sub.times.push_back(tab.times[static_cast<std::size_t>(k)]);
                    sub.log_m.row(k / 32) = tab.log_m.row(k);
                }
                append_oracle_rows(out.result, sub);
            }
        } else {
            for (double lam : cfg.sweep->lambdas()) {
                params.lambda = lam;
                append_oracle_rows(out.result, second_moment_local(params, op, grid, cfg.t_end));
            }
        }
    } else {
        const Discretization disc = cfg.discretization(grid, op);
        for (double lam : cfg.sweep->lambdas()) {
            ModelParams params = cfg.model(grid);
            params.lambda = lam;
            const PathEnsemble ens = run_ensemble(params, disc, op, cfg.n_paths, cfg.master_seed, cfg.worker_count);
            if (ens.flagged_count > 0)
                out.warnings.push_back("lambda = " + io::num(lam) + ": " + std::to_string(ens.flagged_count) + " flagged paths");
            try {
                append_ensemble_rows(out.result, ens, cfg.p, cfg.mu);
            } catch (const domain_error& e) {
                out.warnings.push_back("lambda = " + io::num(lam) + ": " + e.what());
            }
        }
    }
    fit_sweep(out);
    return out;
}

inline svg::Chart energy_chart(const SweepResult& res) {
    svg::Chart c;
    c.title = "pth energy against time";
    c.x_label = "t";
    c.y_label = "ln Phi_p";
    for (const auto& r : res.rows) {
        if (c.series.empty() || c.series.back().data_value != r.lambda) {
            svg::Series s;
            s.name = "lambda = " + svg::detail::fmt(r.lambda);
            s.data_key = "lambda";
            s.data_value = r.lambda;
            c.series.push_back(s);
        }
        c.series.back().x.push_back(r.t);
        c.series.back().y.push_back(r.phi_p.log_value);
    }
    return c;
}

inline svg::Chart excitation_chart(const SweepResult& res, double alpha) {
    svg::Chart c;
    c.title = "excitation: log log Phi_p against log lambda";
    c.x_label = "log lambda";
    c.y_label = "log log Phi_p";
    svg::Series s;
    s.name = "data";
    s.markers = true;
    for (std::size_t a = 0; a < res.rows.size();) {
        std::size_t b = a;
        while (b < res.rows.size() && res.rows[b].lambda == res.rows[a].lambda) ++b;
        const double lp = res.rows[b - 1].phi_p.log_value;
        s.x.push_back(std::log(res.rows[a].lambda));
        s.y.push_back(lp > 0.0 ? std::log(lp) : std::numeric_limits<double>::quiet_NaN());
        a = b;
    }
    c.series.push_back(s);
    if (res.excitation)
        c.lines.push_back({"fit", "fitted slope " + svg::detail::fmt(res.excitation->e_hat), res.excitation->e_hat,
                           res.excitation->intercept, false});
    const double ref = 2.0 * alpha / (alpha - 1.0);
    svg::StraightLine rl{"reference", "reference slope " + svg::detail::fmt(ref), ref, 0.0, false};
    if (res.excitation) {
        // through the centre of the fitted points
        double mx = 0.0;
        for (double l : res.excitation->lambdas_used) mx += std::log(l);
        mx /= static_cast<double>(res.excitation->lambdas_used.size());
        rl.intercept = res.excitation->intercept + res.excitation->e_hat * mx - ref * mx;
    } else {
        rl.anchor_to_first_point = true;
    }
    c.lines.push_back(rl);
    return c;
}

inline json sweep_fit_json(const SweepOutput& out, const ExperimentConfig& cfg, bool oracle) {
    json j;
    j["alpha"] = cfg.alpha;
    j["p"] = out.result.p;
    j["source"] = oracle ? "oracle:" + cfg.sweep->oracle_model : "monte_carlo";
    j["reference_excitation"] = 2.0 * cfg.alpha / (cfg.alpha - 1.0);
    j["excitation"] = out.result.excitation ? to_json(*out.result.excitation) : json(nullptr);
    json ly = json::array();
    for (const auto& [lam, f] : out.result.lyapunov) {
        json e = to_json(f);
        e["lambda"] = lam;
        ly.push_back(e);
    }
    j["lyapunov"] = ly;
    j["warnings"] = out.warnings;
    return j;
}

struct SweepFiles {
    std::string csv, fit, energy_svg, excitation_svg;
};

inline SweepFiles write_sweep_outputs(const SweepOutput& out, const ExperimentConfig& cfg, bool oracle, bool emit_svg) {
    const std::filesystem::path dir(cfg.out_dir);
    SweepFiles f{(dir / "sweep.csv").string(), (dir / "sweep_fit.json").string(), "", ""};
    {
        auto os = io::open_out(f.csv);
        write_sweep_csv(os, out.result);
    }
    {
        auto os = io::open_out(f.fit);
        os << sweep_fit_json(out, cfg, oracle).dump(2) << '\n';
    }
    if (emit_svg) {
        f.energy_svg = (dir / "energy.svg").string();
        f.excitation_svg = (dir / "excitation.svg").string();
        auto a = io::open_out(f.energy_svg);
        a << svg::render(energy_chart(out.result));
        auto b = io::open_out(f.excitation_svg);
        b << svg::render(excitation_chart(out.result, cfg.alpha));
    }
    return f;
}

}  // namespace fracheat
