// fracheat: simulate, sweep, moments, excitation, selftest.
//
// Exit codes: 0 ok, 1 acceptance failure, 2 configuration error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fracheat/acceptance.hpp"
#include "fracheat/config.hpp"
#include "fracheat/experiment.hpp"
#include "fracheat/io.hpp"

namespace fs = std::filesystem;
using namespace fracheat;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out;
    bool svg = false;
    bool oracle = false;
};

ExperimentConfig load(const Overrides& o, bool need_sweep) {
    ExperimentConfig c = load_config(o.config, need_sweep);
    if (o.seed) c.master_seed = *o.seed;
    if (o.workers) {
        if (*o.workers < 1) throw config_error("--workers", "must be positive");
        c.worker_count = *o.workers;
    }
    if (o.out) c.out_dir = *o.out;
    if (o.svg) c.emit_svg = true;
    ensure_writable_dir(c.out_dir);
    return c;
}

void print_warnings(const std::vector<std::string>& w) {
    for (const auto& s : w) std::cerr << "warning: " << s << '\n';
}

int cmd_simulate(const Overrides& o) {
    const ExperimentConfig c = load(o, false);
    const Grid grid = c.grid();
    const DiscreteOperator op = assemble(c.alpha, grid);
    const ModelParams params = c.model(grid);
    const Discretization disc = c.discretization(grid, op);
    print_warnings(params.validate(grid));
    const PathEnsemble ens = run_ensemble(params, disc, op, c.n_paths, c.master_seed, c.worker_count);
    const fs::path dir(c.out_dir);
    write_ensemble(ens, (dir / "ensemble.csv").string(), (dir / "ensemble.json").string());
    std::cout << "wrote " << (dir / "ensemble.csv").string() << " (" << ens.n_paths << " paths, " << ens.times.size()
              << " times), flagged " << ens.flagged_count << '\n';
    return 0;
}

int cmd_sweep(const Overrides& o) {
    const ExperimentConfig c = load(o, true);
    const SweepOutput out = run_sweep(c, o.oracle);
    const SweepFiles f = write_sweep_outputs(out, c, o.oracle, c.emit_svg);
    print_warnings(out.warnings);
    std::cout << "wrote " << f.csv << " and " << f.fit;
    if (c.emit_svg) std::cout << ", " << f.energy_svg << ", " << f.excitation_svg;
    std::cout << '\n';
    if (out.result.excitation)
        std::printf("e_hat = %.4f  95%% CI [%.4f, %.4f]  reference %.4f\n", out.result.excitation->e_hat,
                    out.result.excitation->ci_low, out.result.excitation->ci_high, 2.0 * c.alpha / (c.alpha - 1.0));
    return 0;
}

int cmd_moments(const Overrides& o, const std::string& input_dir) {
    const ExperimentConfig c = load(o, false);
    const fs::path in(input_dir.empty() ? c.out_dir : input_dir);
    const PathEnsemble ens = read_ensemble((in / "ensemble.csv").string(), (in / "ensemble.json").string());
    SweepResult res;
    res.p = c.p;
    append_ensemble_rows(res, ens, c.p, ens.params.mu);
    res.sort_rows();
    const fs::path dir(c.out_dir);
    {
        auto os = io::open_out((dir / "moments.csv").string());
        write_sweep_csv(os, res);
    }
    std::vector<TimedLogMoment> series;
    for (const auto& r : res.rows) series.push_back({r.t, r.sup_moment.log_value});
    json j;
    j["p"] = c.p;
    j["lambda"] = ens.params.lambda;
    j["flagged_count"] = ens.flagged_count;
    try {
        j["lyapunov"] = to_json(fit_lyapunov_log(series));
    } catch (const domain_error& e) {
        j["lyapunov"] = nullptr;
        j["warnings"] = {e.what()};
        std::cerr << "warning: " << e.what() << '\n';
    }
    auto os = io::open_out((dir / "moments.json").string());
    os << j.dump(2) << '\n';
    std::cout << "wrote " << (dir / "moments.csv").string() << " and " << (dir / "moments.json").string() << '\n';
    return 0;
}

int cmd_excitation(const Overrides& o, const std::string& input_dir) {
    const ExperimentConfig c = load(o, false);
    const fs::path in(input_dir.empty() ? c.out_dir : input_dir);
    auto is = io::open_in((in / "sweep.csv").string());
    SweepOutput out;
    out.result = read_sweep_csv(is, c.p, (in / "sweep.csv").string());
    fit_sweep(out);
    print_warnings(out.warnings);
    json j;
    j["alpha"] = c.alpha;
    j["reference_excitation"] = 2.0 * c.alpha / (c.alpha - 1.0);
    j["excitation"] = out.result.excitation ? to_json(*out.result.excitation) : json(nullptr);
    j["warnings"] = out.warnings;
    auto os = io::open_out((fs::path(c.out_dir) / "excitation.json").string());
    os << j.dump(2) << '\n';
    if (!out.result.excitation) return 1;
    std::printf("e_hat = %.4f  95%% CI [%.4f, %.4f]\n", out.result.excitation->e_hat, out.result.excitation->ci_low,
                out.result.excitation->ci_high);
    return 0;
}

int cmd_selftest(const std::string& level, const std::string& report, bool fault) {
    if (fault) testing::set_gamma_fault(true);
    const auto lv = level == "full" ? acceptance::Level::full : acceptance::Level::quick;
    const auto results = acceptance::run_all(lv, [](const acceptance::CriterionResult& r) {
        std::fprintf(stderr, "[%s] %d %s (%s, %.1f s): %s\n", r.passed ? "PASS" : "FAIL", r.id, r.title.c_str(),
                     r.module.c_str(), r.seconds, r.detail.c_str());
    });
    json j;
    j["level"] = level;
    j["checks"] = json::array();
    std::vector<std::string> failed_modules;
    bool all = true;
    for (const auto& r : results) {
        j["checks"].push_back(
            {{"id", r.id}, {"module", r.module}, {"title", r.title}, {"passed", r.passed}, {"detail", r.detail}, {"seconds", r.seconds}});
        if (!r.passed) {
            all = false;
            if (std::find(failed_modules.begin(), failed_modules.end(), r.module) == failed_modules.end())
                failed_modules.push_back(r.module);
        }
    }
    j["passed"] = all;
    j["failed_modules"] = failed_modules;
    const std::string text = j.dump(2);
    if (report.empty()) {
        std::cout << text << '\n';
    } else {
        auto os = io::open_out(report);
        os << text << '\n';
    }
    return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic fractional heat equation: simulation, moment oracles and excitation fits"};
    app.require_subcommand(1);

    Overrides o;
    std::string input_dir;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "experiment configuration (JSON)")->required();
        sub->add_option("--seed", o.seed, "master seed override");
        sub->add_option("--workers", o.workers, "worker threads override");
        sub->add_option("--out", o.out, "output directory override");
    };

    auto* simulate = app.add_subcommand("simulate", "run an ensemble and write snapshots");
    add_common(simulate);

    auto* sweep = app.add_subcommand("sweep", "lambda sweep with moment and excitation fits");
    add_common(sweep);
    sweep->add_flag("--oracle", o.oracle, "use the deterministic second-moment oracle (linear sigma)");
    sweep->add_flag("--svg", o.svg, "emit SVG charts");

    auto* moments = app.add_subcommand("moments", "moments of a written ensemble");
    add_common(moments);
    moments->add_option("--input", input_dir, "directory holding ensemble.csv/json (default: output directory)");

    auto* excitation = app.add_subcommand("excitation", "excitation fit of a written sweep");
    add_common(excitation);
    excitation->add_option("--input", input_dir, "directory holding sweep.csv (default: output directory)");

    std::string level = "quick", report;
    bool fault = false;
    auto* selftest = app.add_subcommand("selftest", "run the acceptance checks");
    selftest->add_option("--level", level, "quick or full")->check(CLI::IsMember({"quick", "full"}));
    selftest->add_option("--report", report, "write the JSON report here instead of stdout");
    selftest->add_flag("--inject-gamma-fault", fault, "")->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*simulate) return cmd_simulate(o);
        if (*sweep) return cmd_sweep(o);
        if (*moments) return cmd_moments(o, input_dir);
        if (*excitation) return cmd_excitation(o, input_dir);
        if (*selftest) return cmd_selftest(level, report, fault);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const validation_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
