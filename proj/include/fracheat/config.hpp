#pragma once

// Experiment configuration: one JSON document, validated field by field.
//
//   {
//     "model":          {"alpha", "L", "lambda", "sigma": {...}, "u0": "tent" | [..], "mu", "p"},
//     "discretization": {"n", "dt"?, "t_end", "snapshot_times"?},
//     "sweep":          {"lambda_min", "lambda_max", "count", "oracle_model"?},
//     "ensemble":       {"n_paths", "master_seed", "worker_count"?},
//     "outputs":        {"directory", "emit_svg"?}
//   }

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fracheat/errors.hpp"
#include "fracheat/fractional_laplacian.hpp"
#include "fracheat/spde.hpp"

namespace fracheat {

struct SweepConfig {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    int count = 0;
    std::string oracle_model = "continuum";  // or "grid"

    std::vector<double> lambdas() const {
        std::vector<double> out;
        for (int k = 0; k < count; ++k)
            out.push_back(count == 1 ? lambda_min : lambda_min * std::pow(lambda_max / lambda_min, k / double(count - 1)));
        return out;
    }
};

struct ExperimentConfig {
    // model
    double alpha = 1.5;
    double L = 1.0;
    double lambda = 1.0;
    SigmaSpec sigma = SigmaSpec::linear(1.0);
    std::optional<std::vector<double>> u0;  // empty: tent profile
    double mu = 0.25;
    double p = 2.0;
    // discretization
    int n = 64;
    std::optional<double> dt;  // empty: 0.1 / lambda1
    double t_end = 1.0;
    std::vector<double> snapshot_times;  // empty: 16 equally spaced times
    // sweep
    std::optional<SweepConfig> sweep;
    // ensemble
    long n_paths = 0;
    std::uint64_t master_seed = 0;
    int worker_count = 1;
    // outputs
    std::string out_dir;
    bool emit_svg = false;

    Grid grid() const { return build_grid(L, n, mu); }

    ModelParams model(const Grid& g) const {
        ModelParams m;
        m.alpha = alpha;
        m.L = L;
        m.lambda = lambda;
        m.sigma = sigma;
        m.mu = mu;
        m.p = p;
        if (u0) {
            if (static_cast<int>(u0->size()) != g.n) throw config_error("model.u0", "needs exactly n values");
            m.u0 = Eigen::Map<const Eigen::VectorXd>(u0->data(), static_cast<Eigen::Index>(u0->size()));
        } else {
            m.u0 = tent_profile(g);
        }
        return m;
    }

    Discretization discretization(const Grid& g, const DiscreteOperator& op) const {
        Discretization d;
        d.grid = g;
        d.dt = dt.value_or(default_time_step(op));
        d.t_end = t_end;
        d.snapshot_times = snapshot_times;
        if (d.snapshot_times.empty())
            for (int k = 1; k <= 16; ++k) d.snapshot_times.push_back(t_end * k / 16.0);
        return d;
    }
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& section, const std::string& key) {
    const std::string field = section + "." + key;
    if (!j.contains(key)) throw config_error(field, "required field is missing");
    return j.at(key);
}

template <class T>
T get_field(const nlohmann::json& j, const std::string& section, const std::string& key) {
    try {
        return require(j, section, key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw config_error(section + "." + key, std::string("wrong type: ") + e.what());
    }
}

template <class T>
T get_or(const nlohmann::json& j, const std::string& section, const std::string& key, T fallback) {
    return j.contains(key) ? get_field<T>(j, section, key) : fallback;
}

inline const nlohmann::json& section(const nlohmann::json& root, const std::string& name) {
    if (!root.contains(name) || !root.at(name).is_object()) throw config_error(name, "required section is missing");
    return root.at(name);
}

}  // namespace detail

/// Parses and validates; `need_sweep` makes the sweep section mandatory.
inline ExperimentConfig parse_config(const nlohmann::json& root, bool need_sweep = false) {
    using detail::get_field;
    using detail::get_or;
    if (!root.is_object()) throw config_error("", "configuration must be a JSON object");
    ExperimentConfig c;

    const auto& m = detail::section(root, "model");
    c.alpha = get_field<double>(m, "model", "alpha");
    if (!(c.alpha > 1.0 && c.alpha < 2.0)) throw config_error("model.alpha", "must lie in (1,2)");
    c.L = get_or<double>(m, "model", "L", 1.0);
    if (!(c.L > 0.0)) throw config_error("model.L", "must be positive");
    c.lambda = get_or<double>(m, "model", "lambda", 1.0);
    if (!(c.lambda >= 0.0)) throw config_error("model.lambda", "must be nonnegative");
    c.mu = get_or<double>(m, "model", "mu", 0.25 * c.L);
    if (!(c.mu > 0.0 && c.mu < 0.5 * c.L)) throw config_error("model.mu", "must lie in (0, L/2)");
    c.p = get_or<double>(m, "model", "p", 2.0);
    if (!(c.p >= 2.0)) throw config_error("model.p", "must be >= 2");
    if (m.contains("sigma")) {
        const auto& s = m.at("sigma");
        const std::string kind = get_or<std::string>(s, "model.sigma", "kind", "linear");
        try {
            if (kind == "linear") {
                c.sigma = SigmaSpec::linear(get_or<double>(s, "model.sigma", "L_sigma", 1.0));
            } else if (kind == "bounded_linear") {
                c.sigma = SigmaSpec::bounded_linear(get_field<double>(s, "model.sigma", "l_sigma"),
                                                    get_field<double>(s, "model.sigma", "L_sigma"));
            } else if (kind == "custom_table") {
                c.sigma = SigmaSpec::custom_table(get_field<std::vector<double>>(s, "model.sigma", "knots_u"),
                                                  get_field<std::vector<double>>(s, "model.sigma", "knots_sigma"),
                                                  get_field<double>(s, "model.sigma", "l_sigma"),
                                                  get_field<double>(s, "model.sigma", "L_sigma"));
            } else {
                throw config_error("model.sigma.kind", "unknown kind '" + kind + "'");
            }
        } catch (const validation_error& e) {
            throw config_error("model.sigma", e.what());
        }
    }
    if (m.contains("u0") && !m.at("u0").is_string()) c.u0 = get_field<std::vector<double>>(m, "model", "u0");
    else if (m.contains("u0") && m.at("u0").get<std::string>() != "tent") throw config_error("model.u0", "expected \"tent\" or an array");

    const auto& d = detail::section(root, "discretization");
    c.n = get_field<int>(d, "discretization", "n");
    if (c.n < 1) throw config_error("discretization.n", "must be positive");
    if (d.contains("dt")) {
        c.dt = get_field<double>(d, "discretization", "dt");
        if (!(*c.dt > 0.0)) throw config_error("discretization.dt", "must be positive");
    }
    c.t_end = get_field<double>(d, "discretization", "t_end");
    if (!(c.t_end > 0.0)) throw config_error("discretization.t_end", "must be positive");
    c.snapshot_times = get_or<std::vector<double>>(d, "discretization", "snapshot_times", {});
    for (std::size_t i = 0; i < c.snapshot_times.size(); ++i)
        if (c.snapshot_times[i] < 0.0 || c.snapshot_times[i] > c.t_end * (1 + 1e-12) ||
            (i > 0 && c.snapshot_times[i] <= c.snapshot_times[i - 1]))
            throw config_error("discretization.snapshot_times", "must be increasing and inside [0, t_end]");

    if (root.contains("sweep") || need_sweep) {
        const auto& s = detail::section(root, "sweep");
        SweepConfig sw;
        sw.lambda_min = get_field<double>(s, "sweep", "lambda_min");
        sw.lambda_max = get_field<double>(s, "sweep", "lambda_max");
        sw.count = get_field<int>(s, "sweep", "count");
        sw.oracle_model = get_or<std::string>(s, "sweep", "oracle_model", "continuum");
        if (!(sw.lambda_min > 0.0)) throw config_error("sweep.lambda_min", "must be positive");
        if (!(sw.lambda_max > sw.lambda_min)) throw config_error("sweep.lambda_max", "must exceed lambda_min");
        if (sw.count < 5) throw config_error("sweep.count", "need at least 5 lambda values");
        if (sw.oracle_model != "continuum" && sw.oracle_model != "grid")
            throw config_error("sweep.oracle_model", "expected \"continuum\" or \"grid\"");
        c.sweep = sw;
    }

    const auto& e = detail::section(root, "ensemble");
    c.n_paths = get_field<long>(e, "ensemble", "n_paths");
    if (c.n_paths < 1) throw config_error("ensemble.n_paths", "must be positive");
    c.master_seed = get_field<std::uint64_t>(e, "ensemble", "master_seed");
    c.worker_count = get_or<int>(e, "ensemble", "worker_count", 1);
    if (c.worker_count < 1) throw config_error("ensemble.worker_count", "must be positive");

    const auto& o = detail::section(root, "outputs");
    c.out_dir = get_field<std::string>(o, "outputs", "directory");
    if (c.out_dir.empty()) throw config_error("outputs.directory", "must not be empty");
    c.emit_svg = get_or<bool>(o, "outputs", "emit_svg", false);
    return c;
}

/// Reads a file; JSON syntax errors are reported with line and column.
inline ExperimentConfig load_config(const std::string& path, bool need_sweep = false) {
    std::ifstream is(path);
    if (!is) throw config_error("--config", "cannot open " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    const std::string text = buf.str();
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') { ++line; col = 1; } else { ++col; }
        }
        throw config_error("", path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON");
    }
    return parse_config(root, need_sweep);
}

/// Creates the directory if needed and checks that a file can be written there.
inline void ensure_writable_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto probe = std::filesystem::path(dir) / ".write_probe";
    std::ofstream os(probe);
    if (!os) throw config_error("outputs.directory", "directory " + dir + " is not writable");
    os.close();
    std::filesystem::remove(probe, ec);
}

}  // namespace fracheat
