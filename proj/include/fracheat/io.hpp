#pragma once

// CSV and JSON writers with matching readers. Numbers are written with %.17g
// so every file re-parses to the same doubles.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fracheat/bounds.hpp"
#include "fracheat/errors.hpp"
#include "fracheat/moments.hpp"
#include "fracheat/spde.hpp"
#include "fracheat/stable_kernel.hpp"

namespace fracheat {

using json = nlohmann::json;

namespace io {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        // stod rejects "nan"/"inf" spellings of some printf implementations
        if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw validation_error("cannot parse number '" + s + "' in " + where);
    }
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(std::istream& is, const std::string& name) {
    CsvTable t;
    std::string line;
    if (!std::getline(is, line)) throw validation_error(name + ": empty file");
    t.header = split_csv_line(line);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        t.rows.push_back(split_csv_line(line));
        if (t.rows.back().size() != t.header.size())
            throw validation_error(name + ": row " + std::to_string(t.rows.size()) + " has the wrong number of cells");
    }
    return t;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    return os;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return is;
}

}  // namespace io

// ---------------------------------------------------------------------------
// Model and discretization

inline json to_json(const SigmaSpec& s) {
    json j;
    switch (s.kind) {
        case SigmaSpec::Kind::linear: j["kind"] = "linear"; break;
        case SigmaSpec::Kind::bounded_linear: j["kind"] = "bounded_linear"; break;
        case SigmaSpec::Kind::custom_table: j["kind"] = "custom_table"; break;
    }
    j["l_sigma"] = s.l_sigma;
    j["L_sigma"] = s.L_sigma;
    if (s.kind == SigmaSpec::Kind::custom_table) {
        j["knots_u"] = s.knots_u;
        j["knots_sigma"] = s.knots_sigma;
    }
    return j;
}

inline SigmaSpec sigma_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    const double l = j.at("l_sigma").get<double>(), L = j.at("L_sigma").get<double>();
    if (kind == "linear") {
        SigmaSpec s = SigmaSpec::linear(L);
        s.l_sigma = l;
        s.validate();
        return s;
    }
    if (kind == "bounded_linear") return SigmaSpec::bounded_linear(l, L);
    if (kind == "custom_table")
        return SigmaSpec::custom_table(j.at("knots_u").get<std::vector<double>>(), j.at("knots_sigma").get<std::vector<double>>(),
                                       l, L);
    throw config_error("sigma.kind", "unknown sigma kind '" + kind + "'");
}

inline json to_json(const ModelParams& p) {
    return json{{"alpha", p.alpha},
                {"L", p.L},
                {"lambda", p.lambda},
                {"sigma", to_json(p.sigma)},
                {"u0", std::vector<double>(p.u0.data(), p.u0.data() + p.u0.size())},
                {"mu", p.mu},
                {"p", p.p}};
}

inline json to_json(const Discretization& d) {
    return json{{"n", d.grid.n}, {"dt", d.dt}, {"t_end", d.t_end}, {"snapshot_times", d.snapshot_times}};
}

// ---------------------------------------------------------------------------
// Ensemble snapshots: CSV path,t,x,u plus a metadata document

inline void write_snapshot_csv(std::ostream& os, const PathEnsemble& ens) {
    os << "path,t,x,u\n";
    for (long k = 0; k < ens.n_paths; ++k)
        for (std::size_t s = 0; s < ens.times.size(); ++s)
            for (int i = 0; i < ens.nodes(); ++i)
                os << k << ',' << io::num(ens.times[s]) << ',' << io::num(ens.disc.grid.node(i)) << ','
                   << io::num(ens.snapshots[s](i, k)) << '\n';
}

inline json ensemble_metadata(const PathEnsemble& ens) {
    std::vector<long> flagged_paths;
    for (long k = 0; k < ens.n_paths; ++k)
        if (ens.flagged[static_cast<std::size_t>(k)]) flagged_paths.push_back(k);
    return json{{"seed", ens.master_seed},
                {"n_paths", ens.n_paths},
                {"params", to_json(ens.params)},
                {"discretization", to_json(ens.disc)},
                {"snapped_times", ens.times},
                {"flagged_count", ens.flagged_count},
                {"flagged_paths", flagged_paths}};
}

inline void write_ensemble(const PathEnsemble& ens, const std::string& csv_path, const std::string& meta_path) {
    {
        auto os = io::open_out(csv_path);
        write_snapshot_csv(os, ens);
    }
    auto os = io::open_out(meta_path);
    os << ensemble_metadata(ens).dump(2) << '\n';
}

inline PathEnsemble read_ensemble(const std::string& csv_path, const std::string& meta_path) {
    json meta;
    {
        auto is = io::open_in(meta_path);
        is >> meta;
    }
    PathEnsemble ens;
    ens.master_seed = meta.at("seed").get<std::uint64_t>();
    ens.n_paths = meta.at("n_paths").get<long>();
    const json& jp = meta.at("params");
    const json& jd = meta.at("discretization");
    ens.params.alpha = jp.at("alpha").get<double>();
    ens.params.L = jp.at("L").get<double>();
    ens.params.lambda = jp.at("lambda").get<double>();
    ens.params.sigma = sigma_from_json(jp.at("sigma"));
    const auto u0 = jp.at("u0").get<std::vector<double>>();
    ens.params.u0 = Eigen::Map<const Eigen::VectorXd>(u0.data(), static_cast<Eigen::Index>(u0.size()));
    ens.params.mu = jp.at("mu").get<double>();
    ens.params.p = jp.at("p").get<double>();
    ens.disc.grid = build_grid(ens.params.L, jd.at("n").get<int>(), ens.params.mu);
    ens.disc.dt = jd.at("dt").get<double>();
    ens.disc.t_end = jd.at("t_end").get<double>();
    ens.disc.snapshot_times = jd.at("snapshot_times").get<std::vector<double>>();
    ens.times = meta.at("snapped_times").get<std::vector<double>>();
    ens.flagged.assign(static_cast<std::size_t>(ens.n_paths), 0);
    for (long k : meta.at("flagged_paths").get<std::vector<long>>()) ens.flagged.at(static_cast<std::size_t>(k)) = 1;
    ens.flagged_count = meta.at("flagged_count").get<long>();

    const int n = ens.disc.grid.n;
    ens.snapshots.assign(ens.times.size(), Eigen::MatrixXd(n, ens.n_paths));
    auto is = io::open_in(csv_path);
    const io::CsvTable tab = io::read_csv(is, csv_path);
    if (tab.header != std::vector<std::string>{"path", "t", "x", "u"}) throw validation_error(csv_path + ": unexpected header");
    const std::size_t expect = static_cast<std::size_t>(ens.n_paths) * ens.times.size() * static_cast<std::size_t>(n);
    if (tab.rows.size() != expect) throw validation_error(csv_path + ": row count does not match the metadata");
    std::size_t r = 0;
    for (long k = 0; k < ens.n_paths; ++k)
        for (std::size_t s = 0; s < ens.times.size(); ++s)
            for (int i = 0; i < n; ++i, ++r) ens.snapshots[s](i, k) = io::parse_double(tab.rows[r][3], csv_path);
    return ens;
}

// ---------------------------------------------------------------------------
// Sweep results

inline constexpr const char* kSweepHeader =
    "lambda,t,phi_p,phi_p_se,sup_m,sup_m_se,inf_m,inf_m_se,n_eff,flagged,log_phi_p,log_sup_m,log_inf_m";

inline void write_sweep_csv(std::ostream& os, const SweepResult& res) {
    os << kSweepHeader << '\n';
    for (const auto& r : res.rows)
        os << io::num(r.lambda) << ',' << io::num(r.t) << ',' << io::num(r.phi_p.value) << ',' << io::num(r.phi_p.std_error)
           << ',' << io::num(r.sup_moment.value) << ',' << io::num(r.sup_moment.std_error) << ','
           << io::num(r.inf_moment.value) << ',' << io::num(r.inf_moment.std_error) << ',' << r.n_effective << ','
           << r.flagged << ',' << io::num(r.phi_p.log_value) << ',' << io::num(r.sup_moment.log_value) << ','
           << io::num(r.inf_moment.log_value) << '\n';
}

inline SweepResult read_sweep_csv(std::istream& is, double p, const std::string& name = "sweep csv") {
    const io::CsvTable tab = io::read_csv(is, name);
    if (io::split_csv_line(kSweepHeader) != tab.header) throw validation_error(name + ": unexpected header");
    SweepResult res;
    res.p = p;
    for (const auto& c : tab.rows) {
        auto d = [&](std::size_t i) { return io::parse_double(c[i], name); };
        SweepRow r;
        r.lambda = d(0);
        r.t = d(1);
        r.n_effective = std::stol(c[8]);
        r.flagged = std::stol(c[9]);
        r.phi_p = {d(2), d(3), r.n_effective, d(10), 0.0};
        r.sup_moment = {d(4), d(5), r.n_effective, d(11), 0.0};
        r.inf_moment = {d(6), d(7), r.n_effective, d(12), 0.0};
        res.rows.push_back(r);
    }
    return res;
}

inline json to_json(const ExcitationFit& f) {
    return json{{"e_hat", f.e_hat}, {"ci_low", f.ci_low}, {"ci_high", f.ci_high}, {"lambdas_used", f.lambdas_used},
                {"intercept", f.intercept}};
}

inline json to_json(const LyapunovFit& f) {
    return json{{"gamma_hat", f.gamma_hat}, {"ci_low", f.ci_low}, {"ci_high", f.ci_high}, {"points", f.points}};
}

// ---------------------------------------------------------------------------
// Oracle tables (t,x,m) and envelope constants

inline void write_oracle_csv(std::ostream& os, const OracleTable& tab) {
    os << "t,x,m\n";
    for (std::size_t k = 0; k < tab.times.size(); ++k)
        for (int i = 0; i < tab.grid.n; ++i)
            os << io::num(tab.times[k]) << ',' << io::num(tab.grid.node(i)) << ','
               << io::num(std::exp(tab.log_m(static_cast<Eigen::Index>(k), i))) << '\n';
}

inline void write_kernel_table_csv(std::ostream& os, const StableKernelTable& tab) {
    os << "r,g\n";
    for (std::size_t i = 0; i < tab.r_grid.size(); ++i) os << io::num(tab.r_grid[i]) << ',' << io::num(tab.g_values[i]) << '\n';
}

inline json to_json(const EnvelopeConstants& k) {
    return json{{"kappa1", k.kappa1}, {"kappa2", k.kappa2}, {"kappa3", k.kappa3}, {"kappa4", k.kappa4},
                {"lambda1", k.lambda1}, {"lambda_L", k.lambda_L}, {"lambda0", k.lambda0}, {"alpha", k.alpha}};
}

inline EnvelopeConstants envelope_from_json(const json& j) {
    EnvelopeConstants k;
    k.kappa1 = j.at("kappa1").get<double>();
    k.kappa2 = j.at("kappa2").get<double>();
    k.kappa3 = j.at("kappa3").get<double>();
    k.kappa4 = j.at("kappa4").get<double>();
    k.lambda1 = j.at("lambda1").get<double>();
    k.lambda_L = j.at("lambda_L").get<double>();
    k.lambda0 = j.at("lambda0").get<double>();
    k.alpha = j.at("alpha").get<double>();
    return k;
}

}  // namespace fracheat
