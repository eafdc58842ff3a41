// Drives the fracheat binary as a subprocess.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <gtest/gtest.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string output;  // stdout and stderr interleaved
};

Run run(const std::string& args) {
    const std::string cmd = std::string(FRACHEAT_CLI) + " " + args + " 2>&1";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    while (fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path fresh(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("fracheat_cli_" + name);
    fs::remove_all(p);
    return p;
}

const std::string configs = FRACHEAT_CONFIGS;

}  // namespace

TEST(Cli, SimulateWritesFilesAndIsDeterministic) {
    const auto a = fresh("sim_a"), b = fresh("sim_b");
    const auto ra = run("simulate --config " + configs + "/minimal_simulate.json --out " + a.string());
    ASSERT_EQ(ra.code, 0) << ra.output;
    const auto rb = run("simulate --config " + configs + "/minimal_simulate.json --workers 3 --out " + b.string());
    ASSERT_EQ(rb.code, 0) << rb.output;
    ASSERT_TRUE(fs::exists(a / "ensemble.csv"));
    ASSERT_TRUE(fs::exists(a / "ensemble.json"));
    EXPECT_EQ(slurp(a / "ensemble.csv"), slurp(b / "ensemble.csv"));

    const json meta = json::parse(slurp(a / "ensemble.json"));
    EXPECT_EQ(meta.at("n_paths").get<long>(), 10);
    EXPECT_EQ(meta.at("seed").get<std::uint64_t>(), 12345u);
    EXPECT_EQ(meta.at("params").at("alpha").get<double>(), 1.5);
    EXPECT_EQ(meta.at("discretization").at("n").get<int>(), 32);

    const auto rm = run("moments --config " + configs + "/minimal_simulate.json --input " + a.string() + " --out " + a.string());
    ASSERT_EQ(rm.code, 0) << rm.output;
    EXPECT_TRUE(fs::exists(a / "moments.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Cli, MissingFieldExitsWithTwoAndNamesIt) {
    const auto dir = fresh("missing");
    fs::create_directories(dir);
    json j = json::parse(slurp(configs + "/minimal_simulate.json"));
    j["ensemble"].erase("n_paths");
    {
        std::ofstream os(dir / "cfg.json");
        os << j.dump(2);
    }
    const auto r = run("simulate --config " + (dir / "cfg.json").string() + " --out " + dir.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("ensemble.n_paths"), std::string::npos) << r.output;

    {
        std::ofstream os(dir / "broken.json");
        os << "{\n\"model\": }\n";
    }
    const auto rb = run("simulate --config " + (dir / "broken.json").string());
    EXPECT_EQ(rb.code, 2);
    EXPECT_NE(rb.output.find("broken.json:2:"), std::string::npos) << rb.output;
    EXPECT_EQ(run("simulate").code, 2);
    fs::remove_all(dir);
}

TEST(Cli, OracleSweepRecoversExcitationIndex) {
    const auto dir = fresh("sweep");
    const auto r = run("sweep --oracle --svg --config " + configs + "/oracle_sweep.json --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.output;
    const json fit = json::parse(slurp(dir / "sweep_fit.json"));
    const double e = fit.at("excitation").at("e_hat").get<double>();
    EXPECT_GE(e, 5.1);
    EXPECT_LE(e, 6.9);

    const auto ex = run("excitation --config " + configs + "/oracle_sweep.json --input " + dir.string() + " --out " + dir.string());
    ASSERT_EQ(ex.code, 0) << ex.output;
    EXPECT_NEAR(json::parse(slurp(dir / "excitation.json")).at("excitation").at("e_hat").get<double>(), e, 1e-9);

    namespace pt = boost::property_tree;
    pt::ptree energy;
    pt::read_xml((dir / "energy.svg").string(), energy);
    int polylines = 0;
    for (const auto& [name, child] : energy.get_child("svg"))
        if (name == "polyline" && child.get<std::string>("<xmlattr>.class", "") == "series") ++polylines;
    EXPECT_EQ(polylines, 5);

    pt::ptree exc;
    pt::read_xml((dir / "excitation.svg").string(), exc);
    bool found = false;
    for (const auto& [name, child] : exc.get_child("svg"))
        if (name == "line" && child.get<std::string>("<xmlattr>.class", "") == "reference") {
            EXPECT_NEAR(child.get<double>("<xmlattr>.data-slope"), 6.0, 1e-12);
            found = true;
        }
    EXPECT_TRUE(found);
    fs::remove_all(dir);
}

TEST(Cli, SelftestNamesCorruptedModule) {
    const auto dir = fresh("selftest");
    fs::create_directories(dir);
    const auto r = run("selftest --level quick --inject-gamma-fault --report " + (dir / "report.json").string());
    EXPECT_EQ(r.code, 1) << r.output;
    EXPECT_NE(r.output.find("specialfn"), std::string::npos) << r.output;
    const json rep = json::parse(slurp(dir / "report.json"));
    EXPECT_FALSE(rep.at("passed").get<bool>());
    const auto mods = rep.at("failed_modules").get<std::vector<std::string>>();
    EXPECT_NE(std::find(mods.begin(), mods.end(), "specialfn"), mods.end());
    fs::remove_all(dir);
}

TEST(Cli, QuickSelftestPasses) {
    const auto dir = fresh("selftest_ok");
    fs::create_directories(dir);
    const auto r = run("selftest --level quick --report " + (dir / "report.json").string());
    EXPECT_EQ(r.code, 0) << r.output;
    const json rep = json::parse(slurp(dir / "report.json"));
    EXPECT_TRUE(rep.at("passed").get<bool>());
    EXPECT_EQ(rep.at("checks").size(), 9u);
    fs::remove_all(dir);
}
