#include "catch_amalgamated.hpp"

#include "cli.hpp"

#include "fracdiff/error.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace fracdiff;
using namespace fracdiff::cli;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("fracdiff_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

json load(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(const std::string& cmd, const json& cfg, const fs::path& out, const fs::path& config_dir = ".",
        std::uint64_t seed = 0) {
    RunOptions o;
    o.out_dir = out;
    o.config_dir = config_dir;
    o.seed = seed;
    return run_command(cmd, cfg, o);
}

int shell(const std::string& cmd) {
    const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

const json kM2 = {{"orders", {0.8, 0.4}}, {"coeffs", {1.0, 0.5}}};

}  // namespace

TEST_CASE("field spec mini-language", "[cli]") {
    auto t = parse_field_spec("sin(x) + 0.5*sin(3*x)");
    REQUIRE(t.size() == 2);
    CHECK(t[0].amplitude == 1.0);
    CHECK(t[0].wavenumber == 1.0);
    CHECK(t[1].amplitude == 0.5);
    CHECK(t[1].wavenumber == 3.0);
    t = parse_field_spec("-2e-1*sin(2*x) - sin(5x)");
    REQUIRE(t.size() == 2);
    CHECK(t[0].amplitude == -0.2);
    CHECK(t[1].amplitude == -1.0);
    CHECK(t[1].wavenumber == 5.0);
    CHECK(parse_field_spec("0").empty());
    for (const char* bad : {"sin(x", "cos(x)", "3", "sin(x) sin(2*x)", ""}) {
        INFO(bad);
        CHECK_THROWS_AS(parse_field_spec(bad), Error);
    }
}

TEST_CASE("scalars and csv", "[cli]") {
    CHECK(parse_scalar(json(1.5)) == 1.5);
    CHECK(parse_scalar(json("pi/2")) == std::numbers::pi / 2);
    CHECK(parse_scalar(json("2*pi")) == 2 * std::numbers::pi);
    CHECK(parse_scalar(json("0.25")) == 0.25);
    CHECK_THROWS_AS(parse_scalar(json("two")), Error);

    const auto dir = scratch("csv");
    ObservationTrace tr;
    tr.times = {0.0, 1e-7, 0.1, 1.0 / 3.0};
    tr.values = {1.0, std::nextafter(1.0, 0.0), -2.0 / 3.0, 1e-300};
    write_trace_csv(dir / "t.csv", tr);
    CHECK(slurp(dir / "t.csv").rfind("t,u\n", 0) == 0);
    const auto back = read_trace_csv(dir / "t.csv");
    CHECK(back.times == tr.times);
    CHECK(back.values == tr.values);
    CHECK_FALSE(fs::exists(dir / "t.csv.tmp"));
}

TEST_CASE("simulate", "[cli]") {
    const auto dir = scratch("simulate");
    SECTION("twin example config") {
        const auto cfg = load(fs::path(FRACDIFF_CONFIGS) / "twin_sin2x.json");
        REQUIRE(run("simulate", cfg, dir) == ok);
        const auto meta = load(dir / "simulate.json");
        CHECK(meta["max_difference"].get<double>() <= 1e-7);
        const auto d = read_trace_csv(dir / "difference.csv");
        CHECK(d.times.size() == 100);
        for (double v : d.values) CHECK(std::abs(v) <= 1e-7);
    }
    SECTION("zero data") {
        const json cfg = {{"model", {{"orders", {0.5}}, {"coeffs", {1.0}}}}, {"initial", "0"}, {"x0", 1.0},
                          {"times", {{"linear", {0.0, 1.0, 11}}}}};
        REQUIRE(run("simulate", cfg, dir) == ok);
        const auto tr = read_trace_csv(dir / "trace.csv");
        for (double v : tr.values) CHECK(v == 0.0);
    }
    SECTION("golden file") {
        const auto cfg = load(fs::path(FRACDIFF_CONFIGS) / "golden_m2.json");
        REQUIRE(run("simulate", cfg, dir) == ok);
        const auto tr = read_trace_csv(dir / "trace.csv");
        const auto golden = read_trace_csv(fs::path(FRACDIFF_TEST_DATA) / "golden_m2.csv");
        REQUIRE(tr.times.size() == golden.times.size());
        for (std::size_t i = 0; i < tr.times.size(); ++i) {
            CHECK(tr.times[i] == golden.times[i]);
            CHECK(std::abs(tr.values[i] - golden.values[i]) <= 1e-9);
        }
        // the golden trace against the independent L1 oracle
        json l1 = cfg;
        l1["operator"] = {{"type", "discretized"}, {"grid_points", 401}};
        l1["solver"] = {{"method", "l1"}, {"dt", 1e-4}, {"check_coarseness", false}};
        const auto dir_l1 = scratch("simulate_l1");
        REQUIRE(run("simulate", l1, dir_l1) == ok);
        const auto o = read_trace_csv(dir_l1 / "trace.csv");
        for (std::size_t i = 0; i < o.times.size(); ++i)
            CHECK(std::abs(o.values[i] - golden.values[i]) <= 1e-3 * std::abs(golden.values[i]));
    }
    SECTION("jitter is seeded") {
        json cfg = load(fs::path(FRACDIFF_CONFIGS) / "golden_m2.json");
        cfg["jitter"] = 1e-6;
        const auto d2 = scratch("jitter_b");
        const auto d3 = scratch("jitter_c");
        REQUIRE(run("simulate", cfg, dir, ".", 11) == ok);
        REQUIRE(run("simulate", cfg, d2, ".", 11) == ok);
        REQUIRE(run("simulate", cfg, d3, ".", 12) == ok);
        CHECK(slurp(dir / "trace.csv") == slurp(d2 / "trace.csv"));
        CHECK(slurp(dir / "trace.csv") != slurp(d3 / "trace.csv"));
    }
}

TEST_CASE("identify via files", "[cli]") {
    const auto dir = scratch("identify");
    const json sim = {{"model", kM2}, {"initial", "sin(x)"}, {"x0", "pi/2"}, {"times", {{"log", {1e-6, 1e-2, 200}}}}};
    REQUIRE(run("simulate", sim, dir) == ok);
    const json cfg = {{"trace", "trace.csv"}, {"baseline", 1.0}};
    REQUIRE(run("identify", cfg, dir / "id", dir) == ok);
    const auto r = load(dir / "id" / "identify.json");
    REQUIRE(r["m_hat"] == 2);
    CHECK(r["orders_hat"][0].get<double>() == Approx(0.8).margin(1e-2));
    CHECK(r["orders_hat"][1].get<double>() == Approx(0.4).margin(1e-2));
    CHECK(r["coeff_ratios"][1].get<double>() == Approx(0.5).margin(0.025));

    // determinism
    REQUIRE(run("identify", cfg, dir / "id2", dir) == ok);
    CHECK(slurp(dir / "id" / "identify.json") == slurp(dir / "id2" / "identify.json"));

    // twin example trace: one order, alpha = 0.5
    const json ex = {{"model", {{"orders", {0.5}}, {"coeffs", {4.0}}}},
                     {"initial", "0.92540785884046271*sin(2*x)"},
                     {"x0", 1.0},
                     {"times", {{"log", {1e-6, 1e-2, 200}}}}};
    REQUIRE(run("simulate", ex, dir / "ex") == ok);
    const json cex = {{"trace", "ex/trace.csv"}, {"initial", "0.92540785884046271*sin(2*x)"}, {"x0", 1.0}};
    REQUIRE(run("identify", cex, dir / "exid", dir) == ok);
    const auto rex = load(dir / "exid" / "identify.json");
    CHECK(rex["m_hat"] == 1);
    CHECK(rex["orders_hat"][0].get<double>() == Approx(0.5).margin(1e-2));

    // constant trace
    {
        std::ofstream flat_csv(dir / "flat.csv");
        flat_csv << "t,u\n";
        for (int i = 0; i < 40; ++i) flat_csv << 1e-6 * std::pow(10.0, i / 10.0) << ",2\n";
    }
    const json flat = {{"trace", "flat.csv"}, {"baseline", 2.0}};
    CHECK(run("identify", flat, dir / "flat", dir) == hypothesis_failure);
    CHECK(load(dir / "flat" / "error.json")["error"] == "signal_below_floor");
    CHECK(fs::exists(dir / "flat" / "error.json"));
}

TEST_CASE("expand report", "[cli]") {
    const auto dir = scratch("expand");
    REQUIRE(run("expand", load(fs::path(FRACDIFF_CONFIGS) / "expand_single.json"), dir) == ok);
    const auto e = load(dir / "expansion.json");
    REQUIRE(e["terms"].size() == 3);
    CHECK(e["terms"][1]["coef"].get<double>() == Approx(-std::sin(1.0) / std::tgamma(1.5)).epsilon(1e-10));
    // truncated after t^{1/2}: residual ~ t^{2 alpha}
    CHECK(e["report"][1]["empirical_order"].get<double>() == Approx(1.0).margin(0.1));
    CHECK(fs::exists(dir / "residual_2.dat"));

    const json zero = {{"model", {{"orders", {0.5}}, {"coeffs", {1.0}}}}, {"initial", "0"}, {"x0", 1.0}};
    REQUIRE(run("expand", zero, dir / "zero") == ok);
    CHECK(load(dir / "zero" / "expansion.json")["terms"].empty());

    const json two = {{"model", kM2}, {"initial", "sin(x)"}, {"x0", "pi/2"}, {"order_cap", 1.6}};
    REQUIRE(run("expand", two, dir / "two") == ok);
    const auto pt = load(dir / "two" / "expansion.json")["p_terms_lowest_mode"]["terms"];
    std::vector<double> exps;
    for (const auto& t : pt) exps.push_back(-1.0 - t["p_exponent"].get<double>());
    // 0, a1, 2a1 - a2 (crossover), 2a1 (= 3a1 - 2a2, merged)
    REQUIRE(exps.size() == 4);
    CHECK(exps[2] == Approx(1.2));
}

TEST_CASE("twin, check, recover", "[cli]") {
    const auto dir = scratch("uniq");
    REQUIRE(run("twin", load(fs::path(FRACDIFF_CONFIGS) / "twin_two_mode.json"), dir / "twin") == ok);
    const auto t = load(dir / "twin" / "twin.json");
    CHECK(t["max_difference"].get<double>() <= 1e-7);
    CHECK(t["l2_distance"].get<double>() > 0.1);
    CHECK(t["verdict"]["holds"] == true);
    REQUIRE(t["field"]["modes"].size() == 2);
    CHECK(t["field"]["modes"][0]["mode"] == 2);
    CHECK(t["field"]["modes"][1]["mode"] == 4);

    json same = {{"model", {{"orders", {0.5}}, {"coeffs", {1.0}}}}, {"field", "sin(x)"}, {"kappa", 1}, {"x0", 1.0}};
    REQUIRE(run("twin", same, dir / "same") == ok);
    const auto s = load(dir / "same" / "twin.json");
    CHECK(s["l2_distance"].get<double>() == 0.0);

    same["kappa"] = 1.3;
    CHECK(run("twin", same, dir / "bad") == hypothesis_failure);
    CHECK(load(dir / "bad" / "error.json")["error"] == "kappa_not_in_ratio_set");

    REQUIRE(run("check", load(fs::path(FRACDIFF_CONFIGS) / "check_twin_sin2x.json"), dir / "check") == ok);
    const auto c = load(dir / "check" / "check.json");
    CHECK(c["holds"] == true);
    CHECK(c["kappa"].get<double>() == Approx(4.0));

    json sim = load(fs::path(FRACDIFF_CONFIGS) / "recover_simulate.json");
    REQUIRE(run("simulate", sim, dir / "rs") == ok);
    json rec = load(fs::path(FRACDIFF_CONFIGS) / "recover.json");
    rec["trace"] = "rs/trace.csv";
    REQUIRE(run("recover", rec, dir / "rec", dir) == ok);
    const auto r = load(dir / "rec" / "recover.json");
    const double root = std::sqrt(std::numbers::pi / 2);
    CHECK(r["coeffs"][0].get<double>() == Approx(root).margin(1e-3));
    CHECK(std::abs(r["coeffs"][1].get<double>()) <= 1e-3);
    CHECK(r["coeffs"][2].get<double>() == Approx(0.5 * root).margin(1e-3));
    rec["x0"] = "pi/2";
    CHECK(run("recover", rec, dir / "rank", dir) == hypothesis_failure);
}

TEST_CASE("binary exit codes", "[cli]") {
    const auto dir = scratch("binary");
    const std::string bin = FRACDIFF_CLI;
    CHECK(shell(bin + " simulate --config " + std::string(FRACDIFF_CONFIGS) + "/twin_sin2x.json --out " +
                (dir / "ok").string()) == 0);
    CHECK(fs::exists(dir / "ok" / "trace.csv"));
    CHECK(shell(bin) == 2);
    CHECK(shell(bin + " simulate --config /nonexistent.json") == 2);
    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK(shell(bin + " simulate --config " + (dir / "broken.json").string() + " --out " + (dir / "b").string()) ==
          2);
    std::ofstream(dir / "dead.json") << R"j({"model": {"orders": [0.5], "coeffs": [1]}, "field": "sin(2*x)",
        "kappa": 4, "x0": "pi/2"})j";
    CHECK(shell(bin + " twin --config " + (dir / "dead.json").string() + " --out " + (dir / "d").string()) == 4);
    std::ofstream(dir / "long.json") << R"j({"model": {"orders": [0.9, 0.89, 0.88], "coeffs": [1, 1, 1]},
        "initial": "sin(x)", "x0": 1.0, "order_cap": 40})j";
    CHECK(shell(bin + " expand --config " + (dir / "long.json").string() + " --out " + (dir / "l").string()) == 3);
}
