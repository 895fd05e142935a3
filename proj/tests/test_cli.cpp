#include "experiment.hpp"

#include "smoothmix/error.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace smoothmix;
using namespace smoothmix::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("smoothmix_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Runs a command the way the executable does and returns its exit code.
int run(Command cmd, const std::string& config, const fs::path& out) {
    RunOptions opt;
    opt.out_dir = out;
    opt.workers = 1;
    try {
        const auto cfg = parse_config(config, cmd);
        switch (cmd) {
            case Command::Converge: return run_converge(cfg, opt);
            case Command::Lemmas: return run_lemmas(cfg, opt);
            case Command::Bounds: return run_bounds(cfg, opt);
            case Command::Rate: return run_rate(cfg, opt);
        }
    } catch (const Error& e) {
        return exit_code_for(e.code());
    }
    return 1;
}

nlohmann::json without_timings(const fs::path& p) {
    auto j = nlohmann::json::parse(slurp(p));
    j.erase("timings");
    return j;
}

const char* kExponential = R"({
  "target": {"family": "exponential", "rate": 1.0, "x_law": {"type": "point", "x": [0.5]}},
  "models": ["M0"],
  "m_grid": [16, 64, 256, 1024],
  "n": 100000,
  "seed": 7
})";

}  // namespace

TEST_CASE("config validation") {
    CHECK_THROWS_AS(parse_config("{ \"seed\": 1,\n \"n\": }", Command::Converge), Error);
    try {
        parse_config("{\n \"seed\": 1,\n \"n\" 5\n}", Command::Converge);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ConfigError);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    // No implicit seed.
    CHECK_THROWS_AS(parse_config(R"({"target": {"family": "exponential", "rate": 1}, "models": ["M0"],
                                    "m_grid": [16, 64, 256], "n": 1000})",
                                 Command::Converge),
                    Error);
    CHECK_THROWS_AS(parse_config(R"({"sweep_size": 10, "seed": 1, "colour": 3})", Command::Lemmas), Error);
    const auto cfg = parse_config(R"({"sweep_size": 10, "seed": 1})", Command::Lemmas);
    CHECK(cfg.sweep_size == 10);
    CHECK(exit_code_for(ErrorCode::DegreeCapExceeded) == 4);
    CHECK(exit_code_for(ErrorCode::XDependentSchedule) == 3);
}

TEST_CASE("decreasing grid writes nothing") {
    const auto out = fresh_dir("bad_grid");
    const std::string cfg = R"({"target": {"family": "exponential", "rate": 1}, "models": ["M0"],
                               "m_grid": [64, 16, 256], "n": 1000, "seed": 1})";
    CHECK(run(Command::Converge, cfg, out) == 2);
    CHECK_FALSE(fs::exists(out));
}

TEST_CASE("converge end to end") {
    const auto a = fresh_dir("converge_a");
    const auto b = fresh_dir("converge_b");
    REQUIRE(run(Command::Converge, kExponential, a) == 0);
    const auto csv = slurp(a / "kl_series.csv");
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 5);
    CHECK(csv.rfind("m,kind,value,se,n,method,seed\n", 0) == 0);
    CHECK(fs::exists(a / "report.json"));
    CHECK(fs::exists(a / "plot_kl_series.py"));

    // Same config, more workers: identical except for timings.
    RunOptions opt;
    opt.out_dir = b;
    opt.workers = 3;
    REQUIRE(run_converge(parse_config(kExponential, Command::Converge), opt) == 0);
    CHECK(slurp(a / "kl_series.csv") == slurp(b / "kl_series.csv"));
    CHECK(without_timings(a / "report.json") == without_timings(b / "report.json"));
}

TEST_CASE("laplace exponent comparison") {
    const auto out = fresh_dir("laplace");
    const std::string cfg = R"({"target": {"family": "laplace", "rate": 1.0, "x_law": {"type": "point", "x": [0.5]}},
                               "models": ["M0", "M4"], "m_grid": [16, 64, 256], "n": 20000, "seed": 2, "eps": 0.1})";
    REQUIRE(run(Command::Converge, cfg, out) == 0);
    const auto rep = nlohmann::json::parse(slurp(out / "report.json"));
    REQUIRE(rep["rows"].size() == 2);
    REQUIRE(rep["exponents"].size() == 2);
    CHECK(rep["exponents"][0]["exponent"].get<double>() == doctest::Approx(1.0 / 2.1));
    CHECK(rep["exponents"][1]["exponent"].get<double>() == doctest::Approx(1.0 / 3.1));
}

TEST_CASE("lemma sweep command") {
    const auto out = fresh_dir("lemmas");
    REQUIRE(run(Command::Lemmas, R"({"sweep_size": 100, "seed": 1})", out) == 0);
    const auto rep = nlohmann::json::parse(slurp(out / "report.json"));
    CHECK(rep["rows"] == 300);
    CHECK(rep["violations"] == 0);
    CHECK(rep["reference"]["margin"].get<double>() == doctest::Approx(0.0625).epsilon(0.01));
    CHECK(run(Command::Lemmas, R"({"sweep_size": 0, "seed": 1})", fresh_dir("lemmas0")) == 2);
}

TEST_CASE("bounds command") {
    SUBCASE("dominance") {
        const auto out = fresh_dir("bounds");
        const std::string cfg = R"({"target": {"family": "exponential", "rate": 1.0, "x_law": {"type": "point", "x": [0.5]}},
                                   "models": ["M0"], "m_grid": [256, 1024, 4096], "n": 20000, "seed": 5,
                                   "bound_n": 20000})";
        REQUIRE(run(Command::Bounds, cfg, out) == 0);
        const auto b = nlohmann::json::parse(slurp(out / "bounds.json"));
        REQUIRE(b["dominance"].size() == 3);
        for (const auto& row : b["dominance"]) CHECK(row["dominated"] == true);
    }
    SUBCASE("M3 logit magnitude shrinks") {
        const auto out = fresh_dir("bounds_m3");
        const std::string cfg = R"({"target": {"family": "exponential", "rate": {"type": "affine", "intercept": 1, "slope": [1]},
                                              "x_law": {"type": "uniform", "lower": [0], "upper": [1]}},
                                   "models": ["M3"], "m_grid": [16, 64, 256], "n": 2000, "seed": 5, "bound_n": 2000})";
        REQUIRE(run(Command::Bounds, cfg, out) == 0);
        const auto b = nlohmann::json::parse(slurp(out / "bounds.json"));
        double prev = INFINITY;
        for (const auto& row : b["dominance"]) {
            const double mag = row["logit_magnitude"].get<double>();
            CHECK(mag < prev);
            prev = mag;
        }
    }
    SUBCASE("x-dependent M4 schedule") {
        const std::string cfg = R"({"target": {"family": "uniform", "upper": {"type": "linear", "slope": [1]},
                                              "x_law": {"type": "uniform", "lower": [1], "upper": [2]}},
                                   "models": ["M4"], "m_grid": [16, 64, 256], "n": 1000, "seed": 5})";
        CHECK(run(Command::Bounds, cfg, fresh_dir("bounds_x")) == 3);
    }
}

TEST_CASE("rate command from a saved series") {
    const auto src = fresh_dir("rate_src");
    REQUIRE(run(Command::Converge, kExponential, src) == 0);
    const auto out = fresh_dir("rate");
    const std::string cfg = R"({"series_csv": ")" + (src / "kl_series.csv").string() + R"(", "seed": 1,
                               "target": {"family": "exponential", "rate": 1.0}})";
    REQUIRE(run(Command::Rate, cfg, out) == 0);
    const auto r = nlohmann::json::parse(slurp(out / "rates.json"));
    const double slope = r["fits"][0]["fit"]["slope"].get<double>();
    CHECK(slope < -0.1);
    CHECK(r["fits"][0]["fit"]["theoretical"].get<double>() == doctest::Approx(-1.0 / 3.001));
}
