#pragma once

#include "smoothmix/discretization.hpp"
#include "smoothmix/error.hpp"
#include "smoothmix/targets.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace smoothmix::cli {

enum class Command { Converge, Lemmas, Bounds, Rate };

/// Parsed and validated experiment file. Fields a command needs are
/// required; nothing numeric that affects results has an implicit value
/// except the documented defaults below.
struct ExperimentConfig {
    nlohmann::json raw;
    std::optional<TargetDensity> target;
    std::vector<ModelKind> models;
    std::vector<std::size_t> m_grid;
    std::size_t n = 0;
    std::uint64_t seed = 0;

    double q = 3.0;
    double eps = 1e-3;           // rate exponent slack
    double eps_target = 1e-3;    // M1 fit tolerance
    int degree_cap = 0;          // 0: library default
    bool quadrature = false;     // add the quadrature oracle (d = d_x = 1)
    std::string variant = "part2";
    std::size_t bound_n = 100000;
    std::size_t assumption_n = 20000;
    std::size_t sweep_size = 0;  // lemmas
    std::optional<std::size_t> m3_k;
    std::optional<std::string> series_csv;  // rate
};

ExperimentConfig parse_config(const std::string& text, Command cmd);
ExperimentConfig load_config(const std::filesystem::path& path, Command cmd);

struct RunOptions {
    std::filesystem::path out_dir = ".";
    unsigned workers = 0;
    bool dump_model = false;
    std::optional<std::uint64_t> seed;
};

/// Each run writes its files into out_dir and returns the process exit code
/// (0, or 5 when an invariant check fails). Errors propagate as exceptions.
int run_converge(const ExperimentConfig& cfg, const RunOptions& opt);
int run_lemmas(const ExperimentConfig& cfg, const RunOptions& opt);
int run_bounds(const ExperimentConfig& cfg, const RunOptions& opt);
int run_rate(const ExperimentConfig& cfg, const RunOptions& opt);

// Process exit code for a library error.
int exit_code_for(ErrorCode code);

}  // namespace smoothmix::cli
