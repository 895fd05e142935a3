#include "experiment.hpp"

#include "smoothmix/error.hpp"
#include "smoothmix/version.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

namespace {

// SMOOTHMIX_LOG takes an spdlog level name (trace, debug, info, warn, error, off).
void setup_logging() {
    auto logger = spdlog::stderr_color_mt("smoothmix");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("SMOOTHMIX_LOG")) {
        const auto level = spdlog::level::from_str(env);
        if (level == spdlog::level::off && std::string(env) != "off")
            spdlog::warn("SMOOTHMIX_LOG: unknown level '{}', keeping info", env);
        else
            spdlog::set_level(level);
    }
}

}  // namespace

int main(int argc, char** argv) {
    using namespace smoothmix;
    setup_logging();

    CLI::App app{"Smooth mixture-of-normals approximation experiments"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string config_path;
    cli::RunOptions opt;
    std::string out_dir = ".";
    std::uint64_t seed = 0;

    struct Sub {
        const char* name;
        const char* help;
        cli::Command cmd;
    };
    const Sub subs[] = {
        {"converge", "KL convergence series over the m grid", cli::Command::Converge},
        {"lemmas", "randomized sweeps of the appendix inequalities", cli::Command::Lemmas},
        {"bounds", "explicit bound breakdowns and dominance table", cli::Command::Bounds},
        {"rate", "log-log rate fits from a series", cli::Command::Rate},
    };
    std::vector<CLI::App*> apps;
    std::vector<CLI::Option*> seed_opts;
    for (const auto& s : subs) {
        auto* sub = app.add_subcommand(s.name, s.help);
        sub->add_option("--config", config_path, "experiment file (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory")->capture_default_str();
        sub->add_option("--workers", opt.workers, "worker threads (0: all cores)")->capture_default_str();
        sub->add_flag("--dump-model", opt.dump_model, "write every built model to models/*.json");
        seed_opts.push_back(sub->add_option("--seed", seed, "override the config seed"));
        apps.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    std::size_t which = 0;
    while (!apps[which]->parsed()) ++which;
    if (seed_opts[which]->count() > 0) opt.seed = seed;
    opt.out_dir = out_dir;

    try {
        const auto cmd = subs[which].cmd;
        const auto cfg = cli::load_config(config_path, cmd);
        switch (cmd) {
            case cli::Command::Converge: return cli::run_converge(cfg, opt);
            case cli::Command::Lemmas: return cli::run_lemmas(cfg, opt);
            case cli::Command::Bounds: return cli::run_bounds(cfg, opt);
            case cli::Command::Rate: return cli::run_rate(cfg, opt);
        }
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return cli::exit_code_for(e.code());
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 1;
}
