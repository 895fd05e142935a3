#include "experiment.hpp"

#include "smoothmix/bounds.hpp"
#include "smoothmix/divergence.hpp"
#include "smoothmix/error.hpp"
#include "smoothmix/mixtures.hpp"
#include "smoothmix/version.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace smoothmix::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kKnownFields{
    "description", "target",   "models",       "m_grid",     "n",          "seed",
    "q",           "eps",      "eps_target",   "degree_cap", "quadrature", "variant",
    "bound_n",     "assumption_n", "sweep_size", "m3_k",     "series_csv"};

// 1-based line of the first occurrence of "key" in the source, 0 if absent.
std::size_t line_of_key(const std::string& text, const std::string& key) {
    const auto pos = text.find('"' + key + '"');
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

class FieldReader {
public:
    FieldReader(const json& root, const std::string& text) : root_(root), text_(text) {}

    [[noreturn]] void error(const std::string& key, const std::string& what) const {
        std::string where = "config field '" + key + "'";
        if (const auto line = line_of_key(text_, key)) where += " (line " + std::to_string(line) + ")";
        fail(ErrorCode::ConfigError, where + ": " + what);
    }

    bool has(const std::string& key) const { return root_.contains(key); }

    const json& get(const std::string& key) const {
        if (!has(key)) error(key, "required but missing");
        return root_.at(key);
    }

    std::uint64_t u64(const std::string& key) const {
        const auto& v = get(key);
        if (!v.is_number_unsigned()) error(key, "expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    // Accepts integers and integral floating values such as 1e6.
    std::size_t count(const std::string& key) const {
        const auto& v = get(key);
        if (v.is_number_unsigned()) return v.get<std::size_t>();
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (d >= 0.0 && d == std::floor(d) && d < 1e15) return static_cast<std::size_t>(d);
        }
        error(key, "expected a non-negative integer");
    }

    double number(const std::string& key) const {
        const auto& v = get(key);
        if (!v.is_number()) error(key, "expected a number");
        return v.get<double>();
    }

    bool boolean(const std::string& key) const {
        const auto& v = get(key);
        if (!v.is_boolean()) error(key, "expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key) const {
        const auto& v = get(key);
        if (!v.is_string()) error(key, "expected a string");
        return v.get<std::string>();
    }

private:
    const json& root_;
    const std::string& text_;
};

bool needs_target(Command cmd, const FieldReader& f) {
    if (cmd == Command::Lemmas) return false;
    if (cmd == Command::Rate && f.has("series_csv")) return false;
    return true;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, Command cmd) {
    ExperimentConfig cfg;
    try {
        cfg.raw = json::parse(text);
    } catch (const json::parse_error& e) {
        // The message already carries line and column.
        fail(ErrorCode::ConfigError, std::string("config parse error: ") + e.what());
    }
    if (!cfg.raw.is_object()) fail(ErrorCode::ConfigError, "config must be a JSON object");

    const FieldReader f(cfg.raw, text);
    for (const auto& [key, value] : cfg.raw.items())
        if (!kKnownFields.contains(key)) f.error(key, "unknown field");

    cfg.seed = f.u64("seed");

    if (f.has("q")) cfg.q = f.number("q");
    if (f.has("eps")) cfg.eps = f.number("eps");
    if (f.has("eps_target")) cfg.eps_target = f.number("eps_target");
    if (f.has("degree_cap")) cfg.degree_cap = static_cast<int>(f.count("degree_cap"));
    if (f.has("quadrature")) cfg.quadrature = f.boolean("quadrature");
    if (f.has("bound_n")) cfg.bound_n = f.count("bound_n");
    if (f.has("assumption_n")) cfg.assumption_n = f.count("assumption_n");
    if (f.has("m3_k")) cfg.m3_k = f.count("m3_k");
    if (f.has("series_csv")) cfg.series_csv = f.string("series_csv");
    if (f.has("variant")) {
        cfg.variant = f.string("variant");
        if (cfg.variant != "part1" && cfg.variant != "part2") f.error("variant", "expected \"part1\" or \"part2\"");
    }
    if (cfg.q <= 2.0) f.error("q", "moment order must exceed 2");
    if (cfg.eps <= 0.0) f.error("eps", "must be positive");
    if (cfg.eps_target <= 0.0) f.error("eps_target", "must be positive");
    if (cfg.bound_n < 100) f.error("bound_n", "must be at least 100");
    if (cfg.m3_k && *cfg.m3_k < 1) f.error("m3_k", "must be positive");

    if (cmd == Command::Lemmas) {
        cfg.sweep_size = f.count("sweep_size");
        if (cfg.sweep_size == 0) f.error("sweep_size", "must be positive");
        return cfg;
    }
    // A rate fit from a saved series only uses the target for the
    // theoretical exponents.
    if (!needs_target(cmd, f) && !f.has("target")) return cfg;
    try {
        cfg.target = TargetDensity::from_json(f.get("target"));
    } catch (const Error& e) {
        f.error("target", e.what());
    }
    if (!needs_target(cmd, f)) return cfg;

    const auto& models = f.get("models");
    if (!models.is_array() || models.empty()) f.error("models", "expected a non-empty list of model kinds");
    for (const auto& m : models) {
        if (!m.is_string()) f.error("models", "entries must be strings such as \"M0\"");
        ModelKind kind{};
        try {
            kind = model_kind_from_string(m.get<std::string>());
        } catch (const Error& e) {
            f.error("models", e.what());
        }
        if (kind == ModelKind::ExactWrapper) f.error("models", "the exact wrapper is not a studied model");
        if (std::find(cfg.models.begin(), cfg.models.end(), kind) != cfg.models.end())
            f.error("models", "duplicate entry " + m.get<std::string>());
        cfg.models.push_back(kind);
    }

    const auto& grid = f.get("m_grid");
    if (!grid.is_array()) f.error("m_grid", "expected a list of integers");
    for (const auto& v : grid) {
        if (!v.is_number_unsigned()) f.error("m_grid", "entries must be positive integers");
        cfg.m_grid.push_back(v.get<std::size_t>());
    }
    if (cmd == Command::Bounds ? cfg.m_grid.empty() : cfg.m_grid.size() < 3)
        f.error("m_grid", cmd == Command::Bounds ? "needs at least one value" : "needs at least 3 values");
    if (cfg.m_grid.front() < 4) f.error("m_grid", "values must be at least 4");
    for (std::size_t i = 1; i < cfg.m_grid.size(); ++i)
        if (cfg.m_grid[i] <= cfg.m_grid[i - 1])
            f.error("m_grid", "must be strictly increasing (" + std::to_string(cfg.m_grid[i - 1]) + " then " +
                                  std::to_string(cfg.m_grid[i]) + ")");

    cfg.n = f.count("n");
    if (cfg.n < 100) f.error("n", "must be at least 100");
    return cfg;
}

ExperimentConfig load_config(const fs::path& path, Command cmd) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::ConfigError, "cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), cmd);
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigError: return 2;
        case ErrorCode::QuadratureFailure:
        case ErrorCode::DegreeCapExceeded:
        case ErrorCode::NonFiniteLogRatio:
        case ErrorCode::InsufficientPoints: return 4;
        case ErrorCode::InvariantViolation: return 5;
        default: return 3;
    }
}

// ---- shared pieces ----

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

template <class Fn>
auto in_context(ModelKind kind, std::size_t m, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.code(), "[" + to_string(kind) + ", m = " + std::to_string(m) + "] " + e.what());
    }
}

std::uint64_t effective_seed(const ExperimentConfig& cfg, const RunOptions& opt) {
    return opt.seed ? *opt.seed : cfg.seed;
}

Schedule schedule_for(const ExperimentConfig& cfg, ModelKind kind, std::size_t m) {
    Schedule s = default_schedule(kind, *cfg.target, m);
    if (kind == ModelKind::M3 && cfg.m3_k) {
        const auto k = *cfg.m3_k;
        s.k = k;
        s.s = static_cast<double>(s.d_x) / static_cast<double>(k * k);
        s.R = 1.0 / (*s.s * *s.s);
        s.recipe += "; k fixed by config";
    }
    return s;
}

MixtureModel build_model(const ExperimentConfig& cfg, ModelKind kind, std::size_t m) {
    const auto& t = *cfg.target;
    if (kind == ModelKind::ExactWrapper) return MixtureModel::exact(t);
    const Schedule s = schedule_for(cfg, kind, m);
    switch (kind) {
        case ModelKind::M0: return build_m0(t, grid_partition(t, m), s);
        case ModelKind::M1: return build_m1(t, grid_partition(t, m), s, cfg.eps_target, cfg.degree_cap);
        case ModelKind::M3: return build_m3(t, grid_partition(t, m), XGrid(t.dim_x(), *s.k), s);
        case ModelKind::M4: return build_m4(t, m, s);
        case ModelKind::M5: return build_m5(t, m, s, cfg.degree_cap);
        default: break;
    }
    fail(ErrorCode::UnsupportedCombination, "model kind " + to_string(kind) + " cannot be built from a config");
}

std::optional<RateModel> rate_model_for(ModelKind kind, const TargetDensity& t) {
    const bool laplace = t.family() == Family::Laplace;
    switch (kind) {
        case ModelKind::M0: return laplace ? RateModel::M0Laplace : RateModel::M0;
        case ModelKind::M1: return RateModel::M1;
        case ModelKind::M3: return RateModel::M3;
        case ModelKind::M4:
            if (laplace) return RateModel::M4Laplace;
            return std::nullopt;
        default: return std::nullopt;
    }
}

json exponent_row(const ExperimentConfig& cfg, ModelKind kind) {
    json row{{"kind", to_string(kind)}};
    const auto rm = rate_model_for(kind, *cfg.target);
    if (!rm) {
        row["rate_model"] = nullptr;
        row["exponent"] = nullptr;
        return row;
    }
    row["rate_model"] = to_string(*rm);
    row["exponent"] = rate_exponent(*rm, cfg.target->dim_y(), cfg.target->dim_x(), cfg.q, cfg.eps);
    return row;
}

// Bound matching a model kind; nullopt if the kind has none.
std::optional<BoundBreakdown> bound_for(const ExperimentConfig& cfg, ModelKind kind, std::size_t m,
                                        std::uint64_t seed) {
    const auto& t = *cfg.target;
    const BoundOptions bo{cfg.bound_n, seed};
    switch (kind) {
        case ModelKind::M0:
        case ModelKind::M1: {
            const Schedule s = schedule_for(cfg, kind, m);
            const auto v = cfg.variant == "part1" ? BoundVariant::PartI : BoundVariant::PartII;
            return corollary1_bound(t, s, m, cfg.q, v, bo);
        }
        case ModelKind::M3: {
            const Schedule s = schedule_for(cfg, kind, m);
            return corollary3_bound(t, s, m, XGrid(t.dim_x(), *s.k), cfg.q, bo);
        }
        case ModelKind::M4: return corollary6_bound(t, schedule_for(cfg, kind, m), m, bo);
        default: return std::nullopt;
    }
}

bool not_applicable(ErrorCode c) {
    return c == ErrorCode::UnsupportedVariant || c == ErrorCode::XDependentSchedule ||
           c == ErrorCode::UnsupportedDimension || c == ErrorCode::Unsupported ||
           c == ErrorCode::UnsupportedCombination || c == ErrorCode::SupUnknown;
}

struct KlRow {
    std::size_t m;
    ModelKind kind;
    KLEstimate est;
};

const char* kCsvHeader = "m,kind,value,se,n,method,seed\n";

std::string kl_csv(const std::vector<KlRow>& rows) {
    std::string out = kCsvHeader;
    for (const auto& r : rows) {
        out += std::to_string(r.m) + ',' + to_string(r.kind) + ',' + fmt_double(r.est.value) + ',' +
               fmt_double(r.est.std_error) + ',' + std::to_string(r.est.n) + ',' + to_string(r.est.method) + ',' +
               std::to_string(r.est.seed) + '\n';
    }
    return out;
}

const char* kPlotStub = R"py(#!/usr/bin/env python3
# Log-log plot of kl_series.csv; run from the output directory.
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "kl_series.csv"
series = defaultdict(list)
with open(path) as fh:
    for row in csv.DictReader(fh):
        series[(row["kind"], row["method"])].append((int(row["m"]), float(row["value"]), float(row["se"])))

fig, ax = plt.subplots()
for (kind, method), pts in sorted(series.items()):
    pts.sort()
    m = [p[0] for p in pts]
    v = [p[1] for p in pts]
    e = [2 * p[2] for p in pts]
    ax.errorbar(m, v, yerr=e, marker="o", capsize=3, label=f"{kind} ({method})")
ax.set_xscale("log")
ax.set_yscale("log")
ax.set_xlabel("m")
ax.set_ylabel("KL (nats)")
ax.legend()
fig.savefig("kl_series.png", dpi=150)
)py";

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::InvalidParameter, "cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json report_header(const ExperimentConfig& cfg, const char* command, std::uint64_t seed) {
    return {{"schema_version", kSchemaVersion},
            {"version", kVersion},
            {"command", command},
            {"config", cfg.raw},
            {"seed", seed}};
}

json assumption_warnings(const ExperimentConfig& cfg, std::uint64_t seed, json& warnings) {
    AssumptionCheckOptions ao;
    ao.n = cfg.assumption_n;
    ao.seed = seed;
    const auto& t = *cfg.target;
    const bool grid = std::any_of(cfg.models.begin(), cfg.models.end(), [](ModelKind k) {
        return k == ModelKind::M0 || k == ModelKind::M1 || k == ModelKind::M3;
    });
    if (grid)
        for (auto m : cfg.m_grid) ao.partitions.push_back(grid_partition(t, m).fine_block());
    try {
        const auto rep = check_assumption1(t, ao);
        if (rep.status != AssumptionReport::Status::Ok)
            warnings.push_back("assumption check " +
                               std::string(rep.status == AssumptionReport::Status::Flagged ? "flagged"
                                                                                           : "inconclusive"));
        for (const auto& note : rep.notes) warnings.push_back("assumption check: " + note);
        return rep.to_json();
    } catch (const Error& e) {
        if (!not_applicable(e.code())) throw;
        warnings.push_back(std::string("assumption check not run: ") + e.what());
        return nullptr;
    }
}

}  // namespace

// ---- converge ----

int run_converge(const ExperimentConfig& cfg, const RunOptions& opt) {
    const auto seed = effective_seed(cfg, opt);
    const auto& t = *cfg.target;
    const McOptions mco{opt.workers};
    json report = report_header(cfg, "converge", seed);
    json warnings = json::array();
    json timings = json::object();
    json series = json::array();
    json exponents = json::array();
    std::vector<KlRow> rows;
    std::vector<std::pair<std::string, json>> dumps;
    bool invariant_broken = false;

    const auto t_all = Clock::now();
    report["assumption_check"] = assumption_warnings(cfg, seed, warnings);

    for (const auto kind : cfg.models) {
        const auto t_kind = Clock::now();
        spdlog::info("converge: {} over {} grid values, n = {}", to_string(kind), cfg.m_grid.size(), cfg.n);
        json schedules = json::array();
        std::size_t current_m = 0;
        const ModelBuilder builder = [&](std::size_t m) {
            current_m = m;
            auto model = in_context(kind, m, [&] { return build_model(cfg, kind, m); });
            if (model.schedule()) schedules.push_back(model.schedule()->to_json());
            if (opt.dump_model) dumps.emplace_back(to_string(kind) + "_m" + std::to_string(m), model.to_json());
            return model;
        };
        const KLSeries ks = in_context(kind, 0, [&] {
            try {
                return kl_series(t, builder, cfg.m_grid, cfg.n, seed, mco);
            } catch (const Error& e) {
                throw Error(e.code(), "m = " + std::to_string(current_m) + ": " + e.what());
            }
        });

        json entry{{"kind", to_string(kind)}, {"schedules", schedules}, {"series", ks.to_json()}};
        for (const auto& p : ks.points) {
            rows.push_back({p.m, kind, p.estimate});
            if (p.estimate.clip_events > 0)
                warnings.push_back(to_string(kind) + " m = " + std::to_string(p.m) + ": " +
                                   std::to_string(p.estimate.clip_events) + " log ratios beyond +-700");
            if (p.estimate.value < -3.0 * p.estimate.std_error) {
                invariant_broken = true;
                warnings.push_back(to_string(kind) + " m = " + std::to_string(p.m) + ": KL estimate below -3 SE");
            }
        }

        try {
            auto fit = fit_rate(ks.points);
            const auto ex = exponent_row(cfg, kind);
            if (!ex["exponent"].is_null()) fit.theoretical = -ex["exponent"].get<double>();
            entry["rate_fit"] = fit.to_json();
        } catch (const Error& e) {
            if (e.code() != ErrorCode::InsufficientPoints) throw;
            entry["rate_fit"] = nullptr;
            warnings.push_back(to_string(kind) + ": rate fit skipped: " + e.what());
        }

        if (cfg.quadrature) {
            json quad = json::array();
            if (t.dim_y() == 1 && t.dim_x() == 1) {
                for (auto m : cfg.m_grid) {
                    const auto est = in_context(kind, m, [&] {
                        return kl_quadrature(t, build_model(cfg, kind, m));
                    });
                    rows.push_back({m, kind, est});
                    quad.push_back(json{{"m", m}, {"value", est.value}, {"evaluations", est.n}});
                }
            } else {
                warnings.push_back("quadrature oracle skipped: needs d = d_x = 1");
            }
            entry["quadrature"] = quad;
        }

        json bounds = json::array();
        for (auto m : cfg.m_grid) {
            try {
                const auto b = in_context(kind, m, [&] { return bound_for(cfg, kind, m, seed); });
                if (!b) break;
                bounds.push_back(b->to_json());
            } catch (const Error& e) {
                if (!not_applicable(e.code())) throw;
                warnings.push_back(to_string(kind) + ": bound not evaluated: " + e.what());
                break;
            }
        }
        entry["bounds"] = bounds;
        series.push_back(entry);
        exponents.push_back(exponent_row(cfg, kind));
        timings[to_string(kind)] = seconds_since(t_kind);
    }
    timings["total"] = seconds_since(t_all);

    report["rows"] = series;
    report["exponents"] = exponents;
    report["warnings"] = warnings;
    report["timings"] = timings;

    fs::create_directories(opt.out_dir);
    write_text(opt.out_dir / "kl_series.csv", kl_csv(rows));
    write_text(opt.out_dir / "plot_kl_series.py", kPlotStub);
    write_json(opt.out_dir / "report.json", report);
    if (opt.dump_model) {
        fs::create_directories(opt.out_dir / "models");
        for (const auto& [name, j] : dumps) write_json(opt.out_dir / "models" / (name + ".json"), j);
    }
    for (const auto& w : warnings) spdlog::warn("{}", w.get<std::string>());
    return invariant_broken ? 5 : 0;
}

// ---- lemmas ----

int run_lemmas(const ExperimentConfig& cfg, const RunOptions& opt) {
    const auto seed = effective_seed(cfg, opt);
    const auto t0 = Clock::now();
    const LemmaSweep sweep = sweep_lemmas(cfg.sweep_size, seed, opt.workers);
    const double elapsed = seconds_since(t0);

    std::string csv = "lemma,d,delta,h,sigma,extra,lhs,rhs,margin\n";
    json violating = json::array();
    double min_margin[3] = {INFINITY, INFINITY, INFINITY};
    for (const auto& r : sweep.rows) {
        csv += std::to_string(r.lemma) + ',' + std::to_string(r.d) + ',' + fmt_double(r.delta) + ',' +
               fmt_double(r.h) + ',' + fmt_double(r.sigma) + ',' + r.extra + ',' + fmt_double(r.gap.lhs) + ',' +
               fmt_double(r.gap.rhs) + ',' + fmt_double(r.gap.margin) + '\n';
        min_margin[r.lemma - 1] = std::min(min_margin[r.lemma - 1], r.gap.margin);
        if (r.gap.margin < -1e-12) {
            violating.push_back(json{{"lemma", r.lemma}, {"d", r.d}, {"delta", r.delta}, {"h", r.h},
                                     {"sigma", r.sigma}, {"extra", r.extra}, {"margin", r.gap.margin}});
            spdlog::error("lemma {} violated: d = {}, delta = {}, h = {}, sigma = {}, {}, margin = {}", r.lemma, r.d,
                          r.delta, r.h, r.sigma, r.extra, r.gap.margin);
        }
    }

    // Fixed reference draw with a known margin.
    const auto ref = lemma2_gap(1, 4.0, 1.0);
    json report = report_header(cfg, "lemmas", seed);
    report["rows"] = sweep.rows.size();
    report["per_lemma"] = cfg.sweep_size;
    report["violations"] = sweep.violations;
    report["violating_rows"] = violating;
    report["min_margin"] = json{{"lemma1", min_margin[0]}, {"lemma2", min_margin[1]}, {"lemma3", min_margin[2]}};
    report["reference"] = json{{"lemma", 2}, {"d", 1}, {"delta", 4.0}, {"sigma", 1.0},
                               {"lhs", ref.lhs}, {"rhs", ref.rhs}, {"margin", ref.margin}};
    report["warnings"] = json::array();
    report["timings"] = json{{"total", elapsed}};

    fs::create_directories(opt.out_dir);
    write_text(opt.out_dir / "lemmas.csv", csv);
    write_json(opt.out_dir / "report.json", report);
    spdlog::info("lemmas: {} rows, {} violations", sweep.rows.size(), sweep.violations);
    return sweep.violations == 0 ? 0 : 5;
}

// ---- bounds ----

int run_bounds(const ExperimentConfig& cfg, const RunOptions& opt) {
    const auto seed = effective_seed(cfg, opt);
    const auto& t = *cfg.target;
    const McOptions mco{opt.workers};
    const bool quad = cfg.quadrature && t.dim_y() == 1 && t.dim_x() == 1;
    json breakdowns = json::array();
    json dominance = json::array();
    json warnings = json::array();
    json timings = json::object();
    std::vector<KlRow> rows;
    std::vector<std::pair<std::string, json>> dumps;
    bool invariant_broken = false;
    const auto t_all = Clock::now();

    for (const auto kind : cfg.models) {
        const auto t_kind = Clock::now();
        for (auto m : cfg.m_grid) {
            spdlog::info("bounds: {} m = {}", to_string(kind), m);
            const auto b = in_context(kind, m, [&] { return bound_for(cfg, kind, m, seed); });
            if (!b) fail(ErrorCode::UnsupportedCombination, "no bound is defined for model kind " + to_string(kind));
            const auto model = in_context(kind, m, [&] { return build_model(cfg, kind, m); });
            if (opt.dump_model) dumps.emplace_back(to_string(kind) + "_m" + std::to_string(m), model.to_json());
            const auto mc = in_context(kind, m, [&] { return kl_mc(t, model, cfg.n, seed, mco); });
            rows.push_back({m, kind, mc});
            if (mc.value < -3.0 * mc.std_error) {
                invariant_broken = true;
                warnings.push_back(to_string(kind) + " m = " + std::to_string(m) + ": KL estimate below -3 SE");
            }
            json row{{"kind", to_string(kind)}, {"m", m},           {"kl", mc.value},
                     {"kl_se", mc.std_error},   {"bound", b->total}, {"bound_se", b->total_se},
                     {"dominated", mc.value <= b->total + 3.0 * std::hypot(b->total_se, mc.std_error)}};
            if (quad) {
                const auto qe = in_context(kind, m, [&] { return kl_quadrature(t, model); });
                rows.push_back({m, kind, qe});
                row["kl_quadrature"] = qe.value;
                row["dominated_quadrature"] = qe.value <= b->total + 3.0 * b->total_se;
            }
            if (b->bound == "corollary3") row["logit_magnitude"] = std::abs(b->term("logit").value);
            dominance.push_back(row);
            auto bj = b->to_json();
            bj["kind"] = to_string(kind);
            breakdowns.push_back(bj);
        }
        timings[to_string(kind)] = seconds_since(t_kind);
    }
    timings["total"] = seconds_since(t_all);

    json bounds{{"schema_version", kSchemaVersion}, {"breakdowns", breakdowns}, {"dominance", dominance}};
    json report = report_header(cfg, "bounds", seed);
    report["bounds"] = bounds;
    report["warnings"] = warnings;
    report["timings"] = timings;

    fs::create_directories(opt.out_dir);
    write_text(opt.out_dir / "kl_series.csv", kl_csv(rows));
    write_json(opt.out_dir / "bounds.json", bounds);
    write_json(opt.out_dir / "report.json", report);
    if (opt.dump_model) {
        fs::create_directories(opt.out_dir / "models");
        for (const auto& [name, j] : dumps) write_json(opt.out_dir / "models" / (name + ".json"), j);
    }
    for (const auto& w : warnings) spdlog::warn("{}", w.get<std::string>());
    return invariant_broken ? 5 : 0;
}

// ---- rate ----

namespace {

std::vector<KlRow> read_kl_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::ConfigError, "cannot read series file " + path.string());
    std::string line;
    std::getline(in, line);
    if (line + '\n' != kCsvHeader) fail(ErrorCode::ConfigError, path.string() + ": unexpected header '" + line + "'");
    std::vector<KlRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        try {
            if (cells.size() != 7) throw std::invalid_argument("expected 7 columns");
            KlRow r{std::stoul(cells[0]), model_kind_from_string(cells[1]), {}};
            r.est.value = std::stod(cells[2]);
            r.est.std_error = std::stod(cells[3]);
            r.est.n = std::stoul(cells[4]);
            r.est.method = cells[5] == "mc" ? KLMethod::MonteCarlo : KLMethod::Quadrature;
            r.est.seed = std::stoull(cells[6]);
            rows.push_back(r);
        } catch (const std::exception& e) {
            fail(ErrorCode::ConfigError,
                 path.string() + " line " + std::to_string(lineno) + ": cannot parse row: " + e.what());
        }
    }
    return rows;
}

}  // namespace

int run_rate(const ExperimentConfig& cfg, const RunOptions& opt) {
    const auto seed = effective_seed(cfg, opt);
    const auto t0 = Clock::now();
    std::vector<KlRow> rows;
    if (cfg.series_csv) {
        rows = read_kl_csv(*cfg.series_csv);
    } else {
        const McOptions mco{opt.workers};
        for (const auto kind : cfg.models) {
            std::size_t current_m = 0;
            const ModelBuilder builder = [&](std::size_t m) {
                current_m = m;
                return in_context(kind, m, [&] { return build_model(cfg, kind, m); });
            };
            const auto ks = in_context(kind, 0, [&] {
                try {
                    return kl_series(*cfg.target, builder, cfg.m_grid, cfg.n, seed, mco);
                } catch (const Error& e) {
                    throw Error(e.code(), "m = " + std::to_string(current_m) + ": " + e.what());
                }
            });
            for (const auto& p : ks.points) rows.push_back({p.m, kind, p.estimate});
        }
    }

    // One fit per kind, in order of first appearance, using MC rows only.
    std::vector<ModelKind> kinds;
    for (const auto& r : rows)
        if (std::find(kinds.begin(), kinds.end(), r.kind) == kinds.end()) kinds.push_back(r.kind);
    json fits = json::array();
    for (const auto kind : kinds) {
        std::vector<SeriesPoint> pts;
        for (const auto& r : rows)
            if (r.kind == kind && r.est.method == KLMethod::MonteCarlo) pts.push_back({r.m, r.est});
        auto fit = fit_rate(pts);
        json entry{{"kind", to_string(kind)}};
        if (cfg.target) {
            const auto ex = exponent_row(cfg, kind);
            if (!ex["exponent"].is_null()) fit.theoretical = -ex["exponent"].get<double>();
            entry["rate_model"] = ex["rate_model"];
        }
        entry["fit"] = fit.to_json();
        fits.push_back(entry);
    }

    json rates{{"schema_version", kSchemaVersion}, {"fits", fits}};
    json report = report_header(cfg, "rate", seed);
    report["rate_fits"] = fits;
    report["warnings"] = json::array();
    report["timings"] = json{{"total", seconds_since(t0)}};

    fs::create_directories(opt.out_dir);
    if (!cfg.series_csv) write_text(opt.out_dir / "kl_series.csv", kl_csv(rows));
    write_json(opt.out_dir / "rates.json", rates);
    write_json(opt.out_dir / "report.json", report);
    return 0;
}

}  // namespace smoothmix::cli
