#pragma once

#include "smoothmix/discretization.hpp"
#include "smoothmix/divergence.hpp"
#include "smoothmix/targets.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace smoothmix {

struct BoundTerm {
    std::string key;
    double value = 0.0;     // signed value of the term
    double std_error = 0.0; // MC standard error; 0 for closed forms
    bool closed_form = true;
};

/// Per-term values of an explicit KL bound. The total adds every term, with
/// the (negative) logit term entering as its magnitude.
struct BoundBreakdown {
    std::string bound;    // "corollary1", "corollary3", "corollary6"
    std::string variant;  // "part1" / "part2" for corollary1
    std::size_t m = 0;
    double q = 0.0;
    std::vector<BoundTerm> terms;
    double total = 0.0;
    double total_se = 0.0;  // SE of the MC part of the total (same draws)
    std::size_t n = 0;
    std::uint64_t seed = 0;
    nlohmann::json schedule;

    const BoundTerm& term(const std::string& key) const;
    nlohmann::json to_json() const;
};

enum class BoundVariant { PartI, PartII };

struct BoundOptions {
    std::size_t n = 100000;
    std::uint64_t seed = 1;
};

// 2 * 3 d^{3/2} delta^{d-1} h / ((2 pi)^{d/2} sigma^d)
double riemann_term(int d, double delta, double h, double sigma);
// 2 exp(-(delta/sigma)^2 / 8)
double gaussian_tail_term(double delta, double sigma);
// log(1 - d_x^{d_x/2} exp(-R s) / s^{d_x/2})
double logit_term(int d_x, double R, double s);

BoundBreakdown corollary1_bound(const TargetDensity& target, const Schedule& schedule, std::size_t m, double q,
                                BoundVariant variant, const BoundOptions& opt = {});
BoundBreakdown corollary3_bound(const TargetDensity& target, const Schedule& schedule, std::size_t m,
                                const XGrid& xgrid, double q, const BoundOptions& opt = {});
BoundBreakdown corollary6_bound(const TargetDensity& target, const Schedule& schedule, std::size_t m,
                                const BoundOptions& opt = {});

enum class RateModel { M0, M1, M3, M4Laplace, M0Laplace };

std::string to_string(RateModel r);
RateModel rate_model_from_string(const std::string& s);

double rate_exponent(RateModel model, int d, int d_x, double q, double eps);

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    std::size_t used = 0;
    std::size_t excluded = 0;  // points within 3 SE of zero
    std::optional<double> theoretical;

    nlohmann::json to_json() const;
};

RateFit fit_rate(const std::vector<SeriesPoint>& series);

// ---- appendix inequalities ----

struct LemmaGap {
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;
};

/// Vertex cube [y, y + delta]^d against a grid of side h whose edges sit at
/// `offset` + k h on every axis (y = 0).
LemmaGap lemma1_gap(int d, double delta, double h, double sigma, double offset = 0.0);

LemmaGap lemma2_gap(int d, double delta, double sigma);

enum class CubeSide { TwoSided, Left, Right };

std::string to_string(CubeSide s);

/// Interval cells [edges[j], edges[j+1]) with chosen points mu[j]; the cube
/// is [y - delta/2, y + delta/2], [y - delta/2, y] or [y, y + delta/2].
LemmaGap lemma3_gap(const std::vector<double>& edges, const std::vector<double>& mu, double y, double delta,
                    double sigma, CubeSide side);

struct LemmaRow {
    int lemma = 0;
    int d = 1;
    double delta = 0.0, h = 0.0, sigma = 0.0;
    std::string extra;  // offset or cube side
    LemmaGap gap;
};

struct LemmaSweep {
    std::vector<LemmaRow> rows;
    std::size_t violations = 0;  // margin below -1e-12
};

LemmaSweep sweep_lemmas(std::size_t per_lemma, std::uint64_t seed, unsigned workers = 0);

}  // namespace smoothmix
