#include "smoothmix/bounds.hpp"

#include "smoothmix/error.hpp"
#include "smoothmix/numeric.hpp"
#include "smoothmix/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

namespace smoothmix {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
const double kInvSqrt2Pi = 1.0 / std::sqrt(kTwoPi);

struct MeanSe {
    MomentAccumulator acc;
    void add(double v) { acc.add(v); }
};

// Tail layout of a draw: which parts of the response space the tail
// component covers at x.
using TailAt = std::function<FineBlock(std::span<const double> x)>;

bool in_tail_region(const FineBlock& fb, double y, double delta) {
    return (fb.tail_below && y - 0.5 * delta < fb.lo) || (fb.tail_above && y + 0.5 * delta >= fb.hi);
}

void require_constant(const Schedule& s, const char* who) {
    require(!s.x_dependent(), ErrorCode::XDependentSchedule,
            std::string(who) + " needs h, sigma, delta, sigma_0 and r constant in x");
}

void require_gradient_variant(const TargetDensity& target) {
    require(target.family() != Family::Uniform, ErrorCode::UnsupportedVariant,
            "gradient bounds need a density differentiable on its support");
    require(target.edge_order() == 0, ErrorCode::UnsupportedVariant,
            "gradient bounds need log f with an integrable derivative; f vanishes at a support end");
}

// Per-draw integrands of the MC terms; the draw loop is shared by all bounds.
struct DrawTerms {
    double local = 0.0;
    double tail_gradient = 0.0;  // already multiplied by the indicator
    double tail_quadratic = 0.0;
};

template <class PerDraw>
void run_draws(const TargetDensity& target, const BoundOptions& opt, PerDraw&& per_draw, MeanSe& local,
               MeanSe& tail_g, MeanSe& tail_q, MeanSe& sum) {
    require(opt.n >= 100, ErrorCode::InvalidCount, "bound MC needs n >= 100");
    JointSample js;
    for (std::size_t first = 0; first < opt.n; first += kTaskDraws) {
        const std::size_t count = std::min(kTaskDraws, opt.n - first);
        target.sample_range(first, count, opt.seed, js);
        for (std::size_t k = 0; k < count; ++k) {
            const DrawTerms t = per_draw(js.y[k], js.x_at(k));
            local.add(t.local);
            tail_g.add(t.tail_gradient);
            tail_q.add(t.tail_quadratic);
            sum.add(t.local + t.tail_gradient + t.tail_quadratic);
        }
    }
}

BoundBreakdown assemble(std::string bound, std::string variant, std::size_t m, double q, const Schedule& s,
                        const BoundOptions& opt, const MeanSe& local, const MeanSe& tail_g,
                        const MeanSe& tail_q, const MeanSe& sum, double riemann, double gtail,
                        std::optional<double> logit) {
    BoundBreakdown b;
    b.bound = std::move(bound);
    b.variant = std::move(variant);
    b.m = m;
    b.q = q;
    b.n = opt.n;
    b.seed = opt.seed;
    b.schedule = s.to_json();
    b.terms.push_back({"local_modulus", local.acc.mean(), local.acc.std_error(), false});
    b.terms.push_back({"riemann", riemann, 0.0, true});
    b.terms.push_back({"gaussian_tail", gtail, 0.0, true});
    b.terms.push_back({"tail_gradient", tail_g.acc.mean(), tail_g.acc.std_error(), false});
    b.terms.push_back({"tail_quadratic", tail_q.acc.mean(), tail_q.acc.std_error(), false});
    b.total = sum.acc.mean() + riemann + gtail;
    b.total_se = sum.acc.std_error();
    if (logit) {
        b.terms.push_back({"logit", *logit, 0.0, true});
        b.total += std::abs(*logit);
    }
    return b;
}

double quadratic_tail(double y, int d, double r, double sigma0) {
    return y * y / (2.0 * sigma0 * sigma0) -
           (d * std::log(0.5 * r) - 0.5 * d * std::log(kTwoPi * sigma0 * sigma0));
}

}  // namespace

const BoundTerm& BoundBreakdown::term(const std::string& key) const {
    for (const auto& t : terms)
        if (t.key == key) return t;
    fail(ErrorCode::InvalidParameter, "no bound term named " + key);
}

nlohmann::json BoundBreakdown::to_json() const {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& term : terms) {
        nlohmann::json e{{"value", term.value}, {"se", term.std_error},
                         {"method", term.closed_form ? "closed_form" : "mc"}};
        if (term.key == "logit") {
            e["magnitude"] = std::abs(term.value);
            e["sign"] = term.value < 0.0 ? "negative" : "nonnegative";
        }
        t[term.key] = e;
    }
    return {{"bound", bound}, {"variant", variant}, {"m", m},          {"q", q},
            {"terms", t},     {"total", total},     {"total_se", total_se}, {"n", n},
            {"seed", seed},   {"schedule", schedule}};
}

double riemann_term(int d, double delta, double h, double sigma) {
    return 2.0 * 3.0 * std::pow(d, 1.5) * std::pow(delta, d - 1) * h / (std::pow(kTwoPi, 0.5 * d) * std::pow(sigma, d));
}

double gaussian_tail_term(double delta, double sigma) {
    const double r = delta / sigma;
    return 2.0 * std::exp(-r * r / 8.0);
}

double logit_term(int d_x, double R, double s) {
    require(R > 0.0 && s > 0.0, ErrorCode::InvalidParameter, "logit term needs R, s > 0");
    const double a = std::pow(d_x, 0.5 * d_x) * std::exp(-R * s) / std::pow(s, 0.5 * d_x);
    return a < 1.0 ? std::log1p(-a) : -kInf;
}

// ---- grid bound ----

BoundBreakdown corollary1_bound(const TargetDensity& target, const Schedule& schedule, std::size_t m, double q,
                                BoundVariant variant, const BoundOptions& opt) {
    require(target.dim_y() == 1, ErrorCode::UnsupportedDimension, "bounds are evaluated for d = 1");
    require(schedule.m == m, ErrorCode::InconsistentInputs, "schedule and bound disagree on m");
    require_constant(schedule, "corollary1_bound");
    if (variant == BoundVariant::PartI) {
        require(target.support().kind == SupportSpec::Kind::FullSpace, ErrorCode::UnsupportedVariant,
                "the log-ratio variant needs a density positive on the whole line");
    } else {
        require_gradient_variant(target);
    }
    const double delta = schedule.delta.factor, h = schedule.h.factor, sigma = schedule.sigma.factor;
    const double r = schedule.r.factor, sigma0 = schedule.sigma0.factor;
    const FineBlock fb = grid_partition(target, m).fine_block();
    const int d = 1;
    const double root_d = 1.0;

    MeanSe local, tg, tq, sum;
    run_draws(target, opt, [&](double y, std::span<const double> x) {
        DrawTerms t;
        const bool in_b = in_tail_region(fb, y, delta);
        if (variant == BoundVariant::PartII) {
            t.local = delta * root_d / 2.0 * target.grad_log_pdf_sup(y - 0.5 * delta, y + 0.5 * delta, x);
            if (in_b) t.tail_gradient = r * root_d / 2.0 * target.grad_log_pdf_sup(y - 0.5 * r, y + 0.5 * r, x);
        } else {
            const double lf = target.log_pdf(y, x);
            t.local = lf - std::log(target.inf_pdf(y - 0.5 * delta, y + 0.5 * delta, x));
            if (in_b) t.tail_gradient = lf - std::log(target.inf_pdf(y - 0.5 * r, y + 0.5 * r, x));
        }
        if (in_b) t.tail_quadratic = quadratic_tail(y, d, r, sigma0);
        return t;
    }, local, tg, tq, sum);

    return assemble("corollary1", variant == BoundVariant::PartI ? "part1" : "part2", m, q, schedule, opt, local,
                    tg, tq, sum, riemann_term(d, delta, h, sigma), gaussian_tail_term(delta, sigma), std::nullopt);
}

// ---- covariate-grid bound ----

namespace {

// sup over z in [zlo, zhi] and t in the box of half-width rho around x
// (clipped to [0,1]^d_x) of the (z, t) gradient norm. Exact in z through
// grad_log_pdf_sup, a 3-point grid per covariate axis in t.
double joint_gradient_sup(const TargetDensity& target, double zlo, double zhi, std::span<const double> x,
                          double rho) {
    const int dx = static_cast<int>(x.size());
    std::vector<std::vector<double>> axes(dx);
    for (int a = 0; a < dx; ++a) {
        const double lo = std::max(0.0, x[a] - rho), hi = std::min(1.0, x[a] + rho);
        axes[a] = {lo, 0.5 * (lo + hi), hi};
    }
    const std::size_t total = dx == 1 ? 3 : 9;
    const auto [sa, sb] = target.support().bounds(x);
    double gz = 0.0, gt = 0.0;
    std::vector<double> t(dx), g(dx);
    for (std::size_t i = 0; i < total; ++i) {
        t[0] = axes[0][i % 3];
        if (dx == 2) t[1] = axes[1][i / 3];
        gz = std::max(gz, target.grad_log_pdf_sup(zlo, zhi, t));
        for (double z : {zlo, 0.5 * (zlo + zhi), zhi}) {
            const double zc = std::clamp(z, sa, sb);
            target.grad_log_pdf_x(zc, t, g);
            double n2 = 0.0;
            for (double v : g) n2 += v * v;
            gt = std::max(gt, std::sqrt(n2));
        }
    }
    return std::sqrt(gz * gz + gt * gt);
}

}  // namespace

BoundBreakdown corollary3_bound(const TargetDensity& target, const Schedule& schedule, std::size_t m,
                                const XGrid& xgrid, double q, const BoundOptions& opt) {
    require(target.dim_y() == 1, ErrorCode::UnsupportedDimension, "bounds are evaluated for d = 1");
    require(schedule.m == m, ErrorCode::InconsistentInputs, "schedule and bound disagree on m");
    require(xgrid.dimension() == target.dim_x(), ErrorCode::InconsistentInputs, "x grid dimension differs from d_x");
    require(schedule.R.has_value(), ErrorCode::InconsistentInputs, "corollary3_bound needs R in the schedule");
    require_constant(schedule, "corollary3_bound");
    require_gradient_variant(target);
    const auto& law = target.x_law();
    for (int a = 0; a < target.dim_x(); ++a)
        require(!law.is_point() && law.lower()[a] == 0.0 && law.upper()[a] == 1.0, ErrorCode::UnsupportedVariant,
                "corollary3_bound needs X = [0,1]^d_x");

    const double delta = schedule.delta.factor, h = schedule.h.factor, sigma = schedule.sigma.factor;
    const double r = schedule.r.factor, sigma0 = schedule.sigma0.factor;
    const double s = xgrid.squared_diagonal();
    const double R = *schedule.R;
    const FineBlock fb = grid_partition(target, m).fine_block();
    const int d = 1;

    MeanSe local, tg, tq, sum;
    run_draws(target, opt, [&](double y, std::span<const double> x) {
        DrawTerms t;
        t.local = (delta / 2.0 + std::sqrt(s)) *
                  joint_gradient_sup(target, y - 0.5 * delta, y + 0.5 * delta, x, std::sqrt(s));
        if (in_tail_region(fb, y, delta)) {
            t.tail_gradient = r / 2.0 * joint_gradient_sup(target, y - 0.5 * r, y + 0.5 * r, x, r);
            t.tail_quadratic = quadratic_tail(y, d, r, sigma0);
        }
        return t;
    }, local, tg, tq, sum);

    return assemble("corollary3", "", m, q, schedule, opt, local, tg, tq, sum, riemann_term(d, delta, h, sigma),
                    gaussian_tail_term(delta, sigma), logit_term(target.dim_x(), R, s));
}

// ---- equal-probability bound ----

BoundBreakdown corollary6_bound(const TargetDensity& target, const Schedule& schedule, std::size_t m,
                                const BoundOptions& opt) {
    require(target.dim_y() == 1, ErrorCode::UnsupportedDimension, "corollary6_bound needs d = 1");
    require(schedule.m == m, ErrorCode::InconsistentInputs, "schedule and bound disagree on m");
    require(schedule.p.has_value(), ErrorCode::InconsistentInputs, "corollary6_bound needs an M4 schedule");
    require_constant(schedule, "corollary6_bound");
    require_gradient_variant(target);

    const double delta = schedule.delta.factor, h = schedule.h.factor, sigma = schedule.sigma.factor;
    const double r = schedule.r.factor, sigma0 = schedule.sigma0.factor;
    const double p = *schedule.p;
    const double offset = epp_offset(target, m, p);
    const double top = offset + static_cast<double>(m) * p;

    MeanSe local, tg, tq, sum;
    run_draws(target, opt, [&](double y, std::span<const double> x) {
        DrawTerms t;
        const auto [sa, sb] = target.support_at(x);
        FineBlock fb;
        fb.tail_below = offset > 1e-15;
        fb.tail_above = 1.0 - top > 1e-15;
        fb.lo = fb.tail_below ? target.quantile(offset, x) : sa;
        fb.hi = fb.tail_above ? target.quantile(top, x) : sb;
        t.local = delta / 2.0 * target.grad_log_pdf_sup(y - 0.5 * delta, y + 0.5 * delta, x);
        if (in_tail_region(fb, y, delta)) {
            t.tail_gradient = r / 2.0 * target.grad_log_pdf_sup(y - 0.5 * r, y + 0.5 * r, x);
            t.tail_quadratic = quadratic_tail(y, 1, r, sigma0);
        }
        return t;
    }, local, tg, tq, sum);

    return assemble("corollary6", "", m, 0.0, schedule, opt, local, tg, tq, sum, riemann_term(1, delta, h, sigma),
                    gaussian_tail_term(delta, sigma), std::nullopt);
}

// ---- rates ----

std::string to_string(RateModel r) {
    switch (r) {
        case RateModel::M0: return "M0";
        case RateModel::M1: return "M1";
        case RateModel::M3: return "M3";
        case RateModel::M4Laplace: return "M4-laplace";
        case RateModel::M0Laplace: return "M0-laplace";
    }
    return "?";
}

RateModel rate_model_from_string(const std::string& s) {
    for (auto r : {RateModel::M0, RateModel::M1, RateModel::M3, RateModel::M4Laplace, RateModel::M0Laplace})
        if (to_string(r) == s) return r;
    fail(ErrorCode::InvalidParameter, "unknown rate model '" + s + "'");
}

double rate_exponent(RateModel model, int d, int d_x, double q, double eps) {
    require(eps > 0.0, ErrorCode::InvalidParameter, "eps must be positive");
    switch (model) {
        case RateModel::M4Laplace: return 1.0 / (3.0 + eps);
        case RateModel::M0Laplace: return 1.0 / (2.0 + eps);
        default: break;
    }
    require(q > 2.0, ErrorCode::InvalidMoment, "moment order q must exceed 2");
    require(d >= 1, ErrorCode::UnsupportedDimension, "d must be at least 1");
    const double inner = d * (2.0 + 1.0 / (q - 2.0) + eps);
    if (model == RateModel::M3) {
        require(d_x >= 1, ErrorCode::UnsupportedDimension, "d_x must be at least 1");
        return 1.0 / (d_x + inner);
    }
    return 1.0 / inner;
}

nlohmann::json RateFit::to_json() const {
    nlohmann::json j{{"slope", slope}, {"intercept", intercept}, {"slope_se", slope_se},
                     {"used", used},   {"excluded", excluded}};
    j["theoretical"] = theoretical ? nlohmann::json(*theoretical) : nlohmann::json(nullptr);
    return j;
}

RateFit fit_rate(const std::vector<SeriesPoint>& series) {
    RateFit fit;
    std::vector<double> lx, ly;
    for (const auto& p : series) {
        const auto& e = p.estimate;
        if (e.value > 3.0 * e.std_error && e.value > 0.0) {
            lx.push_back(std::log(static_cast<double>(p.m)));
            ly.push_back(std::log(e.value));
        } else {
            ++fit.excluded;
        }
    }
    fit.used = lx.size();
    require(fit.used >= 3, ErrorCode::InsufficientPoints,
            "rate fit needs 3 points above 3 SE, have " + std::to_string(fit.used));
    const double n = static_cast<double>(fit.used);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    require(sxx > 0.0, ErrorCode::InsufficientPoints, "rate fit needs distinct m values");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        const double res = ly[i] - fit.intercept - fit.slope * lx[i];
        rss += res * res;
    }
    fit.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
    return fit;
}

// ---- appendix inequalities ----

LemmaGap lemma1_gap(int d, double delta, double h, double sigma, double offset) {
    require(d >= 1, ErrorCode::UnsupportedDimension, "d must be at least 1");
    require(h > 0.0 && sigma > 0.0, ErrorCode::InvalidParameter, "h and sigma must be positive");
    require(delta > 3.0 * std::sqrt(static_cast<double>(d)) * h, ErrorCode::HypothesisViolated,
            "needs delta > 3 sqrt(d) h");
    double off = std::fmod(offset, h);
    if (off < 0.0) off += h;

    // Cells [off + k h, off + (k+1) h] inside [0, delta] on one axis.
    std::vector<double> centers;
    for (auto k = static_cast<long long>(std::ceil(-off / h)); off + (k + 1) * h <= delta; ++k)
        if (off + k * h >= 0.0) centers.push_back(off + (static_cast<double>(k) + 0.5) * h);

    LemmaGap g;
    const double n_axis = static_cast<double>(centers.size());
    if (std::pow(n_axis, d) <= 1048576.0) {
        // Explicit enumeration of every cell in the cube.
        const std::size_t na = centers.size();
        std::size_t total = 1;
        for (int a = 0; a < d; ++a) total *= na;
        const double log_norm = -0.5 * d * std::log(kTwoPi) - d * std::log(sigma) + d * std::log(h);
        double s = 0.0;
        for (std::size_t i = 0; i < total; ++i) {
            std::size_t rem = i;
            double r2 = 0.0;
            for (int a = 0; a < d; ++a) {
                const double c = centers[rem % na];
                rem /= na;
                r2 += c * c;
            }
            s += std::exp(log_norm - 0.5 * r2 / (sigma * sigma));
        }
        g.lhs = s;
    } else {
        // The inside set is a product over axes, so the sum factorizes.
        double axis = 0.0;
        for (double c : centers) axis += h * normal_pdf(c, 0.0, sigma);
        g.lhs = std::pow(axis, d);
    }
    const double cube = std::pow(normal_interval_prob(0.0, delta, sigma), d);
    g.rhs = cube - 3.0 * std::pow(d, 1.5) * std::pow(delta, d - 1) * h / (std::pow(kTwoPi, 0.5 * d) * std::pow(sigma, d));
    g.margin = g.lhs - g.rhs;
    return g;
}

LemmaGap lemma2_gap(int d, double delta, double sigma) {
    require(d >= 1, ErrorCode::UnsupportedDimension, "d must be at least 1");
    require(delta > 0.0 && sigma > 0.0, ErrorCode::InvalidParameter, "delta and sigma must be positive");
    const double tail = std::erfc(delta / (2.0 * std::numbers::sqrt2 * sigma));  // 1 - P(|Z| <= delta/2)
    const double miss = -std::expm1(d * std::log1p(-tail));                      // 1 - lhs
    const double ratio = delta / sigma;
    const double c = 8.0 * d / ratio * kInvSqrt2Pi * std::exp(-ratio * ratio / 8.0);
    LemmaGap g;
    g.lhs = 1.0 - miss;
    g.rhs = 1.0 - c;
    g.margin = c - miss;
    return g;
}

std::string to_string(CubeSide s) {
    switch (s) {
        case CubeSide::TwoSided: return "two_sided";
        case CubeSide::Left: return "left";
        case CubeSide::Right: return "right";
    }
    return "?";
}

LemmaGap lemma3_gap(const std::vector<double>& edges, const std::vector<double>& mu, double y, double delta,
                    double sigma, CubeSide side) {
    require(edges.size() >= 2 && mu.size() + 1 == edges.size(), ErrorCode::InvalidParameter,
            "need m + 1 edges and m points");
    require(delta > 0.0 && sigma > 0.0, ErrorCode::InvalidParameter, "delta and sigma must be positive");
    double h = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
        require(edges[j + 1] > edges[j], ErrorCode::InvalidParameter, "edges must increase");
        require(mu[j] >= edges[j] && mu[j] <= edges[j + 1], ErrorCode::HypothesisViolated,
                "point " + std::to_string(j) + " lies outside its cell");
        h = std::max(h, edges[j + 1] - edges[j]);
    }
    const double lo = side == CubeSide::Right ? y : y - 0.5 * delta;
    const double hi = side == CubeSide::Left ? y : y + 0.5 * delta;
    require(lo >= edges.front() && hi <= edges.back(), ErrorCode::HypothesisViolated,
            "the cube is not covered by the cells");
    LemmaGap g;
    for (std::size_t j = 0; j < mu.size(); ++j) {
        const double len = std::min(hi, edges[j + 1]) - std::max(lo, edges[j]);
        if (len > 0.0) g.lhs += len * normal_pdf(y, mu[j], sigma);
    }
    const double ratio = delta / sigma;
    double rhs = 1.0 - 6.0 * h * kInvSqrt2Pi / sigma - 8.0 / ratio * kInvSqrt2Pi * std::exp(-ratio * ratio / 8.0);
    if (side != CubeSide::TwoSided) rhs *= 0.5;
    g.rhs = rhs;
    g.margin = g.lhs - g.rhs;
    return g;
}

// ---- sweeps ----

namespace {

double log_uniform(Stream& s, double lo, double hi) {
    return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * s.uniform());
}

LemmaRow draw_lemma(int lemma, std::size_t i, std::uint64_t seed) {
    Stream s(seed, static_cast<std::uint64_t>(lemma) * 0x100000000ULL + i);
    LemmaRow row;
    row.lemma = lemma;
    row.sigma = log_uniform(s, 1e-3, 10.0);
    row.delta = row.sigma * log_uniform(s, 0.1, 50.0);
    if (lemma == 1) {
        row.d = 1 + static_cast<int>(s.next() % 3);
        const double cap = row.delta / (3.0 * std::sqrt(static_cast<double>(row.d)));
        row.h = cap * log_uniform(s, 1e-3, 1.0) * (1.0 - 1e-9);
        const double offset = row.h * s.uniform();
        row.extra = std::to_string(offset);
        row.gap = lemma1_gap(row.d, row.delta, row.h, row.sigma, offset);
    } else if (lemma == 2) {
        row.d = 1 + static_cast<int>(s.next() % 3);
        row.gap = lemma2_gap(row.d, row.delta, row.sigma);
    } else {
        row.d = 1;
        row.h = row.delta * log_uniform(s, 1e-3, 2.0);
        const auto side = static_cast<CubeSide>(s.next() % 3);
        row.extra = to_string(side);
        // Random cells of length in [0.2h, h] covering [-delta/2, delta/2],
        // one random point per cell.
        std::vector<double> edges{-0.5 * row.delta - row.h * s.uniform()};
        while (edges.back() < 0.5 * row.delta) edges.push_back(edges.back() + row.h * (0.2 + 0.8 * s.uniform()));
        std::vector<double> mu;
        for (std::size_t j = 0; j + 1 < edges.size(); ++j)
            mu.push_back(edges[j] + (edges[j + 1] - edges[j]) * s.uniform());
        row.gap = lemma3_gap(edges, mu, 0.0, row.delta, row.sigma, side);
        double hmax = 0.0;
        for (std::size_t j = 0; j + 1 < edges.size(); ++j) hmax = std::max(hmax, edges[j + 1] - edges[j]);
        row.h = hmax;
    }
    return row;
}

}  // namespace

LemmaSweep sweep_lemmas(std::size_t per_lemma, std::uint64_t seed, unsigned workers) {
    require(per_lemma >= 1, ErrorCode::InvalidCount, "sweep size must be positive");
    LemmaSweep out;
    out.rows.resize(3 * per_lemma);
    const unsigned w = std::max(1u, workers ? workers : std::thread::hardware_concurrency());
    auto run = [&](unsigned id) {
        for (std::size_t i = id; i < out.rows.size(); i += w)
            out.rows[i] = draw_lemma(static_cast<int>(i / per_lemma) + 1, i % per_lemma, seed);
    };
    if (w == 1) {
        run(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned id = 0; id < w; ++id) pool.emplace_back(run, id);
    }
    for (const auto& r : out.rows)
        if (r.gap.margin < -1e-12) ++out.violations;
    return out;
}

}  // namespace smoothmix
