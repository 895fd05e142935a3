#include "smoothmix/discretization.hpp"

#include "smoothmix/error.hpp"
#include "smoothmix/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace smoothmix {

namespace {

const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

std::size_t ipow(std::size_t b, int e) {
    std::size_t r = 1;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
}

// Smallest integer k with k^e >= v (robust to rounding of pow).
std::size_t ceil_root(double v, double e) {
    auto k = static_cast<std::size_t>(std::ceil(std::pow(v, 1.0 / e) - 1e-9));
    return std::max<std::size_t>(k, 1);
}

// Covariate probes for sup_x of x-curves: grid over the x_law box.
std::vector<std::vector<double>> probe_points(const XLaw& law, int per_axis) {
    const int dx = law.dimension();
    const auto lo = law.lower();
    const auto hi = law.upper();
    if (law.is_point()) return {std::vector<double>(lo.begin(), lo.end())};
    std::vector<std::vector<double>> out;
    const std::size_t total = ipow(static_cast<std::size_t>(per_axis), dx);
    for (std::size_t i = 0; i < total; ++i) {
        std::vector<double> x(dx);
        std::size_t rem = i;
        for (int a = dx - 1; a >= 0; --a) {
            const auto idx = rem % per_axis;
            rem /= per_axis;
            x[a] = lo[a] + (hi[a] - lo[a]) * static_cast<double>(idx) / (per_axis - 1);
        }
        out.push_back(std::move(x));
    }
    return out;
}

std::pair<double, double> support_span(const TargetDensity& t) {
    const auto& sup = t.support();
    const auto lo = t.x_law().lower();
    const auto hi = t.x_law().upper();
    return {sup.lower.min_over(lo, hi), sup.upper.max_over(lo, hi)};
}

}  // namespace

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::M0: return "M0";
        case ModelKind::M1: return "M1";
        case ModelKind::M3: return "M3";
        case ModelKind::M4: return "M4";
        case ModelKind::M5: return "M5";
        case ModelKind::ExactWrapper: return "exact";
        case ModelKind::Fixed: return "fixed";
    }
    return "unknown";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "M0") return ModelKind::M0;
    if (s == "M1") return ModelKind::M1;
    if (s == "M3") return ModelKind::M3;
    if (s == "M4") return ModelKind::M4;
    if (s == "M5") return ModelKind::M5;
    if (s == "exact") return ModelKind::ExactWrapper;
    fail(ErrorCode::ConfigError, "unknown model kind '" + s + "'");
}

// ---- Partition ----

Partition Partition::block(SupportSpec domain, double origin, double h, std::size_t k,
                           bool tail_below, bool tail_above) {
    require(h > 0.0, ErrorCode::InvalidParameter, "cell side must be positive");
    require(k >= 1, ErrorCode::InvalidCount, "need at least one cell per axis");
    Partition p;
    p.domain_ = std::move(domain);
    p.origin_ = origin;
    p.h_ = h;
    p.k_ = k;
    p.m_ = ipow(k, p.domain_.dimension);
    p.tail_below_ = tail_below;
    p.tail_above_ = tail_above;
    return p;
}

double Partition::lo(std::size_t j, int axis) const {
    require(j < m_, ErrorCode::InvalidParameter, "cell index out of range");
    const std::size_t stride = ipow(k_, dimension() - 1 - axis);
    const std::size_t idx = (j / stride) % k_;
    return origin_ + h_ * static_cast<double>(idx);
}

double Partition::hi(std::size_t j, int axis) const {
    require(j < m_, ErrorCode::InvalidParameter, "cell index out of range");
    const std::size_t stride = ipow(k_, dimension() - 1 - axis);
    const std::size_t idx = (j / stride) % k_;
    // The last edge is computed directly so the block end is exact.
    return idx + 1 == k_ ? block_hi() : origin_ + h_ * static_cast<double>(idx + 1);
}

nlohmann::json Partition::to_json() const {
    return {{"domain", domain_.to_json()}, {"m", m_}, {"per_axis", k_}, {"h", h_},
            {"block", {block_lo(), block_hi()}}, {"tail_below", tail_below_},
            {"tail_above", tail_above_}};
}

Partition grid_partition(const SupportSpec& domain, std::size_t m,
                         std::optional<std::pair<double, double>> span) {
    require(m >= 2, ErrorCode::InvalidCount, "grid partition needs m >= 2");
    const double lm = std::log(static_cast<double>(m));
    switch (domain.kind) {
        case SupportSpec::Kind::HalfLine:
            return Partition::block(domain, 0.0, lm / static_cast<double>(m), m, false, true);
        case SupportSpec::Kind::FullSpace: {
            const std::size_t k = domain.dimension == 1 ? m : ceil_root(static_cast<double>(m), domain.dimension);
            return Partition::block(domain, -lm, 2.0 * lm / static_cast<double>(k), k, true, true);
        }
        case SupportSpec::Kind::Interval:
        case SupportSpec::Kind::XDependentInterval: {
            require(domain.dimension == 1, ErrorCode::UnsupportedDimension,
                    "interval partitions are one-dimensional");
            double a, b;
            if (span) {
                std::tie(a, b) = *span;
            } else {
                require(domain.kind == SupportSpec::Kind::Interval, ErrorCode::InvalidParameter,
                        "x-dependent support needs a bounding span");
                const std::vector<double> x0{0.0};
                std::tie(a, b) = domain.bounds(x0);
            }
            require(a < b, ErrorCode::InvalidParameter, "partition span must have a < b");
            return Partition::block(domain, a, (b - a) / static_cast<double>(m), m, false, false);
        }
    }
    fail(ErrorCode::InvalidParameter, "unsupported domain");
}

Partition grid_partition(const TargetDensity& target, std::size_t m) {
    if (target.support().bounded()) return grid_partition(target.support(), m, support_span(target));
    return grid_partition(target.support(), m);
}

// ---- EPP ----

double epp_offset(const TargetDensity& target, std::size_t m, double p) {
    if (target.support().kind == SupportSpec::Kind::FullSpace)
        return 0.5 * (1.0 - static_cast<double>(m) * p);
    return 0.0;
}

EppPartition epp_partition(const TargetDensity& target, std::span<const double> x, std::size_t m,
                           double p) {
    require(target.dim_y() == 1, ErrorCode::UnsupportedDimension, "EPP needs d = 1");
    require(m >= 1, ErrorCode::InvalidCount, "EPP needs m >= 1");
    require(p > 0.0 && static_cast<double>(m) * p <= 1.0 + 1e-12, ErrorCode::InvalidProb,
            "EPP needs 0 < p <= 1/m");
    EppPartition out;
    out.x.assign(x.begin(), x.end());
    out.m = m;
    out.p = p;
    out.offset = epp_offset(target, m, p);
    const auto [a, b] = target.support_at(x);
    out.edges.resize(m + 1);
    for (std::size_t j = 0; j <= m; ++j) {
        const double level = out.offset + static_cast<double>(j) * p;
        if (level <= 0.0) {
            require(std::isfinite(a), ErrorCode::NonInvertible, "quantile at level 0 is unbounded");
            out.edges[j] = a;
        } else if (level >= 1.0) {
            require(std::isfinite(b), ErrorCode::NonInvertible, "quantile at level 1 is unbounded");
            out.edges[j] = b;
        } else {
            out.edges[j] = target.quantile(level, x);
        }
    }
    for (std::size_t j = 0; j < m; ++j)
        out.h_max = std::max(out.h_max, out.edges[j + 1] - out.edges[j]);
    return out;
}

// ---- XGrid ----

XGrid::XGrid(int d_x, std::size_t k) : d_x_(d_x), k_(k), n_(0) {
    require(d_x == 1 || d_x == 2, ErrorCode::UnsupportedDimension, "x grid supports d_x in {1, 2}");
    require(k >= 1, ErrorCode::InvalidCount, "x grid needs k >= 1");
    n_ = ipow(k, d_x);
}

std::vector<double> XGrid::center(std::size_t i) const {
    require(i < n_, ErrorCode::InvalidParameter, "x cell index out of range");
    std::vector<double> c(d_x_);
    std::size_t rem = i;
    for (int a = d_x_ - 1; a >= 0; --a) {
        c[a] = (static_cast<double>(rem % k_) + 0.5) / static_cast<double>(k_);
        rem /= k_;
    }
    return c;
}

std::size_t XGrid::cell_of(std::span<const double> x) const {
    require(static_cast<int>(x.size()) == d_x_, ErrorCode::InvalidParameter, "covariate dimension mismatch");
    std::size_t idx = 0;
    for (int a = 0; a < d_x_; ++a) {
        require(x[a] >= 0.0 && x[a] <= 1.0, ErrorCode::InvalidParameter, "covariate outside [0,1]");
        auto c = static_cast<std::size_t>(x[a] * static_cast<double>(k_));
        c = std::min(c, k_ - 1);
        idx = idx * k_ + c;
    }
    return idx;
}

nlohmann::json XGrid::to_json() const {
    return {{"d_x", d_x_}, {"k", k_}, {"N", n_}, {"s", squared_diagonal()}};
}

XGrid x_grid(int d_x, std::size_t k) { return XGrid(d_x, k); }

// ---- schedules ----

nlohmann::json XScalar::to_json() const {
    if (!curve) return factor;
    return {{"factor", factor}, {"curve", curve->to_json()}};
}

bool Schedule::x_dependent() const {
    return h.x_dependent() || sigma.x_dependent() || delta.x_dependent() ||
           sigma0.x_dependent() || r.x_dependent();
}

nlohmann::json Schedule::to_json() const {
    nlohmann::json j{{"kind", to_string(kind)}, {"m", m}, {"d", d}, {"d_x", d_x},
                     {"h", h.to_json()}, {"sigma", sigma.to_json()}, {"delta", delta.to_json()},
                     {"sigma0", sigma0.to_json()}, {"r", r.to_json()}, {"recipe", recipe}};
    if (p) j["p"] = *p;
    if (R) j["R"] = *R;
    if (s) j["s"] = *s;
    if (k) j["k"] = *k;
    return j;
}

namespace {

Schedule grid_schedule(ModelKind kind, const TargetDensity& target, std::size_t m) {
    Schedule s;
    s.kind = kind;
    s.m = m;
    s.d = target.dim_y();
    s.d_x = target.dim_x();
    const Partition part = grid_partition(target, m);
    const double h = part.side();
    double r = 1.0;
    if (target.support().bounded()) {
        // Narrowest support over X, so the cube fits inside every f(.|x).
        double narrow = kInf;
        for (const auto& x : probe_points(target.x_law(), 9)) {
            const auto [a, b] = target.support_at(x);
            narrow = std::min(narrow, b - a);
        }
        r = std::min(1.0, narrow);
    }
    s.h = XScalar::constant(h);
    s.sigma = XScalar::constant(std::sqrt(h));
    s.delta = XScalar::constant(std::pow(h, 0.25));
    s.r = XScalar::constant(r);
    s.sigma0 = XScalar::constant(r);
    s.recipe = "grid: sigma = h^1/2, delta = h^1/4, sigma0 = r";
    if (kind == ModelKind::M3) {
        const std::size_t k = ceil_root(static_cast<double>(m), 2.0 * s.d_x);
        s.k = k;
        s.s = static_cast<double>(s.d_x) / static_cast<double>(k * k);
        s.R = 1.0 / (*s.s * *s.s);
        s.recipe += "; k = ceil(m^(1/(2 d_x))), s = d_x k^-2, R = s^-2";
    }
    return s;
}

double max_epp_length(const TargetDensity& target, std::size_t m, double p) {
    double h = 0.0;
    for (const auto& x : probe_points(target.x_law(), 33))
        h = std::max(h, epp_partition(target, x, m, p).h_max);
    return h;
}

Schedule epp_schedule(ModelKind kind, const TargetDensity& target, std::size_t m) {
    Schedule s;
    s.kind = kind;
    s.m = m;
    s.d = 1;
    s.d_x = target.dim_x();
    const double md = static_cast<double>(m);
    const auto lo = target.x_law().lower();
    const auto hi = target.x_law().upper();
    const Family fam = target.family();

    if (kind == ModelKind::M4 && fam == Family::Exponential) {
        const double p = (md - std::sqrt(md)) / (md * md);
        const double g = target.parameter("rate").min_over(lo, hi);
        const double h = std::log1p(p / (1.0 - p * md)) / g;
        s.p = p;
        s.h = XScalar::constant(h);
        s.sigma = XScalar::constant(std::pow(h, 0.25));
        s.delta = XScalar::constant(std::pow(h, 0.125));
        s.r = XScalar::constant(1.0);
        s.sigma0 = XScalar::constant(2.0 * kInvSqrt2Pi);
        s.recipe = "epp exponential: p = (m - m^1/2)/m^2, sigma = h^1/4, delta = h^1/8";
        return s;
    }
    if (kind == ModelKind::M4 && fam == Family::Laplace) {
        const double p = 1.0 / (md + std::pow(md, 0.25));
        const double g = target.parameter("rate").min_over(lo, hi);
        const double h = std::log1p(2.0 * p / (1.0 - p * md)) / g;
        s.p = p;
        s.h = XScalar::constant(h);
        s.sigma = XScalar::constant(std::sqrt(h));
        s.delta = XScalar::constant(std::pow(h, 0.25));
        s.r = XScalar::constant(1.0);
        s.sigma0 = XScalar::constant(2.0 * kInvSqrt2Pi);
        s.recipe = "epp laplace: p = 1/(m + m^1/4), sigma = h^1/2, delta = h^1/4";
        return s;
    }
    if (kind == ModelKind::M4 && fam == Family::Uniform) {
        const double p = 1.0 / md;
        const Curve& b = target.parameter("upper");
        s.p = p;
        s.h = XScalar::scaled(p, b);
        s.sigma = XScalar::scaled(std::pow(p, 0.25), b);
        s.delta = XScalar::scaled(std::pow(p, 0.125), b);
        s.r = XScalar::scaled(1.0, b);
        s.sigma0 = XScalar::scaled(2.0 * kInvSqrt2Pi, b);
        s.recipe = "epp uniform: p = 1/m, sigma = b(x) p^1/4, delta = b(x) p^1/8, r = b(x)";
        return s;
    }
    const bool bounded = fam == Family::Uniform || fam == Family::BoundedSmooth;
    if ((kind == ModelKind::M4 || kind == ModelKind::M5) && bounded) {
        const double p = 1.0 / md;
        const int n = target.edge_order();
        // M5 uses p^1/8 for edge order n <= 1, the general p^(1/(4(n+1))) above.
        const double expo = kind == ModelKind::M5 && n <= 1 ? 0.125 : 1.0 / (4.0 * (n + 1));
        double r = 1.0;
        if (fam == Family::Uniform) r = target.parameter("upper").min_over(lo, hi);
        s.p = p;
        s.h = XScalar::constant(max_epp_length(target, m, p));
        s.sigma = XScalar::constant(std::pow(p, expo));
        s.delta = XScalar::constant(std::pow(p, 0.5 * expo));
        s.r = XScalar::constant(r);
        s.sigma0 = XScalar::constant(2.0 * kInvSqrt2Pi * r);
        s.recipe = "epp bounded support: p = 1/m, sigma = p^" + std::to_string(expo) +
                   ", delta = sigma^1/2, no tail";
        return s;
    }
    fail(ErrorCode::UnsupportedCombination,
         "no schedule recipe for " + to_string(kind) + " with family " + to_string(fam));
}

}  // namespace

Schedule default_schedule(ModelKind kind, const TargetDensity& target, std::size_t m) {
    require(m >= 4, ErrorCode::InvalidCount, "default schedules need m >= 4");
    switch (kind) {
        case ModelKind::M0:
        case ModelKind::M1:
        case ModelKind::M3: return grid_schedule(kind, target, m);
        case ModelKind::M4:
        case ModelKind::M5: return epp_schedule(kind, target, m);
        default: break;
    }
    fail(ErrorCode::UnsupportedCombination, "no schedule recipe for model kind " + to_string(kind));
}

// ---- validation ----

double sigma0_condition(const Schedule& s, std::span<const double> x) {
    const double s0 = s.sigma0.at(x);
    const double r = s.r.at(x);
    return std::pow(kInvSqrt2Pi / s0 * 0.5 * r, s.d);
}

nlohmann::json ValidationReport::to_json() const {
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& r : ratios)
        rs.push_back({{"name", r.name}, {"values", r.values}, {"decreasing", r.decreasing},
                      {"terminal", r.values.empty() ? 0.0 : r.values.back()}});
    return {{"m_grid", m_grid}, {"ratios", rs}, {"sigma0_condition", sigma0_condition},
            {"sigma0_limit", sigma0_limit}, {"sigma0_ok", sigma0_ok}, {"violations", violations}};
}

ValidationReport validate_schedule(std::span<const Schedule> schedules,
                                   std::span<const std::vector<double>> x_probe) {
    ValidationReport rep;
    require(schedules.size() >= 3, ErrorCode::InvalidCount, "validation needs at least 3 schedules");
    for (std::size_t i = 1; i < schedules.size(); ++i)
        require(schedules[i].m > schedules[i - 1].m, ErrorCode::InvalidParameter,
                "schedules must have increasing m");

    std::vector<std::vector<double>> probes(x_probe.begin(), x_probe.end());
    if (probes.empty()) {
        // Cell midpoints of a grid on [0,1]^{d_x}; endpoints are avoided
        // because curves such as b(x) = x vanish there.
        const int dx = schedules.front().d_x;
        const int per = dx == 1 ? 33 : 9;
        const XLaw inner = XLaw::uniform(std::vector<double>(dx, 0.5 / per),
                                         std::vector<double>(dx, 1.0 - 0.5 / per));
        probes = probe_points(inner, per);
    }

    const bool m3 = schedules.front().kind == ModelKind::M3;
    std::vector<std::string> names{"delta", "sigma/delta", "delta^(d-1) h/sigma^d", "h/sigma", "sigma/r"};
    if (m3) names.push_back("exp(-R s)/s^(d_x/2)");
    for (const auto& n : names) rep.ratios.push_back({n, {}, true});

    const bool epp = schedules.front().kind == ModelKind::M4 || schedules.front().kind == ModelKind::M5;
    const int d = schedules.front().d;
    rep.sigma0_limit = epp ? 0.25 : std::pow(2.0, -(d + 1));

    for (const auto& s : schedules) {
        rep.m_grid.push_back(s.m);
        std::vector<double> sup(names.size(), -kInf);
        double cond = -kInf;
        for (const auto& x : probes) {
            const double h = s.h.at(x), sg = s.sigma.at(x), dl = s.delta.at(x), r = s.r.at(x);
            const double vals[] = {dl, sg / dl, std::pow(dl, s.d - 1) * h / std::pow(sg, s.d), h / sg, sg / r};
            for (std::size_t i = 0; i < 5; ++i) sup[i] = std::max(sup[i], vals[i]);
            cond = std::max(cond, sigma0_condition(s, x));
        }
        if (m3) {
            require(s.R && s.s, ErrorCode::InvalidParameter, "M3 schedule needs R and s");
            sup[5] = std::exp(-*s.R * *s.s) / std::pow(*s.s, 0.5 * s.d_x);
        }
        for (std::size_t i = 0; i < names.size(); ++i) rep.ratios[i].values.push_back(sup[i]);
        rep.sigma0_condition.push_back(cond);
        const bool pass = epp ? cond <= rep.sigma0_limit * (1.0 + 1e-12) : cond < rep.sigma0_limit;
        if (!pass) {
            rep.sigma0_ok = false;
            rep.violations.push_back("sigma0 condition fails at m = " + std::to_string(s.m) +
                                     " (value " + std::to_string(cond) + ")");
        }
    }
    for (auto& r : rep.ratios) {
        for (std::size_t i = 1; i < r.values.size(); ++i)
            if (!(r.values[i] < r.values[i - 1])) r.decreasing = false;
        if (!r.decreasing) rep.violations.push_back(r.name + " is not strictly decreasing");
    }
    return rep;
}

}  // namespace smoothmix
