#include "smoothmix/targets.hpp"

#include "smoothmix/error.hpp"
#include "smoothmix/numeric.hpp"
#include "smoothmix/quadrature.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace smoothmix {

namespace {

constexpr double kQuantileRelWidth = 1e-12;

double bisect_quantile(const std::function<double(double)>& cdf, double p, double lo, double hi) {
    // Expand an unbounded bracket until it contains p.
    for (int i = 0; i < 2000 && cdf(lo) > p; ++i) lo = lo - std::max(1.0, std::abs(lo));
    for (int i = 0; i < 2000 && cdf(hi) < p; ++i) hi = hi + std::max(1.0, std::abs(hi));
    require(cdf(lo) <= p && cdf(hi) >= p, ErrorCode::NonInvertible,
            "could not bracket the quantile");
    for (int i = 0; i < 400; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (hi - lo <= kQuantileRelWidth * std::max(1e-300, std::abs(mid))) break;
        if (mid <= lo || mid >= hi) break;
        if (cdf(mid) < p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double student_log_norm(double nu) {
    return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
           0.5 * std::log(nu * std::numbers::pi);
}

}  // namespace

std::string to_string(Family f) {
    switch (f) {
        case Family::Exponential: return "exponential";
        case Family::Laplace: return "laplace";
        case Family::Uniform: return "uniform";
        case Family::StudentTLocScale: return "student_t";
        case Family::BoundedSmooth: return "bounded_smooth";
        case Family::Custom: return "custom";
    }
    return "unknown";
}

Family family_from_string(const std::string& s) {
    if (s == "exponential") return Family::Exponential;
    if (s == "laplace") return Family::Laplace;
    if (s == "uniform") return Family::Uniform;
    if (s == "student_t") return Family::StudentTLocScale;
    if (s == "bounded_smooth") return Family::BoundedSmooth;
    if (s == "custom") return Family::Custom;
    fail(ErrorCode::ConfigError, "unknown target family '" + s + "'");
}

std::string to_string(SupportSpec::Kind k) {
    switch (k) {
        case SupportSpec::Kind::FullSpace: return "full_space";
        case SupportSpec::Kind::HalfLine: return "half_line";
        case SupportSpec::Kind::Interval: return "interval";
        case SupportSpec::Kind::XDependentInterval: return "x_interval";
    }
    return "unknown";
}

// ---- SupportSpec ----

SupportSpec SupportSpec::full_space(int d) {
    SupportSpec s;
    s.kind = Kind::FullSpace;
    s.dimension = d;
    return s;
}

SupportSpec SupportSpec::half_line() {
    SupportSpec s;
    s.kind = Kind::HalfLine;
    return s;
}

SupportSpec SupportSpec::interval(double a, double b) {
    require(a < b, ErrorCode::InvalidParameter, "interval support needs a < b");
    SupportSpec s;
    s.kind = Kind::Interval;
    s.lower = Curve::constant(a);
    s.upper = Curve::constant(b);
    return s;
}

SupportSpec SupportSpec::x_interval(Curve a, Curve b) {
    SupportSpec s;
    s.kind = Kind::XDependentInterval;
    s.lower = std::move(a);
    s.upper = std::move(b);
    return s;
}

std::pair<double, double> SupportSpec::bounds(std::span<const double> x) const {
    switch (kind) {
        case Kind::FullSpace: return {-kInf, kInf};
        case Kind::HalfLine: return {0.0, kInf};
        case Kind::Interval:
        case Kind::XDependentInterval: {
            const double a = lower(x), b = upper(x);
            require(a < b, ErrorCode::InvalidParameter, "support lower end must be below upper end");
            return {a, b};
        }
    }
    return {-kInf, kInf};
}

nlohmann::json SupportSpec::to_json() const {
    nlohmann::json j{{"kind", to_string(kind)}, {"dimension", dimension}};
    if (bounded()) {
        j["lower"] = lower.to_json();
        j["upper"] = upper.to_json();
    }
    return j;
}

// ---- XLaw ----

XLaw XLaw::uniform(std::vector<double> lo, std::vector<double> hi) {
    require(!lo.empty() && lo.size() == hi.size(), ErrorCode::InvalidParameter,
            "x_law bounds must be non-empty and of equal length");
    for (std::size_t i = 0; i < lo.size(); ++i)
        require(lo[i] < hi[i], ErrorCode::InvalidParameter, "x_law needs lower < upper per axis");
    XLaw law;
    law.lo_ = std::move(lo);
    law.hi_ = std::move(hi);
    return law;
}

XLaw XLaw::unit_cube(int d_x) {
    require(d_x >= 1, ErrorCode::InvalidParameter, "d_x must be at least 1");
    return uniform(std::vector<double>(d_x, 0.0), std::vector<double>(d_x, 1.0));
}

XLaw XLaw::point(std::vector<double> x0) {
    require(!x0.empty(), ErrorCode::InvalidParameter, "point mass needs a location");
    XLaw law;
    law.lo_ = x0;
    law.hi_ = std::move(x0);
    law.point_ = true;
    return law;
}

bool XLaw::contains(std::span<const double> x) const {
    if (x.size() != lo_.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] < lo_[i] || x[i] > hi_[i]) return false;
    return true;
}

double XLaw::density(std::span<const double> x) const {
    if (point_) return contains(x) ? kInf : 0.0;
    if (!contains(x)) return 0.0;
    double vol = 1.0;
    for (std::size_t i = 0; i < lo_.size(); ++i) vol *= hi_[i] - lo_[i];
    return 1.0 / vol;
}

void XLaw::draw(Stream& s, std::span<double> out) const {
    for (std::size_t i = 0; i < lo_.size(); ++i) {
        out[i] = point_ ? lo_[i] : lo_[i] + (hi_[i] - lo_[i]) * s.uniform();
    }
}

nlohmann::json XLaw::to_json() const {
    if (point_) return {{"type", "point"}, {"x", lo_}};
    return {{"type", "uniform"}, {"lower", lo_}, {"upper", hi_}};
}

XLaw XLaw::from_json(const nlohmann::json& j) {
    const auto type = j.value("type", std::string("uniform"));
    if (type == "point") {
        require(j.contains("x"), ErrorCode::ConfigError, "point x_law requires 'x'");
        return point(j.at("x").get<std::vector<double>>());
    }
    require(type == "uniform", ErrorCode::ConfigError, "unknown x_law type '" + type + "'");
    if (!j.contains("lower") && !j.contains("upper")) return unit_cube(j.value("dimension", 1));
    return uniform(j.at("lower").get<std::vector<double>>(), j.at("upper").get<std::vector<double>>());
}

// ---- TargetDensity construction ----

TargetDensity TargetDensity::exponential(Curve rate, XLaw x_law) {
    TargetDensity t;
    t.family_ = Family::Exponential;
    t.name_ = "exponential";
    t.support_ = SupportSpec::half_line();
    t.x_law_ = std::move(x_law);
    t.a_ = std::move(rate);
    t.validate_over_x_law();
    return t;
}

TargetDensity TargetDensity::laplace(Curve rate, XLaw x_law) {
    TargetDensity t;
    t.family_ = Family::Laplace;
    t.name_ = "laplace";
    t.support_ = SupportSpec::full_space();
    t.x_law_ = std::move(x_law);
    t.a_ = std::move(rate);
    t.validate_over_x_law();
    return t;
}

TargetDensity TargetDensity::uniform(Curve upper, XLaw x_law) {
    TargetDensity t;
    t.family_ = Family::Uniform;
    t.name_ = "uniform";
    if (upper.is_constant()) {
        t.support_ = SupportSpec::interval(0.0, upper(std::vector<double>(x_law.dimension(), 0.0)));
    } else {
        t.support_ = SupportSpec::x_interval(Curve::constant(0.0), upper);
    }
    t.x_law_ = std::move(x_law);
    t.a_ = std::move(upper);
    t.validate_over_x_law();
    return t;
}

TargetDensity TargetDensity::student_t(Curve location, Curve scale, double dof, XLaw x_law) {
    TargetDensity t;
    t.family_ = Family::StudentTLocScale;
    t.name_ = "student_t";
    t.support_ = SupportSpec::full_space();
    t.x_law_ = std::move(x_law);
    t.a_ = std::move(location);
    t.b_ = std::move(scale);
    t.dof_ = dof;
    t.validate_over_x_law();
    return t;
}

TargetDensity TargetDensity::bounded_smooth(Curve tilt, XLaw x_law) {
    TargetDensity t;
    t.family_ = Family::BoundedSmooth;
    t.name_ = "bounded_smooth";
    t.support_ = SupportSpec::interval(0.0, 1.0);
    t.x_law_ = std::move(x_law);
    t.a_ = std::move(tilt);
    t.validate_over_x_law();
    return t;
}

TargetDensity TargetDensity::custom(std::string name, CustomCallables fns, SupportSpec support,
                                    XLaw x_law, std::optional<double> density_sup) {
    require(static_cast<bool>(fns.pdf), ErrorCode::InvalidParameter, "custom target needs a pdf");
    require(support.dimension == 1, ErrorCode::UnsupportedDimension,
            "custom targets are one-dimensional in y");
    TargetDensity t;
    t.family_ = Family::Custom;
    t.name_ = std::move(name);
    t.support_ = std::move(support);
    t.x_law_ = std::move(x_law);
    t.custom_ = std::move(fns);
    t.custom_sup_ = density_sup;
    return t;
}

void TargetDensity::validate_over_x_law() const {
    const auto lo = x_law_.lower();
    const auto hi = x_law_.upper();
    switch (family_) {
        case Family::Exponential:
        case Family::Laplace:
            require(a_.min_over(lo, hi) > 0.0, ErrorCode::InvalidParameter,
                    "rate must be positive over the covariate range");
            break;
        case Family::Uniform:
            require(a_.min_over(lo, hi) > 0.0, ErrorCode::InvalidParameter,
                    "upper bound must be positive over the covariate range");
            break;
        case Family::StudentTLocScale:
            require(dof_ > 2.0, ErrorCode::InvalidParameter, "degrees of freedom must exceed 2");
            require(b_.min_over(lo, hi) > 0.0, ErrorCode::InvalidParameter,
                    "scale must be positive over the covariate range");
            break;
        case Family::BoundedSmooth:
            require(a_.min_over(lo, hi) >= -1.0 && a_.max_over(lo, hi) <= 1.0,
                    ErrorCode::InvalidParameter, "tilt must lie in [-1, 1]");
            break;
        case Family::Custom: break;
    }
}

void TargetDensity::validate_at(std::span<const double> x) const {
    switch (family_) {
        case Family::Exponential:
        case Family::Laplace:
            require(a_(x) > 0.0, ErrorCode::InvalidParameter, "rate must be positive");
            break;
        case Family::Uniform:
            require(a_(x) > 0.0, ErrorCode::InvalidParameter, "upper bound must be positive");
            break;
        case Family::StudentTLocScale:
            require(b_(x) > 0.0, ErrorCode::InvalidParameter, "scale must be positive");
            break;
        case Family::BoundedSmooth: {
            const double th = a_(x);
            require(th >= -1.0 && th <= 1.0, ErrorCode::InvalidParameter, "tilt must lie in [-1, 1]");
            break;
        }
        case Family::Custom: break;
    }
}

const Curve& TargetDensity::parameter(const std::string& key) const {
    switch (family_) {
        case Family::Exponential:
        case Family::Laplace:
            if (key == "rate") return a_;
            break;
        case Family::Uniform:
            if (key == "upper") return a_;
            break;
        case Family::StudentTLocScale:
            if (key == "location") return a_;
            if (key == "scale") return b_;
            break;
        case Family::BoundedSmooth:
            if (key == "tilt") return a_;
            break;
        case Family::Custom: break;
    }
    fail(ErrorCode::InvalidParameter, "family " + to_string(family_) + " has no parameter '" + key + "'");
}

// ---- densities ----

double TargetDensity::log_pdf(double y, std::span<const double> x) const {
    switch (family_) {
        case Family::Exponential: {
            const double g = a_(x);
            require(g > 0.0, ErrorCode::InvalidParameter, "rate must be positive");
            return y < 0.0 ? -kInf : std::log(g) - g * y;
        }
        case Family::Laplace: {
            const double g = a_(x);
            require(g > 0.0, ErrorCode::InvalidParameter, "rate must be positive");
            return std::log(0.5 * g) - g * std::abs(y);
        }
        case Family::Uniform: {
            const double b = a_(x);
            require(b > 0.0, ErrorCode::InvalidParameter, "upper bound must be positive");
            return (y < 0.0 || y > b) ? -kInf : -std::log(b);
        }
        case Family::StudentTLocScale: {
            const double c = b_(x);
            require(c > 0.0, ErrorCode::InvalidParameter, "scale must be positive");
            const double u = (y - a_(x)) / c;
            return student_log_norm(dof_) - std::log(c) - 0.5 * (dof_ + 1.0) * std::log1p(u * u / dof_);
        }
        case Family::BoundedSmooth: {
            if (y < 0.0 || y > 1.0) return -kInf;
            const double f = 1.0 + a_(x) * (2.0 * y - 1.0);
            return f > 0.0 ? std::log(f) : -kInf;
        }
        case Family::Custom: {
            const double f = custom_.pdf(y, x);
            return f > 0.0 ? std::log(f) : -kInf;
        }
    }
    return -kInf;
}

double TargetDensity::pdf(double y, std::span<const double> x) const {
    switch (family_) {
        case Family::BoundedSmooth: {
            if (y < 0.0 || y > 1.0) return 0.0;
            return std::max(0.0, 1.0 + a_(x) * (2.0 * y - 1.0));
        }
        case Family::Custom: return custom_.pdf(y, x);
        case Family::Uniform: {
            const double b = a_(x);
            require(b > 0.0, ErrorCode::InvalidParameter, "upper bound must be positive");
            return (y < 0.0 || y > b) ? 0.0 : 1.0 / b;
        }
        default: return std::exp(log_pdf(y, x));
    }
}

double TargetDensity::cdf(double y, std::span<const double> x) const {
    require(dim_y() == 1, ErrorCode::UnsupportedDimension, "cdf is defined for d = 1 only");
    switch (family_) {
        case Family::Exponential: {
            const double g = a_(x);
            require(g > 0.0, ErrorCode::InvalidParameter, "rate must be positive");
            return y <= 0.0 ? 0.0 : -std::expm1(-g * y);
        }
        case Family::Laplace: {
            const double g = a_(x);
            require(g > 0.0, ErrorCode::InvalidParameter, "rate must be positive");
            return y < 0.0 ? 0.5 * std::exp(g * y) : 1.0 - 0.5 * std::exp(-g * y);
        }
        case Family::Uniform: {
            const double b = a_(x);
            require(b > 0.0, ErrorCode::InvalidParameter, "upper bound must be positive");
            return std::clamp(y / b, 0.0, 1.0);
        }
        case Family::StudentTLocScale: {
            const double c = b_(x);
            require(c > 0.0, ErrorCode::InvalidParameter, "scale must be positive");
            if (std::isinf(y)) return y > 0 ? 1.0 : 0.0;
            return boost::math::cdf(boost::math::students_t(dof_), (y - a_(x)) / c);
        }
        case Family::BoundedSmooth: {
            if (y <= 0.0) return 0.0;
            if (y >= 1.0) return 1.0;
            return y * (1.0 - a_(x) * (1.0 - y));
        }
        case Family::Custom: {
            if (custom_.cdf) return custom_.cdf(y, x);
            const auto [a, b] = support_.bounds(x);
            if (y <= a) return 0.0;
            if (y >= b) return 1.0;
            const auto r = integrate_adaptive([&](double t) { return custom_.pdf(t, x); }, a, y, 1e-10);
            require(r.converged, ErrorCode::QuadratureFailure, "custom cdf integration failed");
            return std::clamp(r.value, 0.0, 1.0);
        }
    }
    return 0.0;
}

double TargetDensity::sf(double y, std::span<const double> x) const {
    require(dim_y() == 1, ErrorCode::UnsupportedDimension, "sf is defined for d = 1 only");
    switch (family_) {
        case Family::Exponential: {
            const double g = a_(x);
            require(g > 0.0, ErrorCode::InvalidParameter, "rate must be positive");
            return y <= 0.0 ? 1.0 : std::exp(-g * y);
        }
        case Family::Laplace: {
            const double g = a_(x);
            require(g > 0.0, ErrorCode::InvalidParameter, "rate must be positive");
            return y < 0.0 ? 1.0 - 0.5 * std::exp(g * y) : 0.5 * std::exp(-g * y);
        }
        case Family::StudentTLocScale: {
            const double c = b_(x);
            require(c > 0.0, ErrorCode::InvalidParameter, "scale must be positive");
            if (std::isinf(y)) return y > 0 ? 0.0 : 1.0;
            return boost::math::cdf(
                boost::math::complement(boost::math::students_t(dof_), (y - a_(x)) / c));
        }
        case Family::BoundedSmooth: {
            if (y <= 0.0) return 1.0;
            if (y >= 1.0) return 0.0;
            return (1.0 - y) * (1.0 + a_(x) * y);
        }
        default: return 1.0 - cdf(y, x);
    }
}

double TargetDensity::quantile(double p, std::span<const double> x) const {
    require(dim_y() == 1, ErrorCode::UnsupportedDimension, "quantile is defined for d = 1 only");
    require(p > 0.0 && p < 1.0, ErrorCode::InvalidProb, "quantile level must lie in (0, 1)");
    switch (family_) {
        case Family::Exponential: {
            const double g = a_(x);
            require(g > 0.0, ErrorCode::InvalidParameter, "rate must be positive");
            return -std::log1p(-p) / g;
        }
        case Family::Laplace: {
            const double g = a_(x);
            require(g > 0.0, ErrorCode::InvalidParameter, "rate must be positive");
            return p < 0.5 ? std::log(2.0 * p) / g : -std::log(2.0 * (1.0 - p)) / g;
        }
        case Family::Uniform: {
            const double b = a_(x);
            require(b > 0.0, ErrorCode::InvalidParameter, "upper bound must be positive");
            return p * b;
        }
        case Family::StudentTLocScale: {
            const double c = b_(x);
            require(c > 0.0, ErrorCode::InvalidParameter, "scale must be positive");
            return a_(x) + c * boost::math::quantile(boost::math::students_t(dof_), p);
        }
        case Family::BoundedSmooth: {
            const double th = a_(x);
            const double q = 1.0 - th;
            return 2.0 * p / (q + std::sqrt(q * q + 4.0 * th * p));
        }
        case Family::Custom: {
            if (custom_.quantile) return custom_.quantile(p, x);
            auto [a, b] = support_.bounds(x);
            if (std::isinf(a)) a = std::isinf(b) ? -1.0 : b - 1.0;
            if (std::isinf(b)) b = a + 2.0;
            return bisect_quantile([&](double t) { return cdf(t, x); }, p, a, b);
        }
    }
    return 0.0;
}

double TargetDensity::cell_prob(double lo, double hi, std::span<const double> x) const {
    require(lo <= hi, ErrorCode::InvalidParameter, "cell must satisfy lo <= hi");
    if (lo == hi) return 0.0;
    switch (family_) {
        case Family::Exponential:
        case Family::Laplace: {
            const double l = log_cell_prob(lo, hi, x);
            return l == -kInf ? 0.0 : std::exp(l);
        }
        default: break;
    }
    const double c_lo = cdf(lo, x);
    const double v = c_lo > 0.5 ? sf(lo, x) - sf(hi, x) : cdf(hi, x) - c_lo;
    return std::clamp(v, 0.0, 1.0);
}

double TargetDensity::log_cell_prob(double lo, double hi, std::span<const double> x) const {
    require(lo <= hi, ErrorCode::InvalidParameter, "cell must satisfy lo <= hi");
    if (lo == hi) return -kInf;
    switch (family_) {
        case Family::Exponential: {
            const double g = a_(x);
            require(g > 0.0, ErrorCode::InvalidParameter, "rate must be positive");
            if (hi <= 0.0) return -kInf;
            const double l = std::max(lo, 0.0);
            return -g * l + (std::isinf(hi) ? 0.0 : log1mexp(g * (hi - l)));
        }
        case Family::Laplace: {
            const double g = a_(x);
            require(g > 0.0, ErrorCode::InvalidParameter, "rate must be positive");
            const double w = hi - lo;
            if (lo >= 0.0)
                return std::log(0.5) - g * lo + (std::isinf(w) ? 0.0 : log1mexp(g * w));
            if (hi <= 0.0)
                return std::log(0.5) + g * hi + (std::isinf(w) ? 0.0 : log1mexp(g * w));
            const double below = std::isinf(lo) ? 0.0 : 0.5 * std::exp(g * lo);
            const double above = std::isinf(hi) ? 0.0 : 0.5 * std::exp(-g * hi);
            return std::log1p(-(below + above));
        }
        default: {
            const double v = cell_prob(lo, hi, x);
            return v > 0.0 ? std::log(v) : -kInf;
        }
    }
}

void TargetDensity::log_cell_probs(std::span<const double> edges, std::span<const double> x,
                                   std::span<double> out) const {
    require(out.size() + 1 == edges.size(), ErrorCode::InvalidParameter, "need one more edge than cells");
    if (family_ == Family::Exponential || family_ == Family::Laplace) {
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = log_cell_prob(edges[k], edges[k + 1], x);
        return;
    }
    // One cdf (or sf above the median) evaluation per edge.
    std::vector<double> lower(edges.size()), upper(edges.size());
    for (std::size_t k = 0; k < edges.size(); ++k) {
        lower[k] = cdf(edges[k], x);
        upper[k] = lower[k] > 0.5 ? sf(edges[k], x) : 1.0 - lower[k];
    }
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double v = lower[k] > 0.5 ? upper[k] - upper[k + 1] : lower[k + 1] - lower[k];
        out[k] = v > 0.0 ? std::log(v) : -kInf;
    }
}

bool TargetDensity::x_free() const {
    switch (family_) {
        case Family::StudentTLocScale:
            return (a_.is_constant() && b_.is_constant()) || x_law_.is_point();
        case Family::Custom: return x_law_.is_point();
        default: return a_.is_constant() || x_law_.is_point();
    }
}

// ---- gradients ----

double TargetDensity::grad_log_pdf(double y, std::span<const double> x) const {
    switch (family_) {
        case Family::Exponential: return -a_(x);
        case Family::Laplace: return y > 0.0 ? -a_(x) : (y < 0.0 ? a_(x) : 0.0);
        case Family::Uniform: return 0.0;
        case Family::StudentTLocScale: {
            const double c = b_(x), z = y - a_(x);
            return -(dof_ + 1.0) * z / (c * c * dof_ + z * z);
        }
        case Family::BoundedSmooth: {
            const double th = a_(x);
            return 2.0 * th / (1.0 + th * (2.0 * y - 1.0));
        }
        case Family::Custom: {
            const double h = 1e-6 * std::max(1.0, std::abs(y));
            return (log_pdf(y + h, x) - log_pdf(y - h, x)) / (2.0 * h);
        }
    }
    return 0.0;
}

void TargetDensity::grad_log_pdf_x(double y, std::span<const double> x, std::span<double> out) const {
    require(out.size() == x.size(), ErrorCode::InvalidParameter, "gradient buffer size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
        switch (family_) {
            case Family::Exponential: out[i] = (1.0 / a_(x) - y) * a_.partial(x, i); break;
            case Family::Laplace: out[i] = (1.0 / a_(x) - std::abs(y)) * a_.partial(x, i); break;
            case Family::Uniform: out[i] = -a_.partial(x, i) / a_(x); break;
            case Family::StudentTLocScale: {
                const double c = b_(x), z = y - a_(x), u2 = z * z / (c * c);
                const double d_loc = (dof_ + 1.0) * z / (c * c * dof_ + z * z);
                const double d_scale = -1.0 / c + (dof_ + 1.0) * u2 / (c * (dof_ + u2));
                out[i] = d_loc * a_.partial(x, i) + d_scale * b_.partial(x, i);
                break;
            }
            case Family::BoundedSmooth:
                out[i] = (2.0 * y - 1.0) * a_.partial(x, i) / (1.0 + a_(x) * (2.0 * y - 1.0));
                break;
            case Family::Custom: {
                std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
                const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
                xp[i] += h;
                xm[i] -= h;
                out[i] = (log_pdf(y, xp) - log_pdf(y, xm)) / (2.0 * h);
                break;
            }
        }
    }
}

double TargetDensity::grad_log_pdf_sup(double lo, double hi, std::span<const double> x) const {
    require(lo <= hi, ErrorCode::InvalidParameter, "cell must satisfy lo <= hi");
    switch (family_) {
        case Family::Exponential:
        case Family::Laplace: return a_(x);
        case Family::Uniform:
            fail(ErrorCode::Unsupported, "gradient of the uniform density is undefined at its ends");
        case Family::StudentTLocScale: {
            const double b = a_(x), c = b_(x);
            auto g = [&](double t) { return (dof_ + 1.0) * t / (c * c * dof_ + t * t); };
            const double t_min = (lo <= b && b <= hi) ? 0.0 : std::min(std::abs(lo - b), std::abs(hi - b));
            const double t_max = std::max(std::abs(lo - b), std::abs(hi - b));
            const double peak = c * std::sqrt(dof_);
            if (t_min <= peak && peak <= t_max) return g(peak);
            return std::max(g(t_min), g(t_max));
        }
        case Family::BoundedSmooth: {
            const double th = a_(x);
            const double l = std::clamp(lo, 0.0, 1.0), h = std::clamp(hi, 0.0, 1.0);
            const double f = std::min(1.0 + th * (2.0 * l - 1.0), 1.0 + th * (2.0 * h - 1.0));
            return f > 0.0 ? 2.0 * std::abs(th) / f : kInf;
        }
        case Family::Custom: {
            const double mid = 0.5 * (lo + hi);
            return std::max({std::abs(grad_log_pdf(lo, x)), std::abs(grad_log_pdf(mid, x)),
                             std::abs(grad_log_pdf(hi, x))});
        }
    }
    return kInf;
}

double TargetDensity::inf_pdf(double lo, double hi, std::span<const double> x) const {
    require(lo <= hi, ErrorCode::InvalidParameter, "cell must satisfy lo <= hi");
    const auto [a, b] = support_at(x);
    if (lo < a || hi > b) return 0.0;
    switch (family_) {
        case Family::Exponential: return pdf(hi, x);
        case Family::Laplace: return pdf(std::max(std::abs(lo), std::abs(hi)), x);
        case Family::Uniform: return 1.0 / a_(x);
        case Family::StudentTLocScale:
        case Family::BoundedSmooth: return std::min(pdf(lo, x), pdf(hi, x));
        case Family::Custom: return std::min({pdf(lo, x), pdf(0.5 * (lo + hi), x), pdf(hi, x)});
    }
    return 0.0;
}

double TargetDensity::mode(std::span<const double> x) const {
    switch (family_) {
        case Family::Exponential:
        case Family::Laplace: return 0.0;
        case Family::Uniform: return 0.5 * a_(x);
        case Family::StudentTLocScale: return a_(x);
        case Family::BoundedSmooth: return a_(x) >= 0.0 ? 1.0 : 0.0;
        case Family::Custom: return quantile(0.5, x);
    }
    return 0.0;
}

double TargetDensity::mean(std::span<const double> x) const {
    switch (family_) {
        case Family::Exponential: return 1.0 / a_(x);
        case Family::Laplace: return 0.0;
        case Family::Uniform: return 0.5 * a_(x);
        case Family::StudentTLocScale: return a_(x);
        case Family::BoundedSmooth: return 0.5 + a_(x) / 6.0;
        case Family::Custom: {
            const auto [a, b] = support_at(x);
            return integrate_adaptive([&](double t) { return t * pdf(t, x); }, a, b, 1e-10).value;
        }
    }
    return 0.0;
}

double TargetDensity::second_moment(std::span<const double> x) const {
    switch (family_) {
        case Family::Exponential:
        case Family::Laplace: {
            const double g = a_(x);
            return 2.0 / (g * g);
        }
        case Family::Uniform: {
            const double b = a_(x);
            return b * b / 3.0;
        }
        case Family::StudentTLocScale: {
            const double b = a_(x), c = b_(x);
            return b * b + c * c * dof_ / (dof_ - 2.0);
        }
        case Family::BoundedSmooth: return 1.0 / 3.0 + a_(x) / 6.0;
        case Family::Custom: {
            const auto [a, b] = support_at(x);
            return integrate_adaptive([&](double t) { return t * t * pdf(t, x); }, a, b, 1e-10).value;
        }
    }
    return 0.0;
}

std::optional<double> TargetDensity::density_sup() const {
    const auto lo = x_law_.lower();
    const auto hi = x_law_.upper();
    switch (family_) {
        case Family::Exponential: return a_.max_over(lo, hi);
        case Family::Laplace: return 0.5 * a_.max_over(lo, hi);
        case Family::Uniform: return 1.0 / a_.min_over(lo, hi);
        case Family::StudentTLocScale: return std::exp(student_log_norm(dof_)) / b_.min_over(lo, hi);
        case Family::BoundedSmooth:
            return 1.0 + std::max(std::abs(a_.min_over(lo, hi)), std::abs(a_.max_over(lo, hi)));
        case Family::Custom: return custom_sup_;
    }
    return std::nullopt;
}

int TargetDensity::edge_order() const {
    if (family_ != Family::BoundedSmooth) return 0;
    const auto lo = x_law_.lower();
    const auto hi = x_law_.upper();
    const double t = std::max(std::abs(a_.min_over(lo, hi)), std::abs(a_.max_over(lo, hi)));
    return t >= 1.0 ? 1 : 0;
}

// ---- sampling ----

double TargetDensity::draw_y(double u, std::span<const double> x) const {
    return quantile(u, x);
}

void TargetDensity::sample_range(std::size_t first, std::size_t count, std::uint64_t seed,
                                 JointSample& out) const {
    const int dx = dim_x();
    const std::size_t per_draw = (x_law_.is_point() ? 0 : static_cast<std::size_t>(dx)) + 1;
    out.d_x = dx;
    out.y.resize(count);
    out.x.resize(count * static_cast<std::size_t>(dx));
    std::size_t i = 0;
    while (i < count) {
        const std::size_t global = first + i;
        const std::size_t shard = global / kSampleShard;
        const std::size_t offset = global % kSampleShard;
        const std::size_t take = std::min(count - i, kSampleShard - offset);
        Stream s(seed, shard);
        if (offset) s.discard(offset * per_draw);
        for (std::size_t k = 0; k < take; ++k, ++i) {
            std::span<double> xi(out.x.data() + i * static_cast<std::size_t>(dx), static_cast<std::size_t>(dx));
            x_law_.draw(s, xi);
            out.y[i] = draw_y(s.uniform(), xi);
        }
    }
}

JointSample TargetDensity::sample_joint(std::size_t n, std::uint64_t seed) const {
    require(n >= 1, ErrorCode::InvalidCount, "sample size must be at least 1");
    JointSample out;
    sample_range(0, n, seed, out);
    return out;
}

// ---- serialization ----

nlohmann::json TargetDensity::to_json() const {
    nlohmann::json j{{"family", to_string(family_)}, {"x_law", x_law_.to_json()},
                     {"support", support_.to_json()}};
    switch (family_) {
        case Family::Exponential:
        case Family::Laplace: j["rate"] = a_.to_json(); break;
        case Family::Uniform: j["upper"] = a_.to_json(); break;
        case Family::StudentTLocScale:
            j["location"] = a_.to_json();
            j["scale"] = b_.to_json();
            j["dof"] = dof_;
            break;
        case Family::BoundedSmooth: j["tilt"] = a_.to_json(); break;
        case Family::Custom: j["name"] = name_; break;
    }
    return j;
}

TargetDensity TargetDensity::from_json(const nlohmann::json& j) {
    require(j.is_object() && j.contains("family"), ErrorCode::ConfigError,
            "target requires a 'family' field");
    const Family fam = family_from_string(j.at("family").get<std::string>());
    XLaw law = j.contains("x_law") ? XLaw::from_json(j.at("x_law")) : XLaw::unit_cube(1);
    auto curve = [&](const char* key) {
        require(j.contains(key), ErrorCode::ConfigError,
                std::string("target field '") + key + "' is required");
        return Curve::from_json(j.at(key));
    };
    switch (fam) {
        case Family::Exponential: return exponential(curve("rate"), std::move(law));
        case Family::Laplace: return laplace(curve("rate"), std::move(law));
        case Family::Uniform: return uniform(curve("upper"), std::move(law));
        case Family::StudentTLocScale:
            require(j.contains("dof"), ErrorCode::ConfigError, "student_t requires 'dof'");
            return student_t(curve("location"), curve("scale"), j.at("dof").get<double>(), std::move(law));
        case Family::BoundedSmooth: return bounded_smooth(curve("tilt"), std::move(law));
        case Family::Custom: break;
    }
    fail(ErrorCode::ConfigError, "custom targets cannot be read from a config file");
}

// ---- regularity check ----

std::pair<double, double> policy_cube(const TargetDensity& target, RPolicy policy, double r,
                                      double y, std::span<const double> x) {
    const auto [a, b] = target.support_at(x);
    if (b - a <= r) return {a, b};
    if (policy == RPolicy::OneSidedNearBoundary) {
        if (y - a < r) return {y, std::min(y + r, b)};
        if (b - y < r) return {std::max(y - r, a), y};
    }
    if (y - 0.5 * r < a) return {y, std::min(y + r, b)};
    if (y + 0.5 * r > b) return {std::max(y - r, a), y};
    return {y - 0.5 * r, y + 0.5 * r};
}

namespace {

// Is [u, v] inside both the cube and the region [lo, hi)?
bool inside(double u, double v, double c_lo, double c_hi, double lo, double hi) {
    return u >= c_lo && v <= c_hi && u >= lo && v <= hi;
}

bool half_interval_ok(double y, double half, double c_lo, double c_hi, double lo, double hi) {
    return inside(y, y + half, c_lo, c_hi, lo, hi) || inside(y - half, y, c_lo, c_hi, lo, hi);
}

McValue finish(const std::vector<double>& values) {
    McValue out;
    MomentAccumulator acc, half, quarter;
    const std::size_t n = values.size();
    for (std::size_t i = 0; i < n; ++i) {
        acc.add(values[i]);
        if (i < n / 2) half.add(values[i]);
        if (i < n / 4) quarter.add(values[i]);
    }
    out.value = acc.mean();
    out.std_error = acc.std_error();
    out.n = n;
    const double tol = 4.0 * std::max(out.std_error, half.std_error()) + 1e-12;
    out.cauchy_ok = std::abs(acc.mean() - half.mean()) <= tol &&
                    std::abs(half.mean() - quarter.mean()) <= 4.0 * quarter.std_error() + 1e-12;
    return out;
}

}  // namespace

AssumptionReport check_assumption1(const TargetDensity& target, const AssumptionCheckOptions& opt) {
    require(target.dim_y() == 1, ErrorCode::UnsupportedDimension, "assumption check needs d = 1");
    require(opt.n >= 16, ErrorCode::InvalidCount, "assumption check needs at least 16 draws");
    require(opt.r > 0.0, ErrorCode::InvalidParameter, "r must be positive");
    AssumptionReport rep;
    const JointSample s = target.sample_joint(opt.n, opt.seed);

    std::vector<double> second(opt.n), modulus(opt.n);
    std::vector<std::size_t> violations(opt.partitions.size(), 0);
    for (std::size_t i = 0; i < opt.n; ++i) {
        const double y = s.y[i];
        const auto x = s.x_at(i);
        second[i] = y * y;
        const auto [c_lo, c_hi] = policy_cube(target, opt.policy, opt.r, y, x);
        const double inf = target.inf_pdf(c_lo, c_hi, x);
        modulus[i] = inf > 0.0 ? target.log_pdf(y, x) - std::log(inf) : kInf;
        if (!std::isfinite(modulus[i])) rep.modulus_divergent = true;

        const auto [a, b] = target.support_at(x);
        for (std::size_t k = 0; k < opt.partitions.size(); ++k) {
            const FineBlock& blk = opt.partitions[k];
            bool ok;
            if (blk.in_tail(y)) {
                const bool below = blk.tail_below && y < blk.lo;
                const double lo = below ? a : std::max(a, blk.hi);
                const double hi = below ? std::min(b, blk.lo) : b;
                ok = half_interval_ok(y, 0.5 * opt.r, c_lo, c_hi, lo, hi);
            } else {
                const double lo = blk.tail_below ? std::max(a, blk.lo) : a;
                const double hi = blk.tail_above ? std::min(b, blk.hi) : b;
                ok = half_interval_ok(y, 0.5 * opt.r, c_lo, c_hi, lo, hi);
            }
            if (!ok) ++violations[k];
        }
    }

    rep.second_moment = finish(second);
    if (rep.modulus_divergent) {
        rep.modulus_integral.value = kInf;
        rep.modulus_integral.n = opt.n;
        rep.notes.push_back("log-modulus integrand is infinite on some draw");
    } else {
        rep.modulus_integral = finish(modulus);
    }
    for (std::size_t k = 0; k < violations.size(); ++k) {
        const double frac = static_cast<double>(violations[k]) / static_cast<double>(opt.n);
        rep.cube_violation_fraction.push_back(frac);
        if (violations[k] > 0) {
            rep.cube_condition_violated = true;
            rep.notes.push_back("cube-split condition fails on partition " + std::to_string(k) +
                                " for a fraction " + std::to_string(frac) + " of draws");
        }
    }

    auto shaky = [](const McValue& v) {
        return !v.cauchy_ok || (v.value != 0.0 && v.std_error > 0.25 * std::abs(v.value));
    };
    if (rep.modulus_divergent || rep.cube_condition_violated) {
        rep.status = AssumptionReport::Status::Flagged;
    } else if (shaky(rep.second_moment) || shaky(rep.modulus_integral)) {
        rep.status = AssumptionReport::Status::Inconclusive;
        rep.notes.push_back("running means fail the doubling Cauchy check or the SE is large");
    }
    return rep;
}

nlohmann::json AssumptionReport::to_json() const {
    auto mc = [](const McValue& v) {
        return nlohmann::json{{"value", std::isfinite(v.value) ? nlohmann::json(v.value) : nlohmann::json("inf")},
                              {"se", v.std_error}, {"n", v.n}, {"cauchy_ok", v.cauchy_ok}};
    };
    const char* st = status == Status::Ok ? "ok" : status == Status::Flagged ? "flagged" : "inconclusive";
    return {{"second_moment", mc(second_moment)},
            {"modulus_integral", mc(modulus_integral)},
            {"modulus_divergent", modulus_divergent},
            {"cube_violation_fraction", cube_violation_fraction},
            {"cube_condition_violated", cube_condition_violated},
            {"status", st},
            {"notes", notes}};
}

}  // namespace smoothmix
