#include "smoothmix/curve.hpp"

#include "smoothmix/error.hpp"

#include <cmath>

namespace smoothmix {

Curve Curve::constant(double value) {
    Curve c;
    c.kind_ = Kind::Constant;
    c.intercept_ = value;
    return c;
}

Curve Curve::linear(std::vector<double> slope) {
    Curve c;
    c.kind_ = Kind::Linear;
    c.slope_ = std::move(slope);
    return c;
}

Curve Curve::affine(double intercept, std::vector<double> slope) {
    Curve c;
    c.kind_ = Kind::Affine;
    c.intercept_ = intercept;
    c.slope_ = std::move(slope);
    return c;
}

Curve Curve::exp_affine(double intercept, std::vector<double> slope) {
    Curve c;
    c.kind_ = Kind::ExpAffine;
    c.intercept_ = intercept;
    c.slope_ = std::move(slope);
    return c;
}

double Curve::index(std::span<const double> x) const {
    require(slope_.size() <= x.size(), ErrorCode::InvalidParameter,
            "curve slope has more coordinates than the covariate");
    double v = kind_ == Kind::Linear ? 0.0 : intercept_;
    for (std::size_t i = 0; i < slope_.size(); ++i) v += slope_[i] * x[i];
    return v;
}

double Curve::operator()(std::span<const double> x) const {
    if (kind_ == Kind::Constant) return intercept_;
    const double v = index(x);
    return kind_ == Kind::ExpAffine ? std::exp(v) : v;
}

double Curve::partial(std::span<const double> x, std::size_t axis) const {
    if (kind_ == Kind::Constant || axis >= slope_.size()) return 0.0;
    if (kind_ == Kind::ExpAffine) return slope_[axis] * std::exp(index(x));
    return slope_[axis];
}

bool Curve::is_constant() const {
    if (kind_ == Kind::Constant) return true;
    for (double s : slope_)
        if (s != 0.0) return false;
    return true;
}

double Curve::min_over(std::span<const double> lo, std::span<const double> hi) const {
    if (kind_ == Kind::Constant) return intercept_;
    double v = kind_ == Kind::Linear ? 0.0 : intercept_;
    for (std::size_t i = 0; i < slope_.size(); ++i) v += slope_[i] * (slope_[i] >= 0 ? lo[i] : hi[i]);
    return kind_ == Kind::ExpAffine ? std::exp(v) : v;
}

double Curve::max_over(std::span<const double> lo, std::span<const double> hi) const {
    if (kind_ == Kind::Constant) return intercept_;
    double v = kind_ == Kind::Linear ? 0.0 : intercept_;
    for (std::size_t i = 0; i < slope_.size(); ++i) v += slope_[i] * (slope_[i] >= 0 ? hi[i] : lo[i]);
    return kind_ == Kind::ExpAffine ? std::exp(v) : v;
}

nlohmann::json Curve::to_json() const {
    switch (kind_) {
        case Kind::Constant: return {{"type", "constant"}, {"value", intercept_}};
        case Kind::Linear: return {{"type", "linear"}, {"slope", slope_}};
        case Kind::Affine: return {{"type", "affine"}, {"intercept", intercept_}, {"slope", slope_}};
        case Kind::ExpAffine:
            return {{"type", "exp_affine"}, {"intercept", intercept_}, {"slope", slope_}};
    }
    return {};
}

namespace {

std::vector<double> read_slope(const nlohmann::json& j) {
    require(j.contains("slope"), ErrorCode::ConfigError, "curve requires a 'slope' array");
    const auto& s = j.at("slope");
    if (s.is_number()) return {s.get<double>()};
    require(s.is_array(), ErrorCode::ConfigError, "curve 'slope' must be a number or an array");
    return s.get<std::vector<double>>();
}

}  // namespace

Curve Curve::from_json(const nlohmann::json& j) {
    if (j.is_number()) return constant(j.get<double>());
    require(j.is_object() && j.contains("type"), ErrorCode::ConfigError,
            "curve must be a number or an object with a 'type'");
    const auto type = j.at("type").get<std::string>();
    if (type == "constant") {
        require(j.contains("value"), ErrorCode::ConfigError, "constant curve requires 'value'");
        return constant(j.at("value").get<double>());
    }
    if (type == "linear") return linear(read_slope(j));
    if (type == "affine") return affine(j.value("intercept", 0.0), read_slope(j));
    if (type == "exp_affine") return exp_affine(j.value("intercept", 0.0), read_slope(j));
    fail(ErrorCode::ConfigError, "unknown curve type '" + type + "'");
}

}  // namespace smoothmix
