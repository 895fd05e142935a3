#pragma once

#include <json.hpp>

#include <span>
#include <vector>

namespace smoothmix {

/// A scalar parameter curve over the covariate space, e.g. a rate gamma(x).
/// Only the forms a target config may name are representable: constant,
/// linear s'x, affine a + s'x, and exp-affine exp(a + s'x).
class Curve {
public:
    enum class Kind { Constant, Linear, Affine, ExpAffine };

    Curve() = default;

    static Curve constant(double value);
    static Curve linear(std::vector<double> slope);
    static Curve affine(double intercept, std::vector<double> slope);
    static Curve exp_affine(double intercept, std::vector<double> slope);

    double operator()(std::span<const double> x) const;
    double partial(std::span<const double> x, std::size_t axis) const;

    Kind kind() const { return kind_; }
    bool is_constant() const;

    // Extremes over the box [lo, hi]; the index is monotone in each
    // coordinate, so they sit at corners.
    double min_over(std::span<const double> lo, std::span<const double> hi) const;
    double max_over(std::span<const double> lo, std::span<const double> hi) const;

    nlohmann::json to_json() const;
    static Curve from_json(const nlohmann::json& j);

private:
    double index(std::span<const double> x) const;

    Kind kind_ = Kind::Constant;
    double intercept_ = 0.0;
    std::vector<double> slope_;
};

}  // namespace smoothmix
