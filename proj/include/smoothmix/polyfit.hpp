#pragma once

#include <json.hpp>

#include <functional>
#include <span>
#include <vector>

namespace smoothmix {

/// Tensor Chebyshev polynomial on a covariate box, common degree per axis.
class PolyFit {
public:
    PolyFit() = default;
    PolyFit(std::vector<double> lo, std::vector<double> hi, int degree, std::vector<double> coef);

    double operator()(std::span<const double> x) const;

    int degree() const { return degree_; }
    int dimension() const { return static_cast<int>(lo_.size()); }
    const std::vector<double>& coefficients() const { return coef_; }
    double achieved_error() const { return achieved_; }
    void set_achieved_error(double e) { achieved_ = e; }

    nlohmann::json to_json() const;

private:
    std::vector<double> lo_, hi_;
    int degree_ = 0;
    std::vector<double> coef_;  // row-major over (k_1, ..., k_dx)
    double achieved_ = 0.0;
};

/// Values of a family of `count` functions at one covariate point.
using FamilyValues = std::function<void(std::span<const double> x, std::span<double> out)>;

struct FamilyFit {
    std::vector<PolyFit> fits;
    int degree = 0;
    double achieved = 0.0;  // max over the family of the validation sup-error
    bool met = false;
    std::size_t fit_nodes_per_axis = 0;
    std::size_t validation_points_per_axis = 0;
};

/// Least squares on 2(deg + 1) Chebyshev nodes per axis, escalating a common
/// degree from 0 until the sup-error on a uniform grid of
/// max(4 n_fit, 64) + 1 points per axis is within `eps` (strictly below it
/// when `strict`), or `degree_cap` is reached.
FamilyFit fit_family(const FamilyValues& values, std::size_t count, std::span<const double> lo,
                     std::span<const double> hi, double eps, int degree_cap, bool strict = false);

// Default degree cap for a covariate dimension.
int default_degree_cap(int d_x);

}  // namespace smoothmix
