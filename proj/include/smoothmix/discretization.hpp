#pragma once

#include "smoothmix/curve.hpp"
#include "smoothmix/targets.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace smoothmix {

enum class ModelKind { M0, M1, M3, M4, M5, ExactWrapper, Fixed };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

/// Equal-side grid of fine cells A_1..A_m with an optional tail A_0 (the
/// rest of the support). In d > 1 the block is a k^d grid.
class Partition {
public:
    // Fine block starting at `origin` on every axis with k cells of side h.
    static Partition block(SupportSpec domain, double origin, double h, std::size_t k,
                           bool tail_below, bool tail_above);

    int dimension() const { return domain_.dimension; }
    std::size_t size() const { return m_; }  // number of fine cells
    std::size_t per_axis() const { return k_; }
    double side() const { return h_; }
    double origin() const { return origin_; }
    const SupportSpec& domain() const { return domain_; }
    bool has_tail() const { return tail_below_ || tail_above_; }

    // Per-axis bounds of fine cell j (row-major multi-index for d > 1).
    double lo(std::size_t j, int axis = 0) const;
    double hi(std::size_t j, int axis = 0) const;
    double center(std::size_t j, int axis = 0) const { return 0.5 * (lo(j, axis) + hi(j, axis)); }

    double block_lo() const { return origin_; }
    double block_hi() const { return origin_ + h_ * static_cast<double>(k_); }
    FineBlock fine_block() const { return {block_lo(), block_hi(), tail_below_, tail_above_}; }
    bool in_tail(double y) const { return fine_block().in_tail(y); }

    nlohmann::json to_json() const;

private:
    SupportSpec domain_;
    double origin_ = 0.0;
    double h_ = 0.0;
    std::size_t k_ = 0;
    std::size_t m_ = 0;
    bool tail_below_ = false;
    bool tail_above_ = false;
};

/// Equal-probability partition of f(.|x) at one covariate value.
struct EppPartition {
    std::vector<double> x;
    std::size_t m = 0;
    double p = 0.0;
    double offset = 0.0;        // probability below the fine block
    std::vector<double> edges;  // m + 1 quantile cuts
    double h_max = 0.0;         // longest fine cell

    double tail_prob() const { return 1.0 - static_cast<double>(m) * p; }
    FineBlock fine_block() const {
        return {edges.front(), edges.back(), offset > 0.0, tail_prob() - offset > 0.0};
    }
};

/// Covariate grid of k^{d_x} half-open cubes tiling [0,1]^{d_x}.
class XGrid {
public:
    XGrid(int d_x, std::size_t k);

    int dimension() const { return d_x_; }
    std::size_t per_axis() const { return k_; }
    std::size_t size() const { return n_; }
    double squared_diagonal() const {
        return static_cast<double>(d_x_) / static_cast<double>(k_ * k_);
    }
    std::vector<double> center(std::size_t i) const;
    // Index of the cell containing x; the upper face x = 1 belongs to the last cell.
    std::size_t cell_of(std::span<const double> x) const;

    nlohmann::json to_json() const;

private:
    int d_x_;
    std::size_t k_;
    std::size_t n_;
};

/// A schedule entry that is either a constant or factor * curve(x).
struct XScalar {
    double factor = 0.0;
    std::optional<Curve> curve;

    static XScalar constant(double v) { return {v, std::nullopt}; }
    static XScalar scaled(double f, Curve c) { return {f, std::move(c)}; }

    double at(std::span<const double> x) const { return curve ? factor * (*curve)(x) : factor; }
    bool x_dependent() const { return curve.has_value() && !curve->is_constant(); }
    nlohmann::json to_json() const;
};

struct Schedule {
    ModelKind kind = ModelKind::M0;
    std::size_t m = 0;
    int d = 1;
    int d_x = 1;
    XScalar h, sigma, delta, sigma0, r;
    std::optional<double> p;  // M4 / M5
    std::optional<double> R;  // M3
    std::optional<double> s;  // M3
    std::optional<std::size_t> k;  // M3 cells per covariate axis
    std::string recipe;

    bool x_dependent() const;
    nlohmann::json to_json() const;
};

Partition grid_partition(const SupportSpec& domain, std::size_t m,
                         std::optional<std::pair<double, double>> span = std::nullopt);
// Uses the covariate box of the target to bound x-dependent supports.
Partition grid_partition(const TargetDensity& target, std::size_t m);

// Probability mass placed below the fine block: symmetric for full-space
// targets, zero (anchored at the lower support end) otherwise.
double epp_offset(const TargetDensity& target, std::size_t m, double p);
EppPartition epp_partition(const TargetDensity& target, std::span<const double> x, std::size_t m,
                           double p);

XGrid x_grid(int d_x, std::size_t k);

Schedule default_schedule(ModelKind kind, const TargetDensity& target, std::size_t m);

struct RatioCheck {
    std::string name;
    std::vector<double> values;  // one per m
    bool decreasing = true;
};

struct ValidationReport {
    std::vector<std::size_t> m_grid;
    std::vector<RatioCheck> ratios;
    std::vector<double> sigma0_condition;  // max_y phi(y,0,sigma_0)(r/2)^d per m
    double sigma0_limit = 0.0;
    bool sigma0_ok = true;
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
    nlohmann::json to_json() const;
};

/// `x_probe` lists covariate values over which x-curves are maximized; when
/// empty a 33-point grid over [0,1] (d_x = 1) is used.
ValidationReport validate_schedule(std::span<const Schedule> schedules,
                                   std::span<const std::vector<double>> x_probe = {});

// Value of max_y phi(y, 0, sigma_0) (r/2)^d at a covariate value.
double sigma0_condition(const Schedule& s, std::span<const double> x);

}  // namespace smoothmix
