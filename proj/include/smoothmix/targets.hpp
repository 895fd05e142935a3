#pragma once

#include "smoothmix/curve.hpp"
#include "smoothmix/rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace smoothmix {

enum class Family { Exponential, Laplace, Uniform, StudentTLocScale, BoundedSmooth, Custom };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

struct SupportSpec {
    enum class Kind { FullSpace, HalfLine, Interval, XDependentInterval };

    Kind kind = Kind::FullSpace;
    int dimension = 1;
    Curve lower = Curve::constant(0.0);  // Interval / XDependentInterval
    Curve upper = Curve::constant(1.0);

    static SupportSpec full_space(int d = 1);
    static SupportSpec half_line();
    static SupportSpec interval(double a, double b);
    static SupportSpec x_interval(Curve a, Curve b);

    // Support of f(.|x); infinite ends for unbounded kinds.
    std::pair<double, double> bounds(std::span<const double> x) const;
    bool bounded() const { return kind == Kind::Interval || kind == Kind::XDependentInterval; }

    nlohmann::json to_json() const;
};

std::string to_string(SupportSpec::Kind k);

/// Marginal law of the covariates: uniform on a box, or a point mass.
class XLaw {
public:
    static XLaw uniform(std::vector<double> lo, std::vector<double> hi);
    static XLaw unit_cube(int d_x);
    static XLaw point(std::vector<double> x0);

    int dimension() const { return static_cast<int>(lo_.size()); }
    bool is_point() const { return point_; }
    std::span<const double> lower() const { return lo_; }
    std::span<const double> upper() const { return hi_; }

    bool contains(std::span<const double> x) const;
    double density(std::span<const double> x) const;
    void draw(Stream& s, std::span<double> out) const;

    nlohmann::json to_json() const;
    static XLaw from_json(const nlohmann::json& j);

private:
    std::vector<double> lo_, hi_;
    bool point_ = false;
};

/// Callables for a user-defined target. Only pdf is mandatory; a missing cdf
/// is integrated numerically and a missing quantile is found by bisection.
struct CustomCallables {
    using Fn = std::function<double(double, std::span<const double>)>;
    Fn pdf;
    Fn cdf;
    Fn quantile;
};

/// Response-space region that a tail component covers: everything in the
/// support outside the fine block [lo, hi).
struct FineBlock {
    double lo = 0.0;
    double hi = 0.0;
    bool tail_below = false;
    bool tail_above = false;

    bool in_tail(double y) const { return (tail_below && y < lo) || (tail_above && y >= hi); }
};

struct JointSample {
    std::vector<double> y;
    std::vector<double> x;  // row-major, d_x per draw
    int d_x = 1;

    std::size_t size() const { return y.size(); }
    std::span<const double> x_at(std::size_t i) const {
        return {x.data() + i * static_cast<std::size_t>(d_x), static_cast<std::size_t>(d_x)};
    }
};

/// Draws per RNG stream in joint sampling. Draw i comes from stream
/// i / kSampleShard, which lets callers regenerate any slice independently.
inline constexpr std::size_t kSampleShard = 4096;

class TargetDensity {
public:
    static TargetDensity exponential(Curve rate, XLaw x_law);
    static TargetDensity laplace(Curve rate, XLaw x_law);
    static TargetDensity uniform(Curve upper, XLaw x_law);
    static TargetDensity student_t(Curve location, Curve scale, double dof, XLaw x_law);
    // f(y|x) = 1 + theta(x)(2y - 1) on [0, 1], |theta| <= 1.
    static TargetDensity bounded_smooth(Curve tilt, XLaw x_law);
    static TargetDensity custom(std::string name, CustomCallables fns, SupportSpec support,
                                XLaw x_law, std::optional<double> density_sup = std::nullopt);

    Family family() const { return family_; }
    const std::string& name() const { return name_; }
    const SupportSpec& support() const { return support_; }
    const XLaw& x_law() const { return x_law_; }
    int dim_y() const { return support_.dimension; }
    int dim_x() const { return x_law_.dimension(); }

    double pdf(double y, std::span<const double> x) const;
    double log_pdf(double y, std::span<const double> x) const;
    double cdf(double y, std::span<const double> x) const;
    double sf(double y, std::span<const double> x) const;
    double quantile(double p, std::span<const double> x) const;

    double cell_prob(double lo, double hi, std::span<const double> x) const;
    double log_cell_prob(double lo, double hi, std::span<const double> x) const;
    // log probabilities of the consecutive cells [edges[k], edges[k+1]).
    void log_cell_probs(std::span<const double> edges, std::span<const double> x,
                        std::span<double> out) const;

    // True when f(y|x) does not vary with x over the covariate law.
    bool x_free() const;

    // d/dy log f and d/dx log f at an interior point.
    double grad_log_pdf(double y, std::span<const double> x) const;
    void grad_log_pdf_x(double y, std::span<const double> x, std::span<double> out) const;

    // sup over [lo, hi] of |d log f / dy|; throws Unsupported for Uniform.
    double grad_log_pdf_sup(double lo, double hi, std::span<const double> x) const;
    // inf over [lo, hi] of f(.|x); zero if the cell leaves the support.
    double inf_pdf(double lo, double hi, std::span<const double> x) const;

    std::pair<double, double> support_at(std::span<const double> x) const {
        return support_.bounds(x);
    }
    double mode(std::span<const double> x) const;
    double mean(std::span<const double> x) const;
    double second_moment(std::span<const double> x) const;

    // sup of f over Y x X when known in closed form.
    std::optional<double> density_sup() const;
    // Order n of the boundary lower bound f >= c (y - a)^n; 0 when f is
    // bounded away from zero on its support.
    int edge_order() const;

    // Named parameter curves ("rate", "upper", "location", "scale", "tilt").
    const Curve& parameter(const std::string& key) const;
    double dof() const { return dof_; }

    void validate_at(std::span<const double> x) const;

    JointSample sample_joint(std::size_t n, std::uint64_t seed) const;
    // Draws [first, first + count) of the same sequence sample_joint produces.
    void sample_range(std::size_t first, std::size_t count, std::uint64_t seed,
                      JointSample& out) const;

    nlohmann::json to_json() const;
    static TargetDensity from_json(const nlohmann::json& j);

private:
    TargetDensity() = default;
    void validate_over_x_law() const;
    double draw_y(double u, std::span<const double> x) const;

    Family family_ = Family::Custom;
    std::string name_;
    SupportSpec support_;
    XLaw x_law_ = XLaw::unit_cube(1);
    Curve a_, b_;  // first/second parameter curves
    double dof_ = 0.0;
    CustomCallables custom_;
    std::optional<double> custom_sup_;
};

/// Where the cube C(r, y, x) of the regularity check sits relative to y.
enum class RPolicy {
    Centered,              // [y - r/2, y + r/2], moved to one side at a support end
    OneSidedNearBoundary,  // [y, y + r] within r of the lower end
};

struct AssumptionCheckOptions {
    RPolicy policy = RPolicy::Centered;
    double r = 1.0;
    std::size_t n = 100000;
    std::uint64_t seed = 1;
    // Tail layouts for the cube-split condition; one entry per partition.
    std::vector<FineBlock> partitions;
};

struct McValue {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
    bool cauchy_ok = true;
};

struct AssumptionReport {
    enum class Status { Ok, Flagged, Inconclusive };

    McValue second_moment;    // E[y'y]
    McValue modulus_integral; // E log f(y|x) / inf_C f
    bool modulus_divergent = false;
    std::vector<double> cube_violation_fraction;  // one per partition
    bool cube_condition_violated = false;
    Status status = Status::Ok;
    std::vector<std::string> notes;

    nlohmann::json to_json() const;
};

AssumptionReport check_assumption1(const TargetDensity& target, const AssumptionCheckOptions& opt);

// The cube C(r, y, x) under a placement policy, clipped to the support.
std::pair<double, double> policy_cube(const TargetDensity& target, RPolicy policy, double r,
                                      double y, std::span<const double> x);

}  // namespace smoothmix
