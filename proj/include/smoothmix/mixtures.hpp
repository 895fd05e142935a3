#pragma once

#include "smoothmix/discretization.hpp"
#include "smoothmix/polyfit.hpp"
#include "smoothmix/targets.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace smoothmix {

struct Component {
    double weight = 0.0;
    double mean = 0.0;
    double sigma = 1.0;
};

/// Conditional mixture of normals p(y|x). Fine components share a scale;
/// the tail component (if any) is N(0, sigma_0).
class MixtureModel {
public:
    ModelKind kind() const { return kind_; }
    std::size_t fine_count() const { return m_; }
    // Components reported to the user: m + 1 (M0, M1, M4 with a tail), m N + 1 for M3.
    std::size_t component_count() const;
    bool has_tail() const { return has_tail_; }

    double log_density(double y, std::span<const double> x) const;
    double density(double y, std::span<const double> x) const;
    std::vector<double> mixing_weights(std::span<const double> x) const;
    std::vector<Component> components(std::span<const double> x) const;

    // M3 only: total weight carried by each covariate cell at x.
    std::vector<double> x_cell_mass(std::span<const double> x) const;

    struct Extent {
        double mean_lo = 0.0, mean_hi = 0.0;
        double sigma_min = 1.0, sigma_max = 1.0;
    };
    Extent extent(std::span<const double> x) const;

    // True when neither weights nor components vary with x.
    bool x_free() const;

    const std::optional<Schedule>& schedule() const { return schedule_; }
    double achieved_eps() const { return achieved_eps_; }
    double eps_target() const { return eps_target_; }
    int fit_degree() const { return fit_degree_; }
    // M5: fitted mean curves; M1: fitted log-probability curves (tail last).
    const std::vector<PolyFit>& fits() const { return fits_; }
    const TargetDensity& target() const { return *target_; }

    nlohmann::json to_json() const;

    static MixtureModel exact(const TargetDensity& target);
    static MixtureModel fixed(std::vector<Component> comps);

    friend MixtureModel build_m0(const TargetDensity&, const Partition&, const Schedule&);
    friend MixtureModel build_m1(const TargetDensity&, const Partition&, const Schedule&, double, int);
    friend MixtureModel build_m3(const TargetDensity&, const Partition&, const XGrid&, const Schedule&);
    friend MixtureModel build_m4(const TargetDensity&, std::size_t, const Schedule&);
    friend MixtureModel build_m5(const TargetDensity&, std::size_t, const Schedule&, int);

private:
    MixtureModel() = default;

    bool grid_kind() const {
        return kind_ == ModelKind::M0 || kind_ == ModelKind::M1 || kind_ == ModelKind::M3;
    }
    double grid_mean(std::size_t j) const { return origin_ + (static_cast<double>(j) + 0.5) * h_; }
    double grid_edge(std::size_t j) const {
        return j == m_ ? block_hi_ : origin_ + static_cast<double>(j) * h_;
    }
    double epp_mean(std::size_t j, std::span<const double> x) const;

    // Per-x state shared by the density and weight routines.
    struct XState {
        double log_norm = 0.0;                 // M1
        std::vector<std::size_t> cells;        // M3 retained covariate cells
        std::vector<double> log_g;             // M3 normalized log cell factors
        std::vector<double> poly;              // M1 values / M5 means
    };
    XState prepare(std::span<const double> x, bool all_cells) const;
    double log_tail_weight(std::span<const double> x, const XState& st) const;
    // log weights of fine components [j0, j1).
    void log_fine_weights(std::size_t j0, std::size_t j1, std::span<const double> x,
                          const XState& st, std::span<double> out) const;
    void cache_weights();
    double grid_log_density(double y, std::span<const double> x) const;
    double epp_log_density(double y, std::span<const double> x) const;

    ModelKind kind_ = ModelKind::Fixed;
    std::shared_ptr<const TargetDensity> target_;
    std::optional<Schedule> schedule_;
    std::optional<Partition> partition_;
    std::size_t m_ = 0;
    bool has_tail_ = false;

    // grid models
    double origin_ = 0.0, h_ = 0.0, block_hi_ = 0.0;
    bool tail_below_ = false, tail_above_ = false;
    double sigma_ = 1.0, sigma0_ = 1.0;

    // log weights (tail last) when they do not depend on x
    std::vector<double> cached_;

    // M1 / M5
    std::vector<PolyFit> fits_;
    double achieved_eps_ = 0.0;
    double eps_target_ = 0.0;
    int fit_degree_ = 0;

    // M3
    std::optional<XGrid> xgrid_;
    double R_ = 0.0;
    std::vector<std::vector<double>> centers_;
    std::vector<std::vector<double>> log_f_;  // [cell i][j], tail at index m

    // M4 / M5
    double p_ = 0.0, offset_ = 0.0, log_tail_w_ = 0.0;
    std::vector<double> means_;  // M4 means when x-free

    // fixed
    std::vector<Component> comps_;
};

MixtureModel build_m0(const TargetDensity& target, const Partition& partition, const Schedule& schedule);
MixtureModel build_m1(const TargetDensity& target, const Partition& partition, const Schedule& schedule,
                      double eps_target, int degree_cap = 0);
MixtureModel build_m3(const TargetDensity& target, const Partition& partition, const XGrid& xgrid,
                      const Schedule& schedule);
MixtureModel build_m4(const TargetDensity& target, std::size_t m, const Schedule& schedule);
MixtureModel build_m5(const TargetDensity& target, std::size_t m, const Schedule& schedule,
                      int degree_cap = 0);

struct BuildOptions {
    double eps_target = 1e-3;  // M1
    int degree_cap = 0;        // M1 / M5; 0 selects the default cap
};

/// Builds a model of the given kind at m with the default schedule and
/// partition for the target.
MixtureModel build_default(ModelKind kind, const TargetDensity& target, std::size_t m,
                           const BuildOptions& opt = {});

}  // namespace smoothmix
