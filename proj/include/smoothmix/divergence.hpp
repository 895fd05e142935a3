#pragma once

#include "smoothmix/mixtures.hpp"
#include "smoothmix/targets.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace smoothmix {

enum class KLMethod { MonteCarlo, Quadrature };

std::string to_string(KLMethod m);

struct KLEstimate {
    double value = 0.0;      // nats
    double std_error = 0.0;  // zero for quadrature
    std::size_t n = 0;       // draws (MC) or integrand evaluations (quadrature)
    KLMethod method = KLMethod::MonteCarlo;
    std::uint64_t seed = 0;
    std::size_t clip_events = 0;  // |log ratio| > 700
    double error_estimate = 0.0;  // quadrature: last doubling difference

    nlohmann::json to_json() const;
};

struct McOptions {
    unsigned workers = 0;  // 0: hardware concurrency
};

/// Draws per worker task. A multiple of kSampleShard, so task boundaries
/// never split an RNG stream.
inline constexpr std::size_t kTaskDraws = 16 * kSampleShard;

// `log_ratios`, when given, receives log f - log p per draw in draw order.
KLEstimate kl_mc(const TargetDensity& target, const MixtureModel& model, std::size_t n, std::uint64_t seed,
                 const McOptions& opt = {}, std::vector<double>* log_ratios = nullptr);

struct QuadOptions {
    double rel_tol = 1e-7;
    int max_levels = 12;
    double truncation = 1e-14;  // drop y where f < truncation * peak
};

/// Deterministic tensor Gauss-Legendre oracle for d = d_x = 1. `ny` is the
/// initial panel count per y segment, `nx` the initial x panel count.
KLEstimate kl_quadrature(const TargetDensity& target, const MixtureModel& model, int ny = 2, int nx = 2,
                         const QuadOptions& opt = {});

using ModelBuilder = std::function<MixtureModel(std::size_t m)>;

struct SeriesPoint {
    std::size_t m = 0;
    KLEstimate estimate;
};

struct KLSeries {
    std::vector<SeriesPoint> points;
    // Standard error of the paired difference between consecutive points
    // (same draws for every m).
    std::vector<double> pairwise_se;
    std::size_t increases = 0;  // steps rising by more than 3 pairwise SE
    double first_last_paired_se = 0.0;
    double first_last_combined_se = 0.0;  // sqrt(se_first^2 + se_last^2)

    // Last value below the first by more than 3 combined SE.
    bool decreased() const;
    nlohmann::json to_json() const;
};

KLSeries kl_series(const TargetDensity& target, const ModelBuilder& builder, const std::vector<std::size_t>& m_grid,
                   std::size_t n, std::uint64_t seed, const McOptions& opt = {});

// Standard error of the mean of a - b (paired draws).
double paired_se(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace smoothmix
