#include "smoothmix/divergence.hpp"

#include "smoothmix/error.hpp"
#include "smoothmix/numeric.hpp"
#include "smoothmix/quadrature.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace smoothmix {

namespace {

constexpr double kClip = 700.0;

unsigned resolve_workers(unsigned requested, std::size_t tasks) {
    unsigned w = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    return static_cast<unsigned>(std::min<std::size_t>(w, std::max<std::size_t>(tasks, 1)));
}

}  // namespace

std::string to_string(KLMethod m) { return m == KLMethod::MonteCarlo ? "mc" : "quadrature"; }

nlohmann::json KLEstimate::to_json() const {
    nlohmann::json j{{"value", value}, {"se", std_error}, {"n", n}, {"method", to_string(method)},
                     {"seed", seed}, {"clip_events", clip_events}};
    if (method == KLMethod::Quadrature) j["error_estimate"] = error_estimate;
    return j;
}

// ---- Monte Carlo ----

KLEstimate kl_mc(const TargetDensity& target, const MixtureModel& model, std::size_t n, std::uint64_t seed,
                 const McOptions& opt, std::vector<double>* log_ratios) {
    require(n >= 100, ErrorCode::InvalidCount, "kl_mc needs n >= 100");
    const std::size_t tasks = (n + kTaskDraws - 1) / kTaskDraws;
    std::vector<MomentAccumulator> acc(tasks);
    std::vector<std::size_t> clips(tasks, 0);
    if (log_ratios) log_ratios->assign(n, 0.0);

    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto work = [&] {
        JointSample js;
        while (!stop.load(std::memory_order_relaxed)) {
            const std::size_t t = next.fetch_add(1);
            if (t >= tasks) return;
            try {
                const std::size_t first = t * kTaskDraws;
                const std::size_t count = std::min(kTaskDraws, n - first);
                target.sample_range(first, count, seed, js);
                for (std::size_t k = 0; k < count; ++k) {
                    const auto x = js.x_at(k);
                    const double r = target.log_pdf(js.y[k], x) - model.log_density(js.y[k], x);
                    if (!std::isfinite(r)) {
                        std::ostringstream msg;
                        msg << "non-finite log ratio at draw " << first + k << " (y = " << js.y[k] << ", x =";
                        for (double v : x) msg << ' ' << v;
                        msg << ")";
                        fail(ErrorCode::NonFiniteLogRatio, msg.str());
                    }
                    if (std::abs(r) > kClip) ++clips[t];
                    acc[t].add(r);
                    if (log_ratios) (*log_ratios)[first + k] = r;
                }
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                stop = true;
            }
        }
    };

    const unsigned workers = resolve_workers(opt.workers, tasks);
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (error) std::rethrow_exception(error);

    MomentAccumulator total;
    KLEstimate est;
    for (std::size_t t = 0; t < tasks; ++t) {
        total.merge(acc[t]);
        est.clip_events += clips[t];
    }
    est.value = total.mean();
    est.std_error = total.std_error();
    est.n = n;
    est.method = KLMethod::MonteCarlo;
    est.seed = seed;
    return est;
}

// ---- quadrature ----

namespace {

struct InnerIntegral {
    const TargetDensity& target;
    const MixtureModel& model;
    const QuadOptions& opt;
    int panels;
    std::size_t evaluations = 0;

    // Outward search from the mode for the point where f drops below the
    // truncation level; `dir` is +1 or -1.
    double truncation_end(double mode, double peak, double dir, std::span<const double> x, double scale) const {
        const double level = opt.truncation * peak;
        double step = scale;
        double inside = mode;
        double t = mode + dir * step;
        while (target.pdf(t, x) >= level) {
            inside = t;
            step *= 2.0;
            t = mode + dir * step;
            require(step < 1e12, ErrorCode::QuadratureFailure, "density does not decay for truncation");
        }
        double outside = t;
        for (int i = 0; i < 60; ++i) {
            const double mid = 0.5 * (inside + outside);
            (target.pdf(mid, x) >= level ? inside : outside) = mid;
        }
        return outside;
    }

    double operator()(std::span<const double> x) {
        const auto [sa, sb] = target.support_at(x);
        const double mode = target.mode(x);
        const auto ext = model.extent(x);
        const double peak = std::max(target.pdf(mode, x), target.pdf(std::nextafter(mode, sb), x));
        const double scale = std::max(ext.sigma_max, 1e-3);
        const double lo = std::isfinite(sa) ? sa : truncation_end(mode, peak, -1.0, x, scale);
        const double hi = std::isfinite(sb) ? sb : truncation_end(mode, peak, 1.0, x, scale);

        // Fine segments (about two of the narrowest model scales) across the
        // region holding the component means, geometric growth outside.
        const double core_lo = std::max(lo, ext.mean_lo - 8.0 * ext.sigma_max);
        const double core_hi = std::min(hi, ext.mean_hi + 8.0 * ext.sigma_max);
        std::vector<double> bp{lo, hi};
        if (mode > lo && mode < hi) bp.push_back(mode);
        if (core_lo < core_hi) {
            const double width = std::max(2.0 * ext.sigma_min, (core_hi - core_lo) / 20000.0);
            const auto segs = static_cast<std::size_t>(std::ceil((core_hi - core_lo) / width));
            for (std::size_t s = 0; s <= segs; ++s)
                bp.push_back(core_lo + (core_hi - core_lo) * static_cast<double>(s) / static_cast<double>(segs));
            for (double w = 2.0 * ext.sigma_max, t = core_lo - w; t > lo; w *= 2.0, t -= w) bp.push_back(t);
            for (double w = 2.0 * ext.sigma_max, t = core_hi + w; t < hi; w *= 2.0, t += w) bp.push_back(t);
        }
        std::erase_if(bp, [&](double v) { return v < lo || v > hi; });
        std::sort(bp.begin(), bp.end());
        bp.erase(std::unique(bp.begin(), bp.end()), bp.end());

        const ScalarFn integrand = [&](double y) {
            ++evaluations;
            const double f = target.pdf(y, x);
            if (f <= 0.0) return 0.0;
            const double r = target.log_pdf(y, x) - model.log_density(y, x);
            require(std::isfinite(r), ErrorCode::NonFiniteLogRatio, "non-finite log ratio in quadrature");
            return f * r;
        };
        const auto res = integrate_doubling(integrand, bp, 0.1 * opt.rel_tol, 1e-15, opt.max_levels, panels);
        require(res.converged, ErrorCode::QuadratureFailure,
                "inner quadrature did not converge in " + std::to_string(opt.max_levels) + " levels");
        return res.value;
    }
};

}  // namespace

KLEstimate kl_quadrature(const TargetDensity& target, const MixtureModel& model, int ny, int nx,
                         const QuadOptions& opt) {
    require(target.dim_y() == 1 && target.dim_x() == 1, ErrorCode::UnsupportedDimension,
            "quadrature oracle needs d = d_x = 1");
    require(ny >= 1 && nx >= 1, ErrorCode::InvalidCount, "quadrature needs positive panel counts");
    InnerIntegral inner{target, model, opt, ny};
    KLEstimate est;
    est.method = KLMethod::Quadrature;
    const auto& law = target.x_law();
    if (law.is_point() || (target.x_free() && model.x_free())) {
        const std::vector<double> x0(law.lower().begin(), law.lower().end());
        est.value = inner(x0);
    } else {
        const double a = law.lower()[0];
        const double b = law.upper()[0];
        const ScalarFn outer = [&](double t) {
            const double x[1] = {t};
            return inner(x) / (b - a);
        };
        const double bp[2] = {a, b};
        const auto res = integrate_doubling(outer, bp, opt.rel_tol, 1e-13, opt.max_levels, nx);
        require(res.converged, ErrorCode::QuadratureFailure,
                "outer quadrature did not converge in " + std::to_string(opt.max_levels) + " levels");
        est.value = res.value;
        est.error_estimate = res.error_estimate;
    }
    est.n = inner.evaluations;
    return est;
}

// ---- series ----

double paired_se(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size(), ErrorCode::InvalidParameter, "paired samples differ in size");
    MomentAccumulator acc;
    for (std::size_t i = 0; i < a.size(); ++i) acc.add(a[i] - b[i]);
    return acc.std_error();
}

bool KLSeries::decreased() const {
    if (points.size() < 2) return false;
    return points.front().estimate.value - points.back().estimate.value > 3.0 * first_last_combined_se;
}

nlohmann::json KLSeries::to_json() const {
    auto rows = nlohmann::json::array();
    for (const auto& p : points) {
        auto r = p.estimate.to_json();
        r["m"] = p.m;
        rows.push_back(r);
    }
    return {{"points", rows},
            {"pairwise_se", pairwise_se},
            {"increases_over_3se", increases},
            {"first_last_paired_se", first_last_paired_se},
            {"first_last_combined_se", first_last_combined_se},
            {"decreased", decreased()}};
}

KLSeries kl_series(const TargetDensity& target, const ModelBuilder& builder, const std::vector<std::size_t>& m_grid,
                   std::size_t n, std::uint64_t seed, const McOptions& opt) {
    require(m_grid.size() >= 3, ErrorCode::InvalidCount, "series needs at least 3 grid points");
    for (std::size_t i = 1; i < m_grid.size(); ++i)
        require(m_grid[i] > m_grid[i - 1], ErrorCode::InvalidParameter, "m grid must be strictly increasing");

    KLSeries out;
    std::vector<double> first, prev, cur;
    for (std::size_t i = 0; i < m_grid.size(); ++i) {
        const MixtureModel model = builder(m_grid[i]);
        out.points.push_back({m_grid[i], kl_mc(target, model, n, seed, opt, &cur)});
        if (i == 0) {
            first = cur;
        } else {
            const double se = paired_se(cur, prev);
            out.pairwise_se.push_back(se);
            const double step = out.points[i].estimate.value - out.points[i - 1].estimate.value;
            if (step > 3.0 * se) ++out.increases;
        }
        std::swap(prev, cur);
    }
    out.first_last_paired_se = paired_se(prev, first);
    const double s1 = out.points.front().estimate.std_error;
    const double s2 = out.points.back().estimate.std_error;
    out.first_last_combined_se = std::sqrt(s1 * s1 + s2 * s2);
    return out;
}

}  // namespace smoothmix
