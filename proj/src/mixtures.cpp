#include "smoothmix/mixtures.hpp"

#include "smoothmix/error.hpp"
#include "smoothmix/numeric.hpp"

#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace smoothmix {

namespace {

// Neglected components contribute at most this fraction of the density.
constexpr double kLogWindowTol = -39.143946580761284;  // log(1e-17)
constexpr double kMinTail = 1e-15;

// Running log-sum-exp with one exp per term.
struct OnlineLse {
    double top = -kInf;
    double sum = 0.0;

    void add(double t) {
        if (t == -kInf) return;
        if (t <= top) {
            sum += std::exp(t - top);
        } else {
            sum = sum * std::exp(top - t) + 1.0;
            top = t;
        }
    }
    double value() const { return top == -kInf ? -kInf : top + std::log(sum); }
};

// Half-width around y beyond which components can be dropped, given a
// lower bound `s_log` on the log density.
double window_radius(double sigma, double s_log) {
    if (s_log == -kInf) return kInf;
    const double q = std::numbers::ln2 - kLogSqrt2Pi - std::log(sigma) - s_log - kLogWindowTol;
    return sigma * std::sqrt(2.0 * std::max(0.0, q));
}

std::size_t clamp_index(double v, std::size_t lo, std::size_t hi) {
    if (!(v > static_cast<double>(lo))) return lo;
    if (v >= static_cast<double>(hi)) return hi;
    return static_cast<std::size_t>(v);
}

std::vector<double> representative_x(const TargetDensity& target) {
    const auto lo = target.x_law().lower();
    return {lo.begin(), lo.end()};
}

}  // namespace

// ---- construction ----

MixtureModel MixtureModel::exact(const TargetDensity& target) {
    MixtureModel mm;
    mm.kind_ = ModelKind::ExactWrapper;
    mm.target_ = std::make_shared<const TargetDensity>(target);
    mm.m_ = 1;
    return mm;
}

MixtureModel MixtureModel::fixed(std::vector<Component> comps) {
    require(!comps.empty(), ErrorCode::InvalidCount, "fixed mixture needs a component");
    double total = 0.0;
    for (const auto& c : comps) {
        require(c.weight >= 0.0 && std::isfinite(c.weight), ErrorCode::InvalidParameter,
                "mixture weights must be nonnegative");
        require(c.sigma > 0.0 && std::isfinite(c.sigma), ErrorCode::InvalidParameter,
                "component scales must be positive");
        require(std::isfinite(c.mean), ErrorCode::InvalidParameter, "component means must be finite");
        total += c.weight;
    }
    require(std::abs(total - 1.0) <= 1e-12, ErrorCode::InvalidParameter, "mixture weights must sum to 1");
    MixtureModel mm;
    mm.kind_ = ModelKind::Fixed;
    mm.m_ = comps.size();
    mm.comps_ = std::move(comps);
    return mm;
}

namespace {

void check_grid_inputs(const TargetDensity& target, const Partition& partition, const Schedule& schedule) {
    require(target.dim_y() == 1 && partition.dimension() == 1, ErrorCode::UnsupportedDimension,
            "mixture models support d = 1");
    require(schedule.m == partition.size(), ErrorCode::InconsistentInputs,
            "schedule and partition disagree on m");
    require(!schedule.h.x_dependent() && !schedule.sigma.x_dependent() && !schedule.sigma0.x_dependent(),
            ErrorCode::InconsistentInputs, "grid models need constant h, sigma, sigma_0");
    const double h = schedule.h.factor;
    require(std::abs(h - partition.side()) <= 1e-9 * partition.side(), ErrorCode::InconsistentInputs,
            "schedule and partition disagree on h");
    require(schedule.sigma.factor > 0.0 && schedule.sigma0.factor > 0.0, ErrorCode::InvalidParameter,
            "scales must be positive");
}

}  // namespace

MixtureModel build_m0(const TargetDensity& target, const Partition& partition, const Schedule& schedule) {
    check_grid_inputs(target, partition, schedule);
    MixtureModel mm;
    mm.kind_ = ModelKind::M0;
    mm.target_ = std::make_shared<const TargetDensity>(target);
    mm.schedule_ = schedule;
    mm.partition_ = partition;
    mm.m_ = partition.size();
    mm.has_tail_ = partition.has_tail();
    mm.origin_ = partition.block_lo();
    mm.h_ = partition.side();
    mm.block_hi_ = partition.block_hi();
    const FineBlock fb = partition.fine_block();
    mm.tail_below_ = fb.tail_below;
    mm.tail_above_ = fb.tail_above;
    mm.sigma_ = schedule.sigma.factor;
    mm.sigma0_ = schedule.sigma0.factor;
    if (target.x_free()) mm.cache_weights();
    return mm;
}

MixtureModel build_m1(const TargetDensity& target, const Partition& partition, const Schedule& schedule,
                      double eps_target, int degree_cap) {
    require(eps_target > 0.0, ErrorCode::InvalidParameter, "eps_target must be positive");
    const MixtureModel base = build_m0(target, partition, schedule);
    MixtureModel mm = base;
    mm.kind_ = ModelKind::M1;
    mm.cached_.clear();
    mm.eps_target_ = eps_target;
    const std::size_t count = mm.m_ + (mm.has_tail_ ? 1 : 0);

    // log F(A_j|x) for every cell, tail last.
    const FamilyValues values = [&](std::span<const double> x, std::span<double> out) {
        base.log_fine_weights(0, base.m_, x, {}, out.subspan(0, base.m_));
        if (base.has_tail_) out[base.m_] = base.log_tail_weight(x, {});
        for (double v : out)
            require(v >= std::log(1e-300), ErrorCode::ZeroCellProbability,
                    "cell probability below 1e-300 on the covariate grid");
    };

    const auto lo = target.x_law().lower();
    const auto hi = target.x_law().upper();
    if (target.x_free()) {
        std::vector<double> vals(count);
        values(representative_x(target), vals);
        for (double v : vals) {
            mm.fits_.emplace_back(std::vector<double>(lo.begin(), lo.end()),
                                  std::vector<double>(hi.begin(), hi.end()), 0, std::vector<double>{v});
        }
        mm.achieved_eps_ = 0.0;
        mm.fit_degree_ = 0;
    } else {
        const int cap = degree_cap > 0 ? degree_cap : default_degree_cap(target.dim_x());
        FamilyFit fit = fit_family(values, count, lo, hi, eps_target, cap, false);
        require(fit.met, ErrorCode::DegreeCapExceeded,
                "M1 fit reached degree " + std::to_string(fit.degree) + " with error " +
                    std::to_string(fit.achieved) + " above " + std::to_string(eps_target));
        mm.fits_ = std::move(fit.fits);
        mm.achieved_eps_ = fit.achieved;
        mm.fit_degree_ = fit.degree;
    }
    if (mm.x_free()) mm.cache_weights();
    return mm;
}

MixtureModel build_m3(const TargetDensity& target, const Partition& partition, const XGrid& xgrid,
                      const Schedule& schedule) {
    const MixtureModel base = build_m0(target, partition, schedule);
    MixtureModel mm = base;
    mm.kind_ = ModelKind::M3;
    mm.cached_.clear();
    const int dx = target.dim_x();
    require(xgrid.dimension() == dx, ErrorCode::InconsistentInputs, "x grid dimension differs from d_x");
    require(!target.x_law().is_point(), ErrorCode::InconsistentInputs, "M3 needs X = [0,1]^d_x");
    for (int a = 0; a < dx; ++a)
        require(target.x_law().lower()[a] == 0.0 && target.x_law().upper()[a] == 1.0,
                ErrorCode::InconsistentInputs, "M3 needs X = [0,1]^d_x");
    require(schedule.R.has_value() && *schedule.R > 0.0, ErrorCode::InconsistentInputs,
            "M3 schedule must supply R");
    if (schedule.k)
        require(*schedule.k == xgrid.per_axis(), ErrorCode::InconsistentInputs,
                "schedule and x grid disagree on k");
    mm.xgrid_ = xgrid;
    mm.R_ = *schedule.R;
    for (std::size_t i = 0; i < xgrid.size(); ++i) {
        mm.centers_.push_back(xgrid.center(i));
        std::vector<double> row(mm.m_ + 1, -kInf);
        // M0-style weights at the cell center.
        std::vector<double> edges(mm.m_ + 1);
        for (std::size_t j = 0; j <= mm.m_; ++j) edges[j] = mm.grid_edge(j);
        target.log_cell_probs(edges, mm.centers_.back(), std::span<double>(row).subspan(0, mm.m_));
        mm.log_f_.push_back(std::move(row));
    }
    for (std::size_t i = 0; i < xgrid.size(); ++i)
        mm.log_f_[i][mm.m_] = base.log_tail_weight(mm.centers_[i], {});
    if (mm.x_free()) mm.cache_weights();
    return mm;
}

MixtureModel build_m4(const TargetDensity& target, std::size_t m, const Schedule& schedule) {
    require(target.dim_y() == 1, ErrorCode::UnsupportedDimension, "M4 needs d = 1");
    require(schedule.p.has_value(), ErrorCode::InconsistentInputs, "M4 schedule must supply p");
    require(schedule.m == m, ErrorCode::InconsistentInputs, "schedule and model disagree on m");
    require(m >= 1, ErrorCode::InvalidCount, "M4 needs m >= 1");
    const double p = *schedule.p;
    const double md = static_cast<double>(m);
    require(p > 0.0 && md * p <= 1.0 + 1e-12, ErrorCode::InvalidProb, "M4 needs 0 < p <= 1/m");

    MixtureModel mm;
    mm.kind_ = ModelKind::M4;
    mm.target_ = std::make_shared<const TargetDensity>(target);
    mm.schedule_ = schedule;
    mm.m_ = m;
    mm.p_ = p;
    mm.offset_ = epp_offset(target, m, p);
    const double tail = 1.0 - md * p;
    mm.has_tail_ = tail > kMinTail;
    mm.log_tail_w_ = mm.has_tail_ ? std::log(tail) : -kInf;
    mm.sigma_ = schedule.sigma.factor;
    mm.sigma0_ = schedule.sigma0.factor;

    // Quantile-invertibility check at the covariate box corners.
    const auto lo = target.x_law().lower();
    const auto hi = target.x_law().upper();
    for (const auto& x : {std::vector<double>(lo.begin(), lo.end()), std::vector<double>(hi.begin(), hi.end())}) {
        for (std::size_t j : {std::size_t{0}, m - 1}) {
            double q;
            try {
                q = mm.epp_mean(j, x);
            } catch (const Error& e) {
                fail(ErrorCode::NonInvertible, std::string("quantile failed: ") + e.what());
            }
            require(std::isfinite(q), ErrorCode::NonInvertible, "quantile is not finite");
        }
        require(schedule.sigma.at(x) > 0.0 && (!mm.has_tail_ || schedule.sigma0.at(x) > 0.0),
                ErrorCode::InvalidParameter, "scales must be positive");
    }
    if (target.x_free() && !schedule.x_dependent()) {
        // Cache the means; fits_ holds them as degree-0 curves.
        const auto x0 = representative_x(target);
        std::vector<double> means(m);
        for (std::size_t j = 0; j < m; ++j) means[j] = mm.epp_mean(j, x0);
        mm.means_ = std::move(means);
    }
    return mm;
}

MixtureModel build_m5(const TargetDensity& target, std::size_t m, const Schedule& schedule, int degree_cap) {
    MixtureModel base = build_m4(target, m, schedule);
    const auto sup = target.density_sup();
    require(sup.has_value() && *sup > 0.0, ErrorCode::SupUnknown,
            "M5 needs the density sup of family " + to_string(target.family()));
    MixtureModel mm = base;
    mm.kind_ = ModelKind::M5;
    mm.fits_.clear();
    mm.eps_target_ = base.p_ / (2.0 * *sup);

    const auto lo = target.x_law().lower();
    const auto hi = target.x_law().upper();
    const FamilyValues values = [&](std::span<const double> x, std::span<double> out) {
        for (std::size_t j = 0; j < m; ++j) out[j] = target.quantile(base.offset_ + (j + 0.5) * base.p_, x);
    };
    if (target.x_free()) {
        std::vector<double> vals(m);
        values(representative_x(target), vals);
        for (double v : vals)
            mm.fits_.emplace_back(std::vector<double>(lo.begin(), lo.end()),
                                  std::vector<double>(hi.begin(), hi.end()), 0, std::vector<double>{v});
        mm.achieved_eps_ = 0.0;
        mm.fit_degree_ = 0;
        return mm;
    }
    const int cap = degree_cap > 0 ? degree_cap : default_degree_cap(target.dim_x());
    FamilyFit fit = fit_family(values, m, lo, hi, mm.eps_target_, cap, true);
    require(fit.met, ErrorCode::DegreeCapExceeded,
            "M5 mean fit reached degree " + std::to_string(fit.degree) + " with error " +
                std::to_string(fit.achieved) + ", need < " + std::to_string(mm.eps_target_));
    mm.fits_ = std::move(fit.fits);
    mm.achieved_eps_ = fit.achieved;
    mm.fit_degree_ = fit.degree;
    return mm;
}

MixtureModel build_default(ModelKind kind, const TargetDensity& target, std::size_t m,
                           const BuildOptions& opt) {
    if (kind == ModelKind::ExactWrapper) return MixtureModel::exact(target);
    require(kind != ModelKind::Fixed, ErrorCode::UnsupportedCombination, "fixed mixtures have no default");
    const Schedule s = default_schedule(kind, target, m);
    switch (kind) {
        case ModelKind::M0: return build_m0(target, grid_partition(target, m), s);
        case ModelKind::M1: return build_m1(target, grid_partition(target, m), s, opt.eps_target, opt.degree_cap);
        case ModelKind::M3: return build_m3(target, grid_partition(target, m), XGrid(target.dim_x(), *s.k), s);
        case ModelKind::M4: return build_m4(target, m, s);
        case ModelKind::M5: return build_m5(target, m, s, opt.degree_cap);
        default: break;
    }
    fail(ErrorCode::UnsupportedCombination, "unknown model kind");
}

// ---- evaluation helpers ----

std::size_t MixtureModel::component_count() const {
    const std::size_t tail = has_tail_ ? 1 : 0;
    switch (kind_) {
        case ModelKind::ExactWrapper: return 1;
        case ModelKind::Fixed: return comps_.size();
        case ModelKind::M3: return m_ * xgrid_->size() + tail;
        default: return m_ + tail;
    }
}

double MixtureModel::epp_mean(std::size_t j, std::span<const double> x) const {
    if (kind_ == ModelKind::M5) return fits_[j](x);
    if (!means_.empty()) return means_[j];
    return target_->quantile(offset_ + (static_cast<double>(j) + 0.5) * p_, x);
}

MixtureModel::XState MixtureModel::prepare(std::span<const double> x, bool all_cells) const {
    XState st;
    if (kind_ == ModelKind::M1) {
        st.poly.resize(fits_.size());
        for (std::size_t j = 0; j < fits_.size(); ++j) st.poly[j] = fits_[j](x);
        st.log_norm = log_sum_exp(st.poly);
    } else if (kind_ == ModelKind::M3) {
        const std::size_t n = centers_.size();
        std::vector<double> e(n);
        double top = -kInf;
        for (std::size_t i = 0; i < n; ++i) {
            double d2 = 0.0;
            for (std::size_t a = 0; a < x.size(); ++a) {
                const double dv = centers_[i][a] - x[a];
                d2 += dv * dv;
            }
            // -R |x_i - x|^2 differs from -R (x_i'x_i - 2 x_i'x) by a constant in i.
            e[i] = -R_ * d2;
            top = std::max(top, e[i]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!all_cells && e[i] < top - 745.0) continue;
            st.cells.push_back(i);
            st.log_g.push_back(e[i]);
        }
        const double norm = log_sum_exp(st.log_g);
        for (double& v : st.log_g) v -= norm;
    } else if (kind_ == ModelKind::M5) {
        st.poly.resize(m_);
        for (std::size_t j = 0; j < m_; ++j) st.poly[j] = fits_[j](x);
    }
    return st;
}

double MixtureModel::log_tail_weight(std::span<const double> x, const XState& st) const {
    if (!has_tail_) return -kInf;
    switch (kind_) {
        case ModelKind::M0: {
            double v = -kInf;
            if (tail_below_) v = log_add_exp(v, target_->log_cell_prob(-kInf, origin_, x));
            if (tail_above_) v = log_add_exp(v, target_->log_cell_prob(block_hi_, kInf, x));
            return v;
        }
        case ModelKind::M1: return st.poly[m_] - st.log_norm;
        case ModelKind::M3: {
            OnlineLse acc;
            for (std::size_t c = 0; c < st.cells.size(); ++c) acc.add(log_f_[st.cells[c]][m_] + st.log_g[c]);
            return acc.value();
        }
        default: return log_tail_w_;
    }
}

void MixtureModel::log_fine_weights(std::size_t j0, std::size_t j1, std::span<const double> x,
                                    const XState& st, std::span<double> out) const {
    switch (kind_) {
        case ModelKind::M0: {
            thread_local std::vector<double> edges;
            edges.resize(j1 - j0 + 1);
            for (std::size_t j = j0; j <= j1; ++j) edges[j - j0] = grid_edge(j);
            target_->log_cell_probs(edges, x, out.subspan(0, j1 - j0));
            return;
        }
        case ModelKind::M1:
            for (std::size_t j = j0; j < j1; ++j) out[j - j0] = st.poly[j] - st.log_norm;
            return;
        case ModelKind::M3:
            for (std::size_t j = j0; j < j1; ++j) {
                OnlineLse acc;
                for (std::size_t c = 0; c < st.cells.size(); ++c) acc.add(log_f_[st.cells[c]][j] + st.log_g[c]);
                out[j - j0] = acc.value();
            }
            return;
        default: {
            const double lp = std::log(p_);
            for (std::size_t j = j0; j < j1; ++j) out[j - j0] = lp;
        }
    }
}

// ---- density ----

void MixtureModel::cache_weights() {
    const auto x0 = representative_x(*target_);
    const XState st = prepare(x0, true);
    cached_.assign(m_ + 1, -kInf);
    log_fine_weights(0, m_, x0, st, std::span<double>(cached_).subspan(0, m_));
    cached_[m_] = log_tail_weight(x0, st);
}

double MixtureModel::grid_log_density(double y, std::span<const double> x) const {
    const bool cached = !cached_.empty();
    const XState st = cached ? XState{} : prepare(x, false);
    auto fine = [&](std::size_t j0, std::size_t j1, std::span<double> out) {
        if (cached)
            std::copy(cached_.begin() + j0, cached_.begin() + j1, out.begin());
        else
            log_fine_weights(j0, j1, x, st, out);
    };
    const double lt = cached ? cached_[m_] : log_tail_weight(x, st);
    const double tail_term = has_tail_ ? lt + normal_log_pdf(y, 0.0, sigma0_) : -kInf;

    const std::size_t js = clamp_index(std::floor((y - origin_) / h_), 0, m_ - 1);
    double lw;
    fine(js, js + 1, {&lw, 1});
    const double s0 = log_add_exp(tail_term, lw + normal_log_pdf(y, grid_mean(js), sigma_));
    const double radius = window_radius(sigma_, s0);
    const std::size_t j0 = std::min(js, clamp_index(std::ceil((y - radius - origin_) / h_ - 0.5), 0, m_ - 1));
    const std::size_t j1 = std::max(js + 1, clamp_index(std::floor((y + radius - origin_) / h_ - 0.5) + 1.0, 0, m_));

    thread_local std::vector<double> w;
    w.resize(j1 - j0);
    fine(j0, j1, w);
    OnlineLse acc;
    acc.add(tail_term);
    const double c = -kLogSqrt2Pi - std::log(sigma_);
    const double inv = 1.0 / sigma_;
    for (std::size_t j = j0; j < j1; ++j) {
        const double z = (y - grid_mean(j)) * inv;
        acc.add(w[j - j0] - 0.5 * z * z + c);
    }
    return acc.value();
}

double MixtureModel::epp_log_density(double y, std::span<const double> x) const {
    const XState st = prepare(x, false);
    const double sigma = schedule_->sigma.at(x);
    const double lp = std::log(p_);
    const double c = lp - kLogSqrt2Pi - std::log(sigma);
    const double inv = 1.0 / sigma;
    const double tail_term = has_tail_ ? log_tail_w_ + normal_log_pdf(y, 0.0, schedule_->sigma0.at(x)) : -kInf;

    auto mean_at = [&](std::size_t j) { return kind_ == ModelKind::M5 ? st.poly[j] : epp_mean(j, x); };
    auto term = [&](double mu) {
        const double z = (y - mu) * inv;
        return c - 0.5 * z * z;
    };

    if (kind_ == ModelKind::M5) {
        OnlineLse acc;
        acc.add(tail_term);
        for (std::size_t j = 0; j < m_; ++j) acc.add(term(st.poly[j]));
        return acc.value();
    }

    if (!means_.empty()) {
        // Sorted constant means: locate the window by bisection.
        const auto near = std::lower_bound(means_.begin(), means_.end(), y);
        double top = -kInf;
        if (near != means_.end()) top = term(*near);
        if (near != means_.begin()) top = std::max(top, term(*(near - 1)));
        const double radius = window_radius(sigma, log_add_exp(tail_term, top));
        const auto first = std::lower_bound(means_.begin(), means_.end(), y - radius);
        const auto last = std::upper_bound(first, means_.end(), y + radius);
        top = std::max(top, tail_term);
        double sum = detail::sum_gauss(&*first, static_cast<std::size_t>(last - first), y, -0.5 * inv * inv,
                                       c - top);
        sum += tail_term == -kInf ? 0.0 : std::exp(tail_term - top);
        return top + std::log(sum);
    }

    const double u = target_->cdf(y, x);
    const std::size_t js = clamp_index(std::floor((u - offset_) / p_), 0, m_ - 1);
    const double mu_s = mean_at(js);
    const double radius = window_radius(sigma, log_add_exp(tail_term, term(mu_s)));

    OnlineLse acc;
    acc.add(tail_term);
    acc.add(term(mu_s));
    for (std::size_t j = js; j-- > 0;) {
        const double mu = mean_at(j);
        if (mu < y - radius) break;
        acc.add(term(mu));
    }
    for (std::size_t j = js + 1; j < m_; ++j) {
        const double mu = mean_at(j);
        if (mu > y + radius) break;
        acc.add(term(mu));
    }
    return acc.value();
}

double MixtureModel::log_density(double y, std::span<const double> x) const {
    switch (kind_) {
        case ModelKind::ExactWrapper: return target_->log_pdf(y, x);
        case ModelKind::Fixed: {
            OnlineLse acc;
            for (const auto& c : comps_)
                if (c.weight > 0.0) acc.add(std::log(c.weight) + normal_log_pdf(y, c.mean, c.sigma));
            return acc.value();
        }
        case ModelKind::M0:
        case ModelKind::M1:
        case ModelKind::M3: return grid_log_density(y, x);
        case ModelKind::M4:
        case ModelKind::M5: return epp_log_density(y, x);
    }
    return -kInf;
}

double MixtureModel::density(double y, std::span<const double> x) const {
    if (kind_ == ModelKind::ExactWrapper) return target_->pdf(y, x);
    return std::exp(log_density(y, x));
}

// ---- weights and components ----

std::vector<Component> MixtureModel::components(std::span<const double> x) const {
    std::vector<Component> out;
    switch (kind_) {
        case ModelKind::ExactWrapper:
            fail(ErrorCode::Unsupported, "the exact wrapper has no mixture components");
        case ModelKind::Fixed: return comps_;
        case ModelKind::M0:
        case ModelKind::M1: {
            const XState st = prepare(x, true);
            std::vector<double> w(m_);
            log_fine_weights(0, m_, x, st, w);
            for (std::size_t j = 0; j < m_; ++j) out.push_back({std::exp(w[j]), grid_mean(j), sigma_});
            if (has_tail_) out.push_back({std::exp(log_tail_weight(x, st)), 0.0, sigma0_});
            return out;
        }
        case ModelKind::M3: {
            const XState st = prepare(x, true);
            double tail = 0.0;
            for (std::size_t i = 0; i < centers_.size(); ++i) {
                for (std::size_t j = 0; j < m_; ++j)
                    out.push_back({std::exp(log_f_[i][j] + st.log_g[i]), grid_mean(j), sigma_});
                tail += std::exp(log_f_[i][m_] + st.log_g[i]);
            }
            if (has_tail_) out.push_back({tail, 0.0, sigma0_});
            return out;
        }
        case ModelKind::M4:
        case ModelKind::M5: {
            const XState st = prepare(x, true);
            const double sigma = schedule_->sigma.at(x);
            for (std::size_t j = 0; j < m_; ++j)
                out.push_back({p_, kind_ == ModelKind::M5 ? st.poly[j] : epp_mean(j, x), sigma});
            if (has_tail_) out.push_back({std::exp(log_tail_w_), 0.0, schedule_->sigma0.at(x)});
            return out;
        }
    }
    return out;
}

std::vector<double> MixtureModel::mixing_weights(std::span<const double> x) const {
    if (kind_ == ModelKind::ExactWrapper) return {1.0};
    std::vector<double> w;
    for (const auto& c : components(x)) w.push_back(c.weight);
    return w;
}

std::vector<double> MixtureModel::x_cell_mass(std::span<const double> x) const {
    require(kind_ == ModelKind::M3, ErrorCode::Unsupported, "covariate cells exist only for M3");
    const XState st = prepare(x, true);
    std::vector<double> out;
    for (double lg : st.log_g) out.push_back(std::exp(lg));
    return out;
}

MixtureModel::Extent MixtureModel::extent(std::span<const double> x) const {
    Extent e;
    switch (kind_) {
        case ModelKind::ExactWrapper: {
            e.mean_lo = e.mean_hi = target_->mode(x);
            return e;
        }
        case ModelKind::Fixed: {
            e.mean_lo = e.sigma_min = kInf;
            e.mean_hi = e.sigma_max = -kInf;
            for (const auto& c : comps_) {
                e.mean_lo = std::min(e.mean_lo, c.mean);
                e.mean_hi = std::max(e.mean_hi, c.mean);
                e.sigma_min = std::min(e.sigma_min, c.sigma);
                e.sigma_max = std::max(e.sigma_max, c.sigma);
            }
            return e;
        }
        case ModelKind::M0:
        case ModelKind::M1:
        case ModelKind::M3:
            e.mean_lo = grid_mean(0);
            e.mean_hi = grid_mean(m_ - 1);
            e.sigma_min = e.sigma_max = sigma_;
            if (has_tail_) {
                e.mean_lo = std::min(e.mean_lo, 0.0);
                e.mean_hi = std::max(e.mean_hi, 0.0);
                e.sigma_min = std::min(e.sigma_min, sigma0_);
                e.sigma_max = std::max(e.sigma_max, sigma0_);
            }
            return e;
        case ModelKind::M4:
        case ModelKind::M5: {
            const XState st = prepare(x, true);
            e.mean_lo = kInf;
            e.mean_hi = -kInf;
            for (std::size_t j : {std::size_t{0}, m_ - 1}) {
                const double mu = kind_ == ModelKind::M5 ? st.poly[j] : epp_mean(j, x);
                e.mean_lo = std::min(e.mean_lo, mu);
                e.mean_hi = std::max(e.mean_hi, mu);
            }
            if (kind_ == ModelKind::M5)
                for (double mu : st.poly) {
                    e.mean_lo = std::min(e.mean_lo, mu);
                    e.mean_hi = std::max(e.mean_hi, mu);
                }
            e.sigma_min = e.sigma_max = schedule_->sigma.at(x);
            if (has_tail_) {
                const double s0 = schedule_->sigma0.at(x);
                e.mean_lo = std::min(e.mean_lo, 0.0);
                e.mean_hi = std::max(e.mean_hi, 0.0);
                e.sigma_min = std::min(e.sigma_min, s0);
                e.sigma_max = std::max(e.sigma_max, s0);
            }
            return e;
        }
    }
    return e;
}

bool MixtureModel::x_free() const {
    auto fits_constant = [&] {
        return std::all_of(fits_.begin(), fits_.end(), [](const PolyFit& f) { return f.degree() == 0; });
    };
    switch (kind_) {
        case ModelKind::ExactWrapper: return target_->x_free();
        case ModelKind::Fixed: return true;
        case ModelKind::M0: return target_->x_free();
        case ModelKind::M1: return fits_constant();
        case ModelKind::M3: return target_->x_free() || centers_.size() == 1;
        case ModelKind::M4: return target_->x_free() && !schedule_->x_dependent();
        case ModelKind::M5: return fits_constant() && !schedule_->x_dependent();
    }
    return false;
}

nlohmann::json MixtureModel::to_json() const {
    nlohmann::json j{{"kind", to_string(kind_)}, {"component_count", component_count()}};
    if (target_) j["target"] = target_->to_json();
    if (schedule_) j["schedule"] = schedule_->to_json();
    if (partition_) j["partition"] = partition_->to_json();
    switch (kind_) {
        case ModelKind::Fixed: {
            auto arr = nlohmann::json::array();
            for (const auto& c : comps_) arr.push_back({{"weight", c.weight}, {"mean", c.mean}, {"sigma", c.sigma}});
            j["components"] = arr;
            break;
        }
        case ModelKind::M1:
        case ModelKind::M5: {
            auto arr = nlohmann::json::array();
            for (const auto& f : fits_) arr.push_back(f.to_json());
            j["fits"] = arr;
            j["eps_target"] = eps_target_;
            j["achieved_eps"] = achieved_eps_;
            j["degree"] = fit_degree_;
            break;
        }
        case ModelKind::M3:
            j["x_grid"] = xgrid_->to_json();
            j["R"] = R_;
            break;
        default: break;
    }
    if (kind_ == ModelKind::M4 || kind_ == ModelKind::M5) {
        j["p"] = p_;
        j["offset"] = offset_;
        j["tail_weight"] = has_tail_ ? std::exp(log_tail_w_) : 0.0;
    }
    return j;
}

}  // namespace smoothmix
