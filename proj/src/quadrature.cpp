#include "smoothmix/quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>

namespace smoothmix {

namespace {

using Rule = boost::math::quadrature::gauss<double, 10>;

double panel(const ScalarFn& f, double a, double b) {
    const auto& nodes = Rule::abscissa();
    const auto& weights = Rule::weights();
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const double dx = half * nodes[i];
        if (nodes[i] == 0.0) {
            s += weights[i] * f(mid);
        } else {
            s += weights[i] * (f(mid - dx) + f(mid + dx));
        }
    }
    return s * half;
}

}  // namespace

double gauss_legendre(const ScalarFn& f, double a, double b, int panels) {
    const double w = (b - a) / panels;
    double s = 0.0;
    for (int i = 0; i < panels; ++i) {
        const double lo = a + w * i;
        const double hi = i + 1 == panels ? b : a + w * (i + 1);
        s += panel(f, lo, hi);
    }
    return s;
}

QuadratureResult integrate_doubling(const ScalarFn& f, std::span<const double> breakpoints,
                                    double rel_tol, double abs_tol, int max_levels,
                                    int initial_panels) {
    QuadratureResult out;
    std::vector<double> segment_values(breakpoints.size() - 1);
    auto evaluate = [&](int panels) {
        double total = 0.0;
        for (std::size_t s = 0; s + 1 < breakpoints.size(); ++s) {
            if (breakpoints[s + 1] > breakpoints[s])
                total += gauss_legendre(f, breakpoints[s], breakpoints[s + 1], panels);
        }
        return total;
    };
    int panels = initial_panels;
    double previous = evaluate(panels);
    for (int level = 1; level <= max_levels; ++level) {
        panels *= 2;
        const double current = evaluate(panels);
        out.value = current;
        out.levels = level;
        out.error_estimate = std::abs(current - previous);
        if (out.error_estimate <= std::max(rel_tol * std::abs(current), abs_tol)) {
            out.converged = true;
            return out;
        }
        previous = current;
    }
    return out;
}

QuadratureResult integrate_adaptive(const ScalarFn& f, double a, double b, double rel_tol,
                                    int max_depth) {
    QuadratureResult out;
    double error = 0.0;
    double l1 = 0.0;
    out.value = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        f, a, b, static_cast<unsigned>(max_depth), rel_tol, &error, &l1);
    out.error_estimate = error * std::max(l1, std::abs(out.value));
    out.converged = error <= rel_tol * 10.0 || out.error_estimate < 1e-300;
    return out;
}

}  // namespace smoothmix
