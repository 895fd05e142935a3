#pragma once

#include <functional>
#include <span>
#include <vector>

namespace smoothmix {

using ScalarFn = std::function<double(double)>;

struct QuadratureResult {
    double value = 0.0;
    double error_estimate = 0.0;
    int levels = 0;
    bool converged = false;
};

// Composite 10-point Gauss-Legendre rule over `panels` equal panels of [a, b].
double gauss_legendre(const ScalarFn& f, double a, double b, int panels);

/// Composite Gauss-Legendre over the segments defined by `breakpoints`
/// (sorted, at least two), doubling the panel count per segment until two
/// successive levels agree to rel_tol (or abs_tol) or max_levels is hit.
QuadratureResult integrate_doubling(const ScalarFn& f, std::span<const double> breakpoints,
                                    double rel_tol, double abs_tol, int max_levels = 12,
                                    int initial_panels = 2);

/// Adaptive Gauss-Kronrod (15 point); either bound may be infinite.
QuadratureResult integrate_adaptive(const ScalarFn& f, double a, double b, double rel_tol,
                                    int max_depth = 30);

}  // namespace smoothmix
