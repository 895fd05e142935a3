#include "smoothmix/polyfit.hpp"

#include "smoothmix/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace smoothmix {

namespace {

void chebyshev(double t, int degree, double* out) {
    out[0] = 1.0;
    if (degree >= 1) out[1] = t;
    for (int k = 2; k <= degree; ++k) out[k] = 2.0 * t * out[k - 1] - out[k - 2];
}

std::size_t ipow(std::size_t b, int e) {
    std::size_t r = 1;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
}

// Tensor basis row at x into `row` (size (deg+1)^dx).
void basis_row(std::span<const double> x, std::span<const double> lo, std::span<const double> hi,
               int degree, double* row) {
    const int dx = static_cast<int>(lo.size());
    const int n1 = degree + 1;
    double axis_vals[2][64];
    for (int a = 0; a < dx; ++a) {
        const double t = hi[a] > lo[a] ? (2.0 * x[a] - lo[a] - hi[a]) / (hi[a] - lo[a]) : 0.0;
        chebyshev(std::clamp(t, -1.0, 1.0), degree, axis_vals[a]);
    }
    if (dx == 1) {
        std::copy(axis_vals[0], axis_vals[0] + n1, row);
        return;
    }
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n1; ++j) row[i * n1 + j] = axis_vals[0][i] * axis_vals[1][j];
}

std::vector<std::vector<double>> tensor_points(const std::vector<std::vector<double>>& axes) {
    std::vector<std::vector<double>> pts;
    if (axes.size() == 1) {
        for (double v : axes[0]) pts.push_back({v});
    } else {
        for (double u : axes[0])
            for (double v : axes[1]) pts.push_back({u, v});
    }
    return pts;
}

}  // namespace

PolyFit::PolyFit(std::vector<double> lo, std::vector<double> hi, int degree, std::vector<double> coef)
    : lo_(std::move(lo)), hi_(std::move(hi)), degree_(degree), coef_(std::move(coef)) {}

double PolyFit::operator()(std::span<const double> x) const {
    const std::size_t nb = ipow(static_cast<std::size_t>(degree_ + 1), dimension());
    double row[64 * 64];
    basis_row(x, lo_, hi_, degree_, row);
    double v = 0.0;
    for (std::size_t k = 0; k < nb; ++k) v += coef_[k] * row[k];
    return v;
}

nlohmann::json PolyFit::to_json() const {
    return {{"lower", lo_}, {"upper", hi_}, {"degree", degree_}, {"coefficients", coef_},
            {"achieved_error", achieved_}};
}

int default_degree_cap(int d_x) { return d_x == 1 ? 24 : 12; }

FamilyFit fit_family(const FamilyValues& values, std::size_t count, std::span<const double> lo,
                     std::span<const double> hi, double eps, int degree_cap, bool strict) {
    const int dx = static_cast<int>(lo.size());
    require(dx == 1 || dx == 2, ErrorCode::UnsupportedDimension, "polynomial fits need d_x in {1, 2}");
    require(degree_cap >= 0 && degree_cap < 63, ErrorCode::InvalidParameter, "degree cap out of range");
    require(count >= 1, ErrorCode::InvalidCount, "nothing to fit");
    const std::vector<double> vlo(lo.begin(), lo.end()), vhi(hi.begin(), hi.end());

    FamilyFit best;
    for (int deg = 0; deg <= degree_cap; ++deg) {
        const std::size_t n_fit = 2 * static_cast<std::size_t>(deg + 1);
        std::vector<std::vector<double>> axes(dx);
        for (int a = 0; a < dx; ++a)
            for (std::size_t i = 0; i < n_fit; ++i) {
                const double t = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) / n_fit);
                axes[a].push_back(0.5 * (lo[a] + hi[a]) + 0.5 * (hi[a] - lo[a]) * t);
            }
        const auto nodes = tensor_points(axes);
        const std::size_t nb = ipow(static_cast<std::size_t>(deg + 1), dx);

        Eigen::MatrixXd design(nodes.size(), nb);
        Eigen::MatrixXd rhs(nodes.size(), count);
        std::vector<double> buf(count);
        for (std::size_t r = 0; r < nodes.size(); ++r) {
            std::vector<double> row(nb);
            basis_row(nodes[r], lo, hi, deg, row.data());
            for (std::size_t c = 0; c < nb; ++c) design(r, c) = row[c];
            values(nodes[r], buf);
            for (std::size_t f = 0; f < count; ++f) {
                require(std::isfinite(buf[f]), ErrorCode::InvalidParameter, "fit data must be finite");
                rhs(r, f) = buf[f];
            }
        }
        const Eigen::MatrixXd coef = design.colPivHouseholderQr().solve(rhs);

        FamilyFit cur;
        cur.degree = deg;
        cur.fit_nodes_per_axis = n_fit;
        for (std::size_t f = 0; f < count; ++f) {
            std::vector<double> c(nb);
            for (std::size_t k = 0; k < nb; ++k) c[k] = coef(k, f);
            cur.fits.emplace_back(vlo, vhi, deg, std::move(c));
        }

        const std::size_t n_val = std::max<std::size_t>(4 * n_fit, 64) + 1;
        cur.validation_points_per_axis = n_val;
        std::vector<std::vector<double>> vaxes(dx);
        for (int a = 0; a < dx; ++a)
            for (std::size_t i = 0; i < n_val; ++i)
                vaxes[a].push_back(lo[a] + (hi[a] - lo[a]) * static_cast<double>(i) / (n_val - 1));
        std::vector<double> err(count, 0.0);
        for (const auto& x : tensor_points(vaxes)) {
            values(x, buf);
            for (std::size_t f = 0; f < count; ++f) err[f] = std::max(err[f], std::abs(cur.fits[f](x) - buf[f]));
        }
        for (std::size_t f = 0; f < count; ++f) {
            cur.fits[f].set_achieved_error(err[f]);
            cur.achieved = std::max(cur.achieved, err[f]);
        }
        cur.met = strict ? cur.achieved < eps : cur.achieved <= eps;
        if (cur.met || deg == 0 || cur.achieved < best.achieved) best = std::move(cur);
        if (best.met) return best;
    }
    return best;
}

}  // namespace smoothmix
