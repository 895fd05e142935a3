#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>

namespace smoothmix {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))

inline double normal_log_pdf(double y, double mean, double sigma) {
    const double z = (y - mean) / sigma;
    return -0.5 * z * z - kLogSqrt2Pi - std::log(sigma);
}

inline double normal_pdf(double y, double mean, double sigma) {
    return std::exp(normal_log_pdf(y, mean, sigma));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// P(a <= Z <= b) for Z ~ N(0, sigma^2), without cancellation in the tails.
inline double normal_interval_prob(double a, double b, double sigma) {
    const double za = a / (sigma * std::numbers::sqrt2);
    const double zb = b / (sigma * std::numbers::sqrt2);
    if (za >= 0.0) return 0.5 * (std::erfc(za) - std::erfc(zb));
    if (zb <= 0.0) return 0.5 * (std::erfc(-zb) - std::erfc(-za));
    return 1.0 - 0.5 * (std::erfc(-za) + std::erfc(zb));
}

inline double log_add_exp(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

inline double log_sum_exp(std::span<const double> terms) {
    double top = -kInf;
    for (double t : terms) top = std::max(top, t);
    if (top == -kInf || top == kInf) return top;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - top);
    return top + std::log(s);
}

// log(1 - exp(-a)) for a > 0.
inline double log1mexp(double a) {
    return a < std::numbers::ln2 ? std::log(-std::expm1(-a)) : std::log1p(-std::exp(-a));
}

// Neumaier-compensated running sum with a second moment, for MC means and
// standard errors.
class MomentAccumulator {
public:
    void add(double v) {
        sum_.add(v);
        sum_sq_.add(v * v);
        ++n_;
    }
    void merge(const MomentAccumulator& other) {
        sum_.add(other.sum_.value());
        sum_sq_.add(other.sum_sq_.value());
        n_ += other.n_;
    }
    std::uint64_t count() const { return n_; }
    double mean() const { return n_ ? sum_.value() / static_cast<double>(n_) : 0.0; }
    double variance() const {
        if (n_ < 2) return 0.0;
        const double nn = static_cast<double>(n_);
        const double m = sum_.value() / nn;
        const double v = (sum_sq_.value() - nn * m * m) / (nn - 1.0);
        return v > 0.0 ? v : 0.0;
    }
    double std_error() const {
        return n_ ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
    }

private:
    struct Neumaier {
        double s = 0.0, c = 0.0;
        void add(double v) {
            const double t = s + v;
            c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
            s = t;
        }
        double value() const { return s + c; }
    };
    Neumaier sum_, sum_sq_;
    std::uint64_t n_ = 0;
};

}  // namespace smoothmix
