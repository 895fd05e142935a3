#include "kernels.hpp"

#include <cmath>

namespace smoothmix::detail {

double sum_gauss(const double* mu, std::size_t n, double y, double q, double shift) {
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (std::size_t i = 0; i < n; ++i) {
        const double d = y - mu[i];
        s += std::exp(q * d * d + shift);
    }
    return s;
}

}  // namespace smoothmix::detail
