#pragma once

#include <cstddef>

namespace smoothmix::detail {

// sum_i exp(q (y - mu_i)^2 + shift); compiled with vector math.
double sum_gauss(const double* mu, std::size_t n, double y, double q, double shift);

}  // namespace smoothmix::detail
