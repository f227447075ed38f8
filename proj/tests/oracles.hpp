#pragma once

// Test-side oracles, implemented independently of the library internals:
// central finite differences for gradients and small statistics helpers.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "dipnet/tensor.hpp"

namespace oracles {

/// Central-difference gradient of a scalar-valued function with respect to
/// every element of `param`, evaluated by mutating the tensor in place.
inline dipnet::Tensor fd_gradient(dipnet::Tensor& param,
                                  const std::function<double()>& eval,
                                  double h = 1e-5)
{
    dipnet::Tensor grad(param.shape(), 0.0);
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + h;
        const double up = eval();
        param[i] = saved - h;
        const double down = eval();
        param[i] = saved;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

/// max_i |a_i - b_i| / max(1, |a_i|, |b_i|)
inline double max_rel_diff(const dipnet::Tensor& a, const dipnet::Tensor& b)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
        worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
    }
    return worst;
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

/// Sample mean and its standard error.
inline MeanSe mean_se(const std::vector<double>& xs)
{
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    const double var = ss / static_cast<double>(xs.size() - 1);
    return {m, std::sqrt(var / static_cast<double>(xs.size()))};
}

} // namespace oracles
