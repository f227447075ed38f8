#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace dipnet {

/// Gauss-Legendre nodes/weights on [-1, 1], found by Newton iteration on the
/// Legendre recurrence.
struct GaussLegendre {
    std::vector<double> nodes, weights;

    explicit GaussLegendre(std::size_t n)
    {
        if (n == 0) throw std::invalid_argument("GaussLegendre: need n >= 1");
        nodes.resize(n);
        weights.resize(n);
        const std::size_t half = (n + 1) / 2;
        for (std::size_t i = 0; i < half; ++i) {
            double z = std::cos(M_PI * (double(i) + 0.75) / (double(n) + 0.5));
            double pp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p0 = 1.0, p1 = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * double(j) + 1.0) * z * p1 - double(j) * p2) / (double(j) + 1.0);
                }
                // p0 = P_n(z); derivative from the standard identity
                pp = double(n) * (z * p0 - p1) / (z * z - 1.0);
                const double dz = p0 / pp;
                z -= dz;
                if (std::fabs(dz) < 1e-15) break;
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[n - 1 - i] = weights[i];
        }
    }
};

/// Single-panel quadrature of f over [a, b].
inline double integrate_panel(const std::function<double(double)>& f, double a, double b,
                              const GaussLegendre& rule)
{
    const double mid = 0.5 * (a + b), halfw = 0.5 * (b - a);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        acc += rule.weights[i] * f(mid + halfw * rule.nodes[i]);
    return acc * halfw;
}

inline double integrate_composite(const std::function<double(double)>& f, double a, double b,
                                  std::size_t panels, const GaussLegendre& rule)
{
    double acc = 0.0;
    const double w = (b - a) / double(panels);
    for (std::size_t p = 0; p < panels; ++p)
        acc += integrate_panel(f, a + double(p) * w, a + double(p + 1) * w, rule);
    return acc;
}

struct QuadratureResult {
    double value = 0.0;
    bool converged = false;
    std::vector<double> refinements; // successive estimates as panels double
};

/// Composite Gauss-Legendre with panel doubling until two successive
/// estimates agree within tol.
inline QuadratureResult integrate_to_tolerance(const std::function<double(double)>& f, double a,
                                               double b, double tol = 1e-8,
                                               std::size_t points_per_panel = 16,
                                               std::size_t max_doublings = 18)
{
    static thread_local std::vector<GaussLegendre> cache; // rules are pure, reuse them
    GaussLegendre* rule = nullptr;
    for (GaussLegendre& r : cache)
        if (r.nodes.size() == points_per_panel) rule = &r;
    if (!rule) {
        cache.emplace_back(points_per_panel);
        rule = &cache.back();
    }

    QuadratureResult res;
    std::size_t panels = 1;
    double prev = integrate_composite(f, a, b, panels, *rule);
    res.refinements.push_back(prev);
    for (std::size_t i = 0; i < max_doublings; ++i) {
        panels *= 2;
        const double cur = integrate_composite(f, a, b, panels, *rule);
        res.refinements.push_back(cur);
        if (std::fabs(cur - prev) < tol) {
            res.value = cur;
            res.converged = true;
            return res;
        }
        prev = cur;
    }
    res.value = prev;
    return res;
}

} // namespace dipnet
