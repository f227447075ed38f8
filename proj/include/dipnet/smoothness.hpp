#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "network.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace dipnet {

/// x (length d) -> gradient of a scalar function at x (length d).
using GradientFn = std::function<Tensor(const Tensor&)>;

/// Input gradient of output coordinate r of the deterministic (mean) network.
inline GradientFn model_gradient_fn(const DipNet& model, std::size_t r)
{
    if (r >= model.output_dim())
        throw std::invalid_argument("model_gradient_fn: output coordinate " + std::to_string(r) +
                                    " out of range");
    return [&model, r](const Tensor& x) {
        Tensor row({1, x.size()});
        for (std::size_t i = 0; i < x.size(); ++i) row[i] = x[i];
        Value leaf = make_leaf(std::move(row));
        Value out = model.forward_graph(leaf, ForwardMode::deterministic());
        backward(pick(out, r));
        Tensor g({x.size()});
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = leaf->grad[i];
        return g;
    };
}

inline double l2_norm(const Tensor& v)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) acc += v[i] * v[i];
    return std::sqrt(acc);
}

/// Max gradient norm over a probe set: the computable stand-in for the
/// worst-case input sensitivity of one output coordinate.
inline double empirical_lipschitz(const GradientFn& grad, const Tensor& probes)
{
    if (probes.rows() == 0) throw std::invalid_argument("empirical_lipschitz: empty probe set");
    double best = 0.0;
    const std::size_t d = probes.cols();
    for (std::size_t i = 0; i < probes.rows(); ++i) {
        Tensor x({d});
        for (std::size_t j = 0; j < d; ++j) x[j] = probes.at(i, j);
        best = std::max(best, l2_norm(grad(x)));
    }
    return best;
}

/// All output coordinates of a model: per-coordinate max gradient norms plus
/// the overall max.
struct LipschitzReport {
    std::vector<double> per_output;
    double b_hat = 0.0;
};

inline LipschitzReport empirical_lipschitz(const DipNet& model, const Tensor& probes)
{
    LipschitzReport rep;
    for (std::size_t r = 0; r < model.output_dim(); ++r) {
        rep.per_output.push_back(empirical_lipschitz(model_gradient_fn(model, r), probes));
        rep.b_hat = std::max(rep.b_hat, rep.per_output.back());
    }
    return rep;
}

struct SmoothedNorm {
    double value = 0.0; // max over probes of ||mean gradient||
    double se = 0.0;    // delta-method standard error at the max probe
};

/// Norm of the Monte-Carlo averaged gradient of f(x + eta), maximized over
/// probes. `noise` draws one eta of the right length per call.
inline SmoothedNorm smoothed_gradient_norm(const GradientFn& grad, const Tensor& probes,
                                           const std::function<Tensor(RngStream&)>& noise,
                                           std::size_t n_mc, RngStream& rng)
{
    if (n_mc == 0) throw std::invalid_argument("smoothed_gradient_norm: need n_mc >= 1");
    if (probes.rows() == 0) throw std::invalid_argument("smoothed_gradient_norm: empty probe set");
    SmoothedNorm out;
    const std::size_t d = probes.cols();
    for (std::size_t i = 0; i < probes.rows(); ++i) {
        RngStream probe_rng = rng.derive(0x5e, i);
        Tensor mean({d}), m2({d});
        for (std::size_t t = 0; t < n_mc; ++t) {
            Tensor eta = noise(probe_rng);
            Tensor x({d});
            for (std::size_t j = 0; j < d; ++j) x[j] = probes.at(i, j) + eta[j];
            Tensor g = grad(x);
            // Welford accumulation per coordinate
            for (std::size_t j = 0; j < d; ++j) {
                const double delta = g[j] - mean[j];
                mean[j] += delta / double(t + 1);
                m2[j] += delta * (g[j] - mean[j]);
            }
        }
        const double norm = l2_norm(mean);
        if (norm >= out.value) {
            out.value = norm;
            // delta method: se(||mean||) ~ sqrt(u' Cov u) with u the unit mean
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double u = norm > 0.0 ? mean[j] / norm : 0.0;
                const double var = n_mc > 1 ? m2[j] / double(n_mc - 1) : 0.0;
                acc += u * u * var;
            }
            out.se = std::sqrt(acc / double(n_mc));
        }
    }
    return out;
}

struct HessianNormEstimate {
    double s_hat = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
};

/// Power iteration on Hessian-vector products, each taken as a central
/// difference of gradients (step h). Returns the dominant |eigenvalue|; a
/// vanishing product (linear function) reports 0 and converged.
inline HessianNormEstimate hessian_spectral_norm(const GradientFn& grad, const Tensor& x,
                                                 std::size_t iters, double h = 1e-4,
                                                 double tol = 1e-6)
{
    const std::size_t d = x.size();
    HessianNormEstimate est;
    RngStream rng(0xbeef); // fixed start vector; result is the dominant pair anyway
    Tensor v({d});
    for (std::size_t j = 0; j < d; ++j) v[j] = rng.normal();
    double vn = l2_norm(v);
    for (std::size_t j = 0; j < d; ++j) v[j] /= vn;

    double prev = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        Tensor xp = x, xm = x;
        for (std::size_t j = 0; j < d; ++j) {
            xp[j] += h * v[j];
            xm[j] -= h * v[j];
        }
        Tensor gp = grad(xp), gm = grad(xm);
        Tensor hv({d});
        for (std::size_t j = 0; j < d; ++j) hv[j] = (gp[j] - gm[j]) / (2.0 * h);

        double rayleigh = 0.0;
        for (std::size_t j = 0; j < d; ++j) rayleigh += v[j] * hv[j];
        const double cur = std::fabs(rayleigh);
        est.s_hat = cur;
        est.iterations = it + 1;

        const double hv_norm = l2_norm(hv);
        if (hv_norm < 1e-14) {
            est.s_hat = 0.0;
            est.converged = true;
            return est;
        }
        if (it > 0 && std::fabs(cur - prev) < tol * std::max(1.0, cur)) {
            est.converged = true;
            return est;
        }
        prev = cur;
        for (std::size_t j = 0; j < d; ++j) v[j] = hv[j] / hv_norm;
    }
    return est;
}

/// 1-D piecewise-C2 spike profile: equals c*amp outside a support interval of
/// `width`, rises to amp on a central plateau, with quintic-smoothstep
/// transitions. Models a derivative (or second derivative) that is large only
/// on a small set.
struct SpikeProfile {
    double c = 0.5;
    double amp = 1.0;
    double width = 0.09;        // support of the spike (the set above c*amp)
    double plateau_frac = 0.5;  // fraction of the support at full amplitude

    double operator()(double x) const
    {
        const double ax = std::fabs(x);
        const double half = 0.5 * width;
        if (ax >= half) return c * amp;
        const double plateau_half = 0.5 * plateau_frac * width;
        if (ax <= plateau_half) return amp;
        const double u = (half - ax) / (half - plateau_half); // 0 at edge, 1 at plateau
        const double s = u * u * u * (u * (6.0 * u - 15.0) + 10.0);
        return c * amp + (1.0 - c) * amp * s;
    }

    /// Lebesgue measure of { x : profile(x) > c*amp }.
    double spike_measure() const { return width; }
};

/// Outcome of one smoothing-bound verification.
struct TheoremCheck {
    double c = 0.0, epsilon = 0.0, C = 0.0, zeta = 0.0;
    double base = 0.0;        // the supplied max norm (b or s)
    double bound = 0.0;       // (c + epsilon) * base
    double proof_bound = 0.0; // c*base + base/zeta, what the construction attains
    double measured = 0.0;    // max_x |E_eta profile(x + eta)|
    double spike_measure = 0.0;
    bool pass = false;
    bool quadrature_converged = false;
    std::vector<double> refinements; // quadrature trace at the maximizing x
};

namespace detail {

/// Shared machinery: build the spike profile with sup = base on a set of
/// measure < C, smooth with eta ~ Uniform[-zeta*C/2, zeta*C/2], and take the
/// max of the smoothed value over a symmetric grid of window positions.
inline TheoremCheck verify_smoothing_bound(double c, double epsilon, double C, double base,
                                           double zeta)
{
    if (c <= 0.0 || c >= 1.0) throw std::invalid_argument("verify: c must lie in (0, 1)");
    if (epsilon <= 0.0) throw std::invalid_argument("verify: epsilon must be positive");
    if (C <= 0.0 || base <= 0.0) throw std::invalid_argument("verify: C and the norm must be positive");
    if (zeta <= 0.0) zeta = std::ceil(1.0 / epsilon) + 1.0; // the construction wants zeta > 1/eps

    TheoremCheck chk;
    chk.c = c;
    chk.epsilon = epsilon;
    chk.C = C;
    chk.zeta = zeta;
    chk.base = base;
    chk.bound = (c + epsilon) * base;
    chk.proof_bound = c * base + base / zeta;

    SpikeProfile profile{c, base, 0.9 * C, 0.5};
    chk.spike_measure = profile.spike_measure();

    const double window = zeta * C; // uniform noise support length
    auto smoothed_at = [&](double x) {
        return integrate_to_tolerance([&](double u) { return profile(u); }, x - 0.5 * window,
                                      x + 0.5 * window, 1e-8);
    };

    // beyond |x| = (window + width)/2 the window misses the spike entirely
    const double scan = 0.5 * (window + profile.width);
    const std::size_t grid = 241;
    double best_x = 0.0;
    for (std::size_t i = 0; i < grid; ++i) {
        const double x = -scan + 2.0 * scan * double(i) / double(grid - 1);
        const double val = smoothed_at(x).value / window;
        if (val > chk.measured) {
            chk.measured = val;
            best_x = x;
        }
    }
    QuadratureResult at_best = smoothed_at(best_x);
    chk.measured = at_best.value / window;
    chk.quadrature_converged = at_best.converged;
    chk.refinements = at_best.refinements;
    chk.pass = chk.measured < chk.bound && chk.quadrature_converged;
    return chk;
}

} // namespace detail

/// First-order check: a derivative profile with max |h'| = b concentrated on
/// a set of measure < C is smoothed by zeta*C-wide uniform noise below
/// (c + epsilon) * b. Pass zeta <= 0 to use ceil(1/epsilon) + 1.
inline TheoremCheck verify_gradient_smoothing_bound(double c, double epsilon, double C, double b,
                                                    double zeta = 0.0)
{
    return detail::verify_smoothing_bound(c, epsilon, C, b, zeta);
}

/// Second-order analogue: the same construction read as a curvature profile
/// with max |h''| = s; the smoothed curvature obeys the (c + epsilon) * s
/// bound.
inline TheoremCheck verify_hessian_smoothing_bound(double c, double epsilon, double C, double s,
                                                   double zeta = 0.0)
{
    return detail::verify_smoothing_bound(c, epsilon, C, s, zeta);
}

/// Report emitted by the probe subcommand.
struct SmoothnessReport {
    double b_hat = 0.0;
    double smoothed_b_hat = 0.0;
    double smoothed_se = 0.0;
    double s_hat = 0.0;
    bool s_hat_valid = false; // false for ReLU nets (not twice differentiable)
    bool s_hat_converged = false;
    std::size_t probe_count = 0;
    std::string eta_distribution;
};

/// Probe a trained model: max input-gradient norm, its noise-smoothed
/// counterpart under Gaussian eta, and (for smooth activations) a Hessian
/// spectral-norm estimate, all maximized over the probe set and output
/// coordinates.
inline SmoothnessReport build_smoothness_report(const DipNet& model, const Tensor& probes,
                                                double eta_sigma, std::size_t n_mc,
                                                std::size_t hessian_iters, RngStream& rng)
{
    SmoothnessReport rep;
    rep.probe_count = probes.rows();
    rep.eta_distribution = "gaussian(sigma=" + std::to_string(eta_sigma) + ")";

    bool smooth_model = true;
    for (const auto& layer : model.layers())
        smooth_model = smooth_model && layer.act != Activation::Relu;

    const std::size_t d = probes.cols();
    auto noise = [eta_sigma, d](RngStream& r) {
        Tensor eta({d});
        for (std::size_t j = 0; j < d; ++j) eta[j] = eta_sigma * r.normal();
        return eta;
    };

    for (std::size_t r = 0; r < model.output_dim(); ++r) {
        GradientFn grad = model_gradient_fn(model, r);
        rep.b_hat = std::max(rep.b_hat, empirical_lipschitz(grad, probes));
        RngStream mc_rng = rng.derive(0x3c, r);
        SmoothedNorm sn = smoothed_gradient_norm(grad, probes, noise, n_mc, mc_rng);
        if (sn.value > rep.smoothed_b_hat) {
            rep.smoothed_b_hat = sn.value;
            rep.smoothed_se = sn.se;
        }
        if (smooth_model) {
            rep.s_hat_valid = true;
            for (std::size_t i = 0; i < probes.rows(); ++i) {
                Tensor x({d});
                for (std::size_t j = 0; j < d; ++j) x[j] = probes.at(i, j);
                HessianNormEstimate est = hessian_spectral_norm(grad, x, hessian_iters);
                if (est.s_hat > rep.s_hat) {
                    rep.s_hat = est.s_hat;
                    rep.s_hat_converged = est.converged;
                }
            }
        }
    }
    return rep;
}

} // namespace dipnet
