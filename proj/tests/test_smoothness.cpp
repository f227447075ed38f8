#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dipnet/quadrature.hpp"
#include "dipnet/smoothness.hpp"
#include "oracles.hpp"

using namespace dipnet;

namespace {

/// f(x) = tanh(x) as a DipNet: one tanh hidden unit feeding an identity
/// output, both with unit weight and zero bias.
DipNet scalar_tanh_model()
{
    RngStream rng(1);
    DipNet net({1, 1, 1}, Activation::Tanh, Task::Regression, rng);
    net.layers()[0].w->data[0] = 1.0;
    net.layers()[0].b->data[0] = 0.0;
    net.layers()[1].w->data[0] = 1.0;
    net.layers()[1].b->data[0] = 0.0;
    return net;
}

Tensor probe_grid(double lo, double hi, std::size_t n)
{
    Tensor probes({n, 1});
    for (std::size_t i = 0; i < n; ++i)
        probes[i] = lo + (hi - lo) * double(i) / double(n - 1);
    return probes;
}

} // namespace

TEST_CASE("a linear map has gradient norm equal to its weight norm", "[smoothness]")
{
    RngStream rng(2);
    DipNet net({2, 1}, Activation::Identity, Task::Regression, rng);
    net.layers()[0].w->data[0] = 3.0;
    net.layers()[0].w->data[1] = 4.0;
    net.layers()[0].b->data[0] = -1.0;

    Tensor probes = Tensor::matrix(3, 2, {0, 0, 5, -5, 100, 3});
    LipschitzReport rep = empirical_lipschitz(net, probes);
    CHECK(rep.b_hat == Catch::Approx(5.0).margin(1e-12));
    REQUIRE(rep.per_output.size() == 1);
}

TEST_CASE("tanh gradient peaks at one when probed at the origin", "[smoothness]")
{
    DipNet net = scalar_tanh_model();
    Tensor probes = probe_grid(-2.0, 2.0, 41); // includes x = 0
    LipschitzReport rep = empirical_lipschitz(net, probes);
    CHECK(rep.b_hat == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("model input gradients agree with finite differences", "[smoothness]")
{
    RngStream rng(7);
    DipNet net({3, 5, 2}, Activation::Tanh, Task::Regression, rng);
    Tensor x = Tensor::from_vector({0.3, -0.8, 1.1});
    for (std::size_t r = 0; r < 2; ++r) {
        GradientFn grad = model_gradient_fn(net, r);
        Tensor analytic = grad(x);
        Tensor fd = oracles::fd_gradient(x, [&] {
            Tensor row({1, 3});
            for (std::size_t j = 0; j < 3; ++j) row[j] = x[j];
            return net.forward(row)[r];
        });
        CHECK(oracles::max_rel_diff(analytic, fd) < 1e-4);
    }
    CHECK_THROWS_AS(model_gradient_fn(net, 5), std::invalid_argument);
}

TEST_CASE("zero smoothing noise reproduces the empirical gradient norm", "[smoothness]")
{
    DipNet net = scalar_tanh_model();
    GradientFn grad = model_gradient_fn(net, 0);
    Tensor probes = probe_grid(-1.0, 1.0, 5);

    auto no_noise = [](RngStream&) { return Tensor({std::size_t{1}}); };
    RngStream rng(3);
    SmoothedNorm sn = smoothed_gradient_norm(grad, probes, no_noise, 8, rng);
    CHECK(sn.value == Catch::Approx(empirical_lipschitz(grad, probes)).margin(1e-12));
    CHECK(sn.se == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("Monte-Carlo smoothed gradient matches direct quadrature", "[smoothness]")
{
    // E[g(x0 + eta)] for g = tanh', x0 = 0.5, eta ~ N(0, 0.3^2), computed by
    // integrating against the Gaussian density as an independent oracle.
    DipNet net = scalar_tanh_model();
    GradientFn grad = model_gradient_fn(net, 0);
    const double x0 = 0.5, sigma = 0.3;

    Tensor probes({std::size_t{1}, std::size_t{1}});
    probes[0] = x0;
    auto noise = [sigma](RngStream& r) {
        Tensor eta({std::size_t{1}});
        eta[0] = sigma * r.normal();
        return eta;
    };
    RngStream rng(99);
    SmoothedNorm sn = smoothed_gradient_norm(grad, probes, noise, 4000, rng);

    QuadratureResult q = integrate_to_tolerance(
        [&](double t) {
            const double th = std::tanh(x0 + t);
            const double pdf = std::exp(-t * t / (2.0 * sigma * sigma)) /
                               (sigma * std::sqrt(2.0 * M_PI));
            return (1.0 - th * th) * pdf;
        },
        -8.0 * sigma, 8.0 * sigma);
    REQUIRE(q.converged);
    CHECK(std::fabs(sn.value - q.value) < 4.0 * sn.se + 1e-12);
}

TEST_CASE("power iteration recovers the dominant curvature", "[smoothness]")
{
    // quadratic f = x' diag(3, 1) x / 2: gradient Ax, Hessian diag(3, 1)
    GradientFn grad = [](const Tensor& x) {
        Tensor g({std::size_t{2}});
        g[0] = 3.0 * x[0];
        g[1] = 1.0 * x[1];
        return g;
    };
    Tensor x0 = Tensor::from_vector({0.2, -0.4});
    HessianNormEstimate est = hessian_spectral_norm(grad, x0, 100);
    CHECK(est.converged);
    CHECK(est.s_hat == Catch::Approx(3.0).margin(1e-3));
}

TEST_CASE("a linear function has zero curvature", "[smoothness]")
{
    GradientFn grad = [](const Tensor& x) {
        Tensor g({x.size()});
        g.fill(2.5); // constant gradient
        return g;
    };
    Tensor x0 = Tensor::from_vector({1.0, 2.0, 3.0});
    HessianNormEstimate est = hessian_spectral_norm(grad, x0, 50);
    CHECK(est.converged);
    CHECK(est.s_hat == Catch::Approx(0.0).margin(1e-6));
}

TEST_CASE("tanh curvature maxes out at 4/(3 sqrt 3)", "[smoothness]")
{
    // |tanh''| attains 4/(3*sqrt(3)) at atanh(1/sqrt(3)); scan a probe grid
    // and keep the largest power-iteration estimate.
    DipNet net = scalar_tanh_model();
    GradientFn grad = model_gradient_fn(net, 0);
    const double want = 4.0 / (3.0 * std::sqrt(3.0));

    double best = 0.0;
    for (double x = -1.5; x <= 1.5; x += 0.05) {
        Tensor x0 = Tensor::from_vector({x});
        HessianNormEstimate est = hessian_spectral_norm(grad, x0, 60);
        best = std::max(best, est.s_hat);
    }
    CHECK(best == Catch::Approx(want).margin(1e-2));
}

TEST_CASE("default smoothing-bound verification passes", "[smoothness]")
{
    TheoremCheck chk = verify_gradient_smoothing_bound(0.5, 0.2, 0.1, 1.0);
    CHECK(chk.zeta == 6.0);
    CHECK(chk.quadrature_converged);
    CHECK(chk.pass);
    CHECK(chk.measured < 0.7);
    CHECK(chk.measured <= chk.proof_bound + 1e-6);

    // closed form for this construction: the window covers the whole spike at
    // the center, so the max equals c*b + (1-c)*b * 0.75*width / window
    const double width = 0.9 * 0.1, window = 6.0 * 0.1;
    const double expect = 0.5 + 0.5 * 0.75 * width / window;
    CHECK(chk.measured == Catch::Approx(expect).margin(1e-6));

    TheoremCheck h = verify_hessian_smoothing_bound(0.5, 0.2, 0.1, 2.0);
    CHECK(h.pass);
    CHECK(h.measured == Catch::Approx(2.0 * expect).margin(2e-6));
}

TEST_CASE("too little smoothing breaks the bound", "[smoothness]")
{
    TheoremCheck chk = verify_gradient_smoothing_bound(0.5, 0.2, 0.1, 1.0, 1.0);
    CHECK(chk.quadrature_converged);
    CHECK_FALSE(chk.pass);
    CHECK(chk.measured > 0.7);
    // with zeta = 1 the closed form gives 0.5 + 0.5 * 0.75 * 0.9 = 0.8375
    CHECK(chk.measured == Catch::Approx(0.8375).margin(1e-6));
}

TEST_CASE("more smoothing monotonically lowers the worst case", "[smoothness]")
{
    const double m1 = verify_gradient_smoothing_bound(0.5, 0.2, 0.1, 1.0, 1.0).measured;
    const double m3 = verify_gradient_smoothing_bound(0.5, 0.2, 0.1, 1.0, 3.0).measured;
    const double m6 = verify_gradient_smoothing_bound(0.5, 0.2, 0.1, 1.0, 6.0).measured;
    CHECK(m6 < m3);
    CHECK(m3 < m1);
    // smoothing can never exceed the raw sup of the profile
    CHECK(m1 <= 1.0 + 1e-9);
}

TEST_CASE("generous slack always passes", "[smoothness]")
{
    TheoremCheck chk = verify_gradient_smoothing_bound(0.5, 0.6, 0.1, 1.0);
    CHECK(chk.pass); // bound is 1.1 > any smoothed value of a profile with sup 1
}

TEST_CASE("verification rejects out-of-range parameters", "[smoothness]")
{
    CHECK_THROWS_AS(verify_gradient_smoothing_bound(0.0, 0.2, 0.1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(verify_gradient_smoothing_bound(1.0, 0.2, 0.1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(verify_gradient_smoothing_bound(0.5, 0.0, 0.1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(verify_gradient_smoothing_bound(0.5, 0.2, -1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(verify_gradient_smoothing_bound(0.5, 0.2, 0.1, 0.0), std::invalid_argument);
}

TEST_CASE("probe reports respect activation smoothness", "[smoothness]")
{
    Tensor probes = Tensor::matrix(4, 2, {0, 0, 1, -1, 0.5, 0.5, -2, 3});

    RngStream rng1(5), init1(11);
    DipNet relu_net({2, 6, 1}, Activation::Relu, Task::Regression, init1);
    SmoothnessReport relu_rep = build_smoothness_report(relu_net, probes, 0.1, 64, 30, rng1);
    CHECK_FALSE(relu_rep.s_hat_valid);
    CHECK(relu_rep.b_hat > 0.0);
    CHECK(relu_rep.probe_count == 4);
    CHECK(relu_rep.eta_distribution.rfind("gaussian", 0) == 0);

    RngStream rng2(5), init2(11);
    DipNet tanh_net({2, 6, 1}, Activation::Tanh, Task::Regression, init2);
    SmoothnessReport tanh_rep = build_smoothness_report(tanh_net, probes, 0.1, 64, 30, rng2);
    CHECK(tanh_rep.s_hat_valid);
    CHECK(tanh_rep.s_hat >= 0.0);
    CHECK(tanh_rep.smoothed_b_hat > 0.0);
}
