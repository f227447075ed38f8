#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dipnet/autodiff.hpp"
#include "dipnet/rng.hpp"

#include "oracles.hpp"

using namespace dipnet;

TEST_CASE("square backward gives 2x", "[autodiff]")
{
    Value x = make_leaf(Tensor::scalar(3.0));
    Value y = square(x);
    backward(y);
    REQUIRE(y->data[0] == 9.0);
    REQUIRE(x->grad[0] == 6.0);
}

TEST_CASE("matmul by identity is identity and sum-grad is ones", "[autodiff]")
{
    Tensor I({3, 3});
    for (std::size_t i = 0; i < 3; ++i) I.at(i, i) = 1.0;
    Value id = make_const(I);
    Value m = make_leaf(Tensor::matrix(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
    Value prod = matmul(id, m);
    REQUIRE(prod->data == m->data);
    backward(sum(prod));
    for (std::size_t i = 0; i < 9; ++i) REQUIRE(m->grad[i] == 1.0);
}

TEST_CASE("sum backward is all-ones, product backward swaps operands", "[autodiff]")
{
    Value x = make_leaf(Tensor::from_vector({1, 2, 3, 4, 5}));
    backward(sum(x));
    for (std::size_t i = 0; i < 5; ++i) REQUIRE(x->grad[i] == 1.0);

    Value a = make_leaf(Tensor::scalar(2.0));
    Value b = make_leaf(Tensor::scalar(3.0));
    backward(mul(a, b));
    REQUIRE(a->grad[0] == 3.0);
    REQUIRE(b->grad[0] == 2.0);
}

TEST_CASE("backward rejects non-scalar roots, ops reject shape mismatches", "[autodiff]")
{
    Value v = make_leaf(Tensor::from_vector({1, 2}));
    REQUIRE_THROWS_AS(backward(v), std::invalid_argument);

    Value w = make_leaf(Tensor::from_vector({1, 2, 3}));
    REQUIRE_THROWS_WITH(add(v, w), Catch::Matchers::ContainsSubstring("(2)") &&
                                       Catch::Matchers::ContainsSubstring("(3)"));
    Value m = make_leaf(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    REQUIRE_THROWS_AS(matmul(m, w), std::invalid_argument);
}

TEST_CASE("reparameterized noise gradient reaches the log-scale", "[autodiff]")
{
    // u = v + exp(s/2) * eps at eps=1, s=0: du/ds = 0.5
    Value v = make_leaf(Tensor::scalar(0.3));
    Value s = make_leaf(Tensor::scalar(0.0));
    Value eps = make_const(Tensor::scalar(1.0));
    Value u = add(v, mul(exp(scale(s, 0.5)), eps));
    backward(u);
    REQUIRE(s->grad[0] == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(v->grad[0] == 1.0);

    // confirm against finite differences
    Tensor sv = Tensor::scalar(0.0);
    auto eval = [&] { return 0.3 + std::exp(0.5 * sv[0]) * 1.0; };
    Tensor fd = oracles::fd_gradient(sv, eval);
    REQUIRE(s->grad[0] == Catch::Approx(fd[0]).epsilon(1e-8));
}

TEST_CASE("diamond graphs accumulate adjoints once per path", "[autodiff]")
{
    // y = x*x + x  ->  dy/dx = 2x + 1
    Value x = make_leaf(Tensor::scalar(1.5));
    Value y = add(mul(x, x), x);
    backward(y);
    REQUIRE(x->grad[0] == Catch::Approx(4.0).margin(1e-15));
}

TEST_CASE("zero_grad clears every adjoint in the graph", "[autodiff]")
{
    Value x = make_leaf(Tensor::from_vector({1, 2, 3}));
    Value y = sum(square(x));
    backward(y);
    REQUIRE(x->grad[0] != 0.0);
    zero_grad(y);
    for (std::size_t i = 0; i < 3; ++i) REQUIRE(x->grad[i] == 0.0);
    REQUIRE(y->grad[0] == 0.0);
}

TEST_CASE("softmax cross entropy: uniform logits give ln C", "[autodiff]")
{
    Value logits = make_leaf(Tensor::matrix(1, 4, {0.7, 0.7, 0.7, 0.7}));
    Value loss = softmax_cross_entropy(logits, {2});
    REQUIRE(loss->data[0] == Catch::Approx(std::log(4.0)).epsilon(1e-14));
    backward(loss);
    // grad = p - onehot
    for (std::size_t j = 0; j < 4; ++j) {
        double expect = 0.25 - (j == 2 ? 1.0 : 0.0);
        REQUIRE(logits->grad[j] == Catch::Approx(expect).margin(1e-14));
    }
}

TEST_CASE("softmax cross entropy is shift-stable at extreme logits", "[autodiff]")
{
    Value logits = make_leaf(Tensor::matrix(1, 3, {1000.0, 999.0, 0.0}));
    Value loss = softmax_cross_entropy(logits, {0});
    REQUIRE(std::isfinite(loss->data[0]));
    REQUIRE(loss->data[0] == Catch::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
}

namespace {

// Two-layer tanh net evaluated with plain scalar code, used as the
// finite-difference target. Parameters are flattened into `theta`:
// W1 (h x d), b1 (h), W2 (1 x h), b2 (1).
double tiny_net_loss(const Tensor& theta, const Tensor& x, double y, std::size_t d, std::size_t h)
{
    std::vector<double> hidden(h);
    std::size_t off = 0;
    for (std::size_t i = 0; i < h; ++i) {
        double acc = theta[h * d + i]; // b1 after W1 block
        for (std::size_t j = 0; j < d; ++j) acc += theta[i * d + j] * x[j];
        hidden[i] = std::tanh(acc);
    }
    off = h * d + h;
    double out = theta[off + h];
    for (std::size_t i = 0; i < h; ++i) out += theta[off + i] * hidden[i];
    return (out - y) * (out - y);
}

} // namespace

TEST_CASE("two-layer net gradients match finite differences", "[autodiff]")
{
    const std::size_t d = 3, h = 4;
    dipnet::RngStream rng(2024);
    Tensor theta({h * d + h + h + 1});
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = rng.uniform_in(-2.0, 2.0);
    Tensor xv = Tensor::from_vector({0.4, -1.1, 0.9});
    const double y = 0.25;

    // graph version
    Value w1 = make_leaf(Tensor({h, d}));
    Value b1 = make_leaf(Tensor({h}));
    Value w2 = make_leaf(Tensor({1, h}));
    Value b2 = make_leaf(Tensor({1}));
    std::size_t off = 0;
    for (std::size_t i = 0; i < h * d; ++i) w1->data[i] = theta[off++];
    for (std::size_t i = 0; i < h; ++i) b1->data[i] = theta[off++];
    for (std::size_t i = 0; i < h; ++i) w2->data[i] = theta[off++];
    b2->data[0] = theta[off++];

    Value x = make_const(Tensor::matrix(1, d, {xv[0], xv[1], xv[2]}));
    Value hid = tanh(affine(x, w1, b1));
    Value out = affine(hid, w2, b2);
    Value loss = square(sub(out, make_const(Tensor::matrix(1, 1, {y}))));
    Value root = sum(loss);
    backward(root);

    REQUIRE(root->data[0] == Catch::Approx(tiny_net_loss(theta, xv, y, d, h)).epsilon(1e-12));

    Tensor fd = oracles::fd_gradient(theta, [&] { return tiny_net_loss(theta, xv, y, d, h); });
    Tensor analytic(theta.shape());
    off = 0;
    for (std::size_t i = 0; i < h * d; ++i) analytic[off++] = w1->grad[i];
    for (std::size_t i = 0; i < h; ++i) analytic[off++] = b1->grad[i];
    for (std::size_t i = 0; i < h; ++i) analytic[off++] = w2->grad[i];
    analytic[off++] = b2->grad[0];
    REQUIRE(oracles::max_rel_diff(analytic, fd) < 1e-4);
}

TEST_CASE("input gradients match the linear-model closed form", "[autodiff]")
{
    // f = theta^T x, L = (f-y)^2, theta=(1,2), x=(0,0), y=1 -> dL/dx = 2(f-y)theta = (-2,-4)
    Value theta = make_const(Tensor::matrix(1, 2, {1.0, 2.0}));
    Value bias = make_const(Tensor({1}));
    Value x = make_leaf(Tensor::matrix(1, 2, {0.0, 0.0}));
    Value f = affine(x, theta, bias);
    Value loss = sum(square(sub(f, make_const(Tensor::matrix(1, 1, {1.0})))));
    backward(loss);
    REQUIRE(x->grad[0] == Catch::Approx(-2.0).margin(1e-15));
    REQUIRE(x->grad[1] == Catch::Approx(-4.0).margin(1e-15));
}

TEST_CASE("backward linearity in the root", "[autodiff]")
{
    dipnet::RngStream rng(9);
    Tensor xv({4});
    for (std::size_t i = 0; i < 4; ++i) xv[i] = rng.uniform_in(-2.0, 2.0);

    auto grads_of = [&](double a, double b) {
        Value x = make_leaf(xv);
        Value f = sum(square(x));
        Value g = sum(mul(x, x)); // same value, separate graph path
        Value combo = add(scale(f, a), scale(g, b));
        backward(combo);
        return x->grad;
    };
    Tensor g10 = grads_of(1.0, 0.0);
    Tensor g01 = grads_of(0.0, 1.0);
    Tensor g23 = grads_of(2.0, 3.0);
    for (std::size_t i = 0; i < 4; ++i)
        REQUIRE(g23[i] == Catch::Approx(2.0 * g10[i] + 3.0 * g01[i]).margin(1e-12));
}

TEST_CASE("elementwise op gradients match finite differences", "[autodiff]")
{
    dipnet::RngStream rng(31);
    Tensor xv({6});
    for (std::size_t i = 0; i < 6; ++i) xv[i] = rng.uniform_in(0.1, 2.0); // >0 for log

    struct Case {
        const char* name;
        std::function<Value(const Value&)> op;
        std::function<double(double)> f;
    };
    const std::vector<Case> cases = {
        {"tanh", [](const Value& v) { return tanh(v); }, [](double t) { return std::tanh(t); }},
        {"exp", [](const Value& v) { return exp(v); }, [](double t) { return std::exp(t); }},
        {"log", [](const Value& v) { return log(v); }, [](double t) { return std::log(t); }},
        {"relu", [](const Value& v) { return relu(v); }, [](double t) { return t > 0 ? t : 0.0; }},
        {"square", [](const Value& v) { return square(v); }, [](double t) { return t * t; }},
    };
    for (const auto& c : cases) {
        INFO(c.name);
        Value x = make_leaf(xv);
        backward(mean(c.op(x)));
        Tensor fd = oracles::fd_gradient(xv, [&] {
            double acc = 0.0;
            for (std::size_t i = 0; i < 6; ++i) acc += c.f(xv[i]);
            return acc / 6.0;
        });
        Tensor analytic = x->grad;
        REQUIRE(oracles::max_rel_diff(analytic, fd) < 1e-4);
    }
}

TEST_CASE("repeated forward+backward with the same seed is bit-identical", "[autodiff]")
{
    auto run = [] {
        dipnet::RngStream rng(77);
        Value w = make_leaf(rng.normal_tensor({3, 3}));
        Value x = make_const(rng.normal_tensor({2, 3}));
        Value y = sum(square(tanh(matmul(x, w))));
        backward(y);
        return std::make_pair(y->data[0], w->grad);
    };
    auto [v1, g1] = run();
    auto [v2, g2] = run();
    REQUIRE(v1 == v2);
    REQUIRE(g1 == g2);
}
