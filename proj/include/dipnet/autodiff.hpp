#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace dipnet {

struct Node;
using Value = std::shared_ptr<Node>;

/// One node of the dynamically built computation graph. `data` holds the
/// forward value, `grad` the adjoint of the same shape. `backprop` scatters
/// this node's adjoint into its parents and is invoked exactly once per
/// backward pass, in reverse topological order.
struct Node {
    Tensor data;
    Tensor grad;
    std::vector<Value> parents;
    std::function<void(Node&)> backprop;
    const char* op = "leaf";
    bool requires_grad = false;

    Node(Tensor d, bool rg) : data(std::move(d)), grad(data.shape(), 0.0), requires_grad(rg) {}
};

/// Differentiable leaf (parameter or input).
inline Value make_leaf(Tensor t) { return std::make_shared<Node>(std::move(t), true); }

/// Non-differentiable graph input (data, noise draws, targets).
inline Value make_const(Tensor t) { return std::make_shared<Node>(std::move(t), false); }

namespace detail {

[[noreturn]] inline void shape_error(const char* op, const Tensor& a, const Tensor& b)
{
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                                " and " + b.shape_str());
}

inline Value attach(const char* op, Tensor out, std::vector<Value> parents,
                    std::function<void(Node&)> backprop)
{
    bool rg = false;
    for (const Value& p : parents) rg = rg || p->requires_grad;
    auto n = std::make_shared<Node>(std::move(out), rg);
    n->parents = std::move(parents);
    if (rg) n->backprop = std::move(backprop);
    n->op = op;
    return n;
}

} // namespace detail

inline Value add(const Value& a, const Value& b)
{
    if (!a->data.same_shape(b->data)) detail::shape_error("add", a->data, b->data);
    Tensor out = a->data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->data[i];
    return detail::attach("add", std::move(out), {a, b}, [](Node& self) {
        for (int s = 0; s < 2; ++s) {
            Node& p = *self.parents[s];
            if (!p.requires_grad) continue;
            for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[i];
        }
    });
}

inline Value sub(const Value& a, const Value& b)
{
    if (!a->data.same_shape(b->data)) detail::shape_error("sub", a->data, b->data);
    Tensor out = a->data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->data[i];
    return detail::attach("sub", std::move(out), {a, b}, [](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        if (a.requires_grad)
            for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += self.grad[i];
        if (b.requires_grad)
            for (std::size_t i = 0; i < b.grad.size(); ++i) b.grad[i] -= self.grad[i];
    });
}

inline Value mul(const Value& a, const Value& b)
{
    if (!a->data.same_shape(b->data)) detail::shape_error("mul", a->data, b->data);
    Tensor out = a->data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->data[i];
    return detail::attach("mul", std::move(out), {a, b}, [](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        if (a.requires_grad)
            for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += self.grad[i] * b.data[i];
        if (b.requires_grad)
            for (std::size_t i = 0; i < b.grad.size(); ++i) b.grad[i] += self.grad[i] * a.data[i];
    });
}

inline Value scale(const Value& a, double c)
{
    Tensor out = a->data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return detail::attach("scale", std::move(out), {a}, [c](Node& self) {
        Node& a = *self.parents[0];
        if (!a.requires_grad) return;
        for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += self.grad[i] * c;
    });
}

/// matmul of (m,k)x(k,n) -> (m,n), or (m,k)x(k) -> (m).
inline Value matmul(const Value& a, const Value& b)
{
    const Tensor& A = a->data;
    const Tensor& B = b->data;
    if (A.rank() != 2 || (B.rank() != 2 && B.rank() != 1) || A.shape()[1] != B.shape()[0])
        detail::shape_error("matmul", A, B);
    const std::size_t m = A.shape()[0], k = A.shape()[1];
    const std::size_t n = B.rank() == 2 ? B.shape()[1] : 1;
    Tensor out(B.rank() == 2 ? std::vector<std::size_t>{m, n} : std::vector<std::size_t>{m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += A[i * k + t] * B[t * n + j];
            out[i * n + j] = acc;
        }
    return detail::attach("matmul", std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        // dA = G B^T, dB = A^T G
        if (a.requires_grad)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t t = 0; t < k; ++t) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j)
                        acc += self.grad[i * n + j] * b.data[t * n + j];
                    a.grad[i * k + t] += acc;
                }
        if (b.requires_grad)
            for (std::size_t t = 0; t < k; ++t)
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < m; ++i)
                        acc += a.data[i * k + t] * self.grad[i * n + j];
                    b.grad[t * n + j] += acc;
                }
    });
}

/// Fused affine layer: Y = X W^T + b with X (n,in), W (out,in), b (out).
inline Value affine(const Value& x, const Value& w, const Value& bias)
{
    const Tensor& X = x->data;
    const Tensor& W = w->data;
    const Tensor& B = bias->data;
    if (X.rank() != 2 || W.rank() != 2 || X.shape()[1] != W.shape()[1])
        detail::shape_error("affine", X, W);
    if (B.rank() != 1 || B.shape()[0] != W.shape()[0]) detail::shape_error("affine", W, B);
    const std::size_t n = X.shape()[0], in = X.shape()[1], out_dim = W.shape()[0];
    Tensor out({n, out_dim});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out_dim; ++j) {
            double acc = B[j];
            for (std::size_t t = 0; t < in; ++t) acc += X[i * in + t] * W[j * in + t];
            out[i * out_dim + j] = acc;
        }
    return detail::attach("affine", std::move(out), {x, w, bias}, [n, in, out_dim](Node& self) {
        Node& x = *self.parents[0];
        Node& w = *self.parents[1];
        Node& b = *self.parents[2];
        if (x.requires_grad)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t t = 0; t < in; ++t) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < out_dim; ++j)
                        acc += self.grad[i * out_dim + j] * w.data[j * in + t];
                    x.grad[i * in + t] += acc;
                }
        if (w.requires_grad)
            for (std::size_t j = 0; j < out_dim; ++j)
                for (std::size_t t = 0; t < in; ++t) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < n; ++i)
                        acc += self.grad[i * out_dim + j] * x.data[i * in + t];
                    w.grad[j * in + t] += acc;
                }
        if (b.requires_grad)
            for (std::size_t j = 0; j < out_dim; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += self.grad[i * out_dim + j];
                b.grad[j] += acc;
            }
    });
}

/// Reparameterized projection sample: U = V + rowbcast(s) * E with V,E (n,p)
/// and s of length p, or length 1 shared across all coordinates.
inline Value project(const Value& v, const Value& s, const Value& eps)
{
    const Tensor& V = v->data;
    const Tensor& S = s->data;
    const Tensor& E = eps->data;
    if (V.rank() != 2 || !V.same_shape(E)) detail::shape_error("project", V, E);
    const std::size_t n = V.shape()[0], p = V.shape()[1];
    const bool shared = S.size() == 1;
    if (!shared && (S.rank() != 1 || S.shape()[0] != p)) detail::shape_error("project", V, S);
    Tensor out({n, p});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j)
            out[i * p + j] = V[i * p + j] + S[shared ? 0 : j] * E[i * p + j];
    return detail::attach("project", std::move(out), {v, s, eps}, [n, p, shared](Node& self) {
        Node& v = *self.parents[0];
        Node& s = *self.parents[1];
        Node& e = *self.parents[2];
        if (v.requires_grad)
            for (std::size_t i = 0; i < v.grad.size(); ++i) v.grad[i] += self.grad[i];
        if (s.requires_grad)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < p; ++j)
                    s.grad[shared ? 0 : j] += self.grad[i * p + j] * e.data[i * p + j];
        if (e.requires_grad)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < p; ++j)
                    e.grad[i * p + j] += self.grad[i * p + j] * s.data[shared ? 0 : j];
    });
}

inline Value relu(const Value& a)
{
    Tensor out = a->data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return detail::attach("relu", std::move(out), {a}, [](Node& self) {
        Node& a = *self.parents[0];
        if (!a.requires_grad) return;
        for (std::size_t i = 0; i < a.grad.size(); ++i)
            if (a.data[i] > 0.0) a.grad[i] += self.grad[i];
    });
}

inline Value tanh(const Value& a)
{
    Tensor out = a->data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    return detail::attach("tanh", std::move(out), {a}, [](Node& self) {
        Node& a = *self.parents[0];
        if (!a.requires_grad) return;
        for (std::size_t i = 0; i < a.grad.size(); ++i)
            a.grad[i] += self.grad[i] * (1.0 - self.data[i] * self.data[i]);
    });
}

inline Value exp(const Value& a)
{
    Tensor out = a->data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    return detail::attach("exp", std::move(out), {a}, [](Node& self) {
        Node& a = *self.parents[0];
        if (!a.requires_grad) return;
        for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += self.grad[i] * self.data[i];
    });
}

inline Value log(const Value& a)
{
    Tensor out = a->data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
    return detail::attach("log", std::move(out), {a}, [](Node& self) {
        Node& a = *self.parents[0];
        if (!a.requires_grad) return;
        for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += self.grad[i] / a.data[i];
    });
}

inline Value square(const Value& a)
{
    Tensor out = a->data;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= out[i];
    return detail::attach("square", std::move(out), {a}, [](Node& self) {
        Node& a = *self.parents[0];
        if (!a.requires_grad) return;
        for (std::size_t i = 0; i < a.grad.size(); ++i)
            a.grad[i] += self.grad[i] * 2.0 * a.data[i];
    });
}

inline Value sum(const Value& a)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < a->data.size(); ++i) acc += a->data[i];
    return detail::attach("sum", Tensor::scalar(acc), {a}, [](Node& self) {
        Node& a = *self.parents[0];
        if (!a.requires_grad) return;
        for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += self.grad[0];
    });
}

inline Value mean(const Value& a)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < a->data.size(); ++i) acc += a->data[i];
    const double inv = 1.0 / static_cast<double>(a->data.size());
    return detail::attach("mean", Tensor::scalar(acc * inv), {a}, [inv](Node& self) {
        Node& a = *self.parents[0];
        if (!a.requires_grad) return;
        for (std::size_t i = 0; i < a.grad.size(); ++i) a.grad[i] += self.grad[0] * inv;
    });
}

/// Extract one element (by flat index) as a scalar node.
inline Value pick(const Value& a, std::size_t index)
{
    if (index >= a->data.size())
        throw std::invalid_argument("pick: index " + std::to_string(index) +
                                    " out of range for shape " + a->data.shape_str());
    return detail::attach("pick", Tensor::scalar(a->data[index]), {a}, [index](Node& self) {
        Node& a = *self.parents[0];
        if (a.requires_grad) a.grad[index] += self.grad[0];
    });
}

/// Fused softmax + cross-entropy, summed over rows. Logits (n,C), one target
/// class per row. Log-sum-exp is shifted by the row maximum.
inline Value softmax_cross_entropy(const Value& logits, std::vector<std::size_t> targets)
{
    const Tensor& L = logits->data;
    if (L.rank() != 2 || targets.size() != L.shape()[0])
        throw std::invalid_argument("softmax_cross_entropy: logits " + L.shape_str() + " vs " +
                                    std::to_string(targets.size()) + " targets");
    const std::size_t n = L.shape()[0], c = L.shape()[1];
    std::vector<double> lse(n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (targets[i] >= c)
            throw std::invalid_argument("softmax_cross_entropy: target class " +
                                        std::to_string(targets[i]) + " out of range");
        double mx = L[i * c];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, L[i * c + j]);
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += std::exp(L[i * c + j] - mx);
        lse[i] = mx + std::log(acc);
        loss += lse[i] - L[i * c + targets[i]];
    }
    return detail::attach("softmax_cross_entropy", Tensor::scalar(loss), {logits},
                          [n, c, targets = std::move(targets), lse = std::move(lse)](Node& self) {
                              Node& a = *self.parents[0];
                              if (!a.requires_grad) return;
                              const double g = self.grad[0];
                              for (std::size_t i = 0; i < n; ++i)
                                  for (std::size_t j = 0; j < c; ++j) {
                                      double p = std::exp(a.data[i * c + j] - lse[i]);
                                      if (j == targets[i]) p -= 1.0;
                                      a.grad[i * c + j] += g * p;
                                  }
                          });
}

namespace detail {

/// Iterative post-order DFS; returns nodes with every parent preceding its
/// consumers.
inline std::vector<Node*> topo_order(const Value& root)
{
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

} // namespace detail

/// Reverse-mode sweep from a scalar root: after the call every reachable
/// leaf's grad holds d(root)/d(leaf). Adjoints accumulate, so zero_grad
/// between independent passes over a shared graph.
inline void backward(const Value& root)
{
    if (!root->data.is_scalar())
        throw std::invalid_argument("backward: root must be scalar, got shape " +
                                    root->data.shape_str());
    std::vector<Node*> order = detail::topo_order(root);
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop(**it);
}

/// Zero every adjoint reachable from root.
inline void zero_grad(const Value& root)
{
    for (Node* n : detail::topo_order(root)) n->grad.zero();
}

} // namespace dipnet
