#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "autodiff.hpp"
#include "projection.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace dipnet {

enum class Activation { Identity, Relu, Tanh };
enum class Task { Regression, Classification };

inline const char* to_string(Activation a)
{
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
    }
    return "?";
}

inline const char* to_string(Task t)
{
    return t == Task::Regression ? "regression" : "classification";
}

/// Forward flavor: Deterministic zeroes all projection noise (the mean
/// network); Sampled runs one stochastic pass over a given trajectory.
struct ForwardMode {
    const NoiseDraw* trajectory = nullptr;

    static ForwardMode deterministic() { return {}; }
    static ForwardMode sampled(const NoiseDraw& t) { return {&t}; }
    bool is_sampled() const { return trajectory != nullptr; }
};

/// MLP whose layer inputs are optionally routed through distributional
/// projections. Parameters (weights, biases, learnable log-variances) are
/// persistent autodiff leaves; every forward builds a fresh graph on top of
/// them.
class DipNet {
public:
    struct Layer {
        Value w; // (out, in)
        Value b; // (out)
        Activation act;
    };

    /// dims = {input, hidden..., output}. Weights are Xavier-uniform
    /// initialized from rng; biases start at zero. Projections default to
    /// Disabled everywhere.
    DipNet(std::vector<std::size_t> dims, Activation hidden_act, Task task, RngStream& rng)
        : task_(task), dims_(std::move(dims))
    {
        if (dims_.size() < 2) throw std::invalid_argument("DipNet: need at least input and output dims");
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            const std::size_t in = dims_[l], out = dims_[l + 1];
            Tensor w({out, in});
            const double a = std::sqrt(6.0 / static_cast<double>(in + out));
            for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform_in(-a, a);
            const bool last = l + 2 == dims_.size();
            layers_.push_back({make_leaf(std::move(w)), make_leaf(Tensor({out})),
                               last ? Activation::Identity : hidden_act});
            projections_.push_back(ProjectionParams::disabled(in));
        }
    }

    std::size_t depth() const { return layers_.size(); }
    std::size_t input_dim() const { return dims_.front(); }
    std::size_t output_dim() const { return dims_.back(); }
    const std::vector<std::size_t>& dims() const { return dims_; }
    Task task() const { return task_; }

    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    std::vector<ProjectionParams>& projections() { return projections_; }
    const std::vector<ProjectionParams>& projections() const { return projections_; }

    void set_projection(std::size_t layer, ProjectionParams p)
    {
        if (layer >= depth())
            throw std::invalid_argument("set_projection: layer " + std::to_string(layer) +
                                        " out of range for depth " + std::to_string(depth()));
        if (p.dim() != dims_[layer])
            throw std::invalid_argument("set_projection: dimension " + std::to_string(p.dim()) +
                                        " does not match layer input " +
                                        std::to_string(dims_[layer]));
        projections_[layer] = std::move(p);
    }

    bool any_projection_enabled() const
    {
        for (const auto& p : projections_)
            if (p.enabled()) return true;
        return false;
    }

    /// All trainable leaves: weights, biases, then learnable log-variances.
    std::vector<Value> parameters() const
    {
        std::vector<Value> ps;
        for (const Layer& l : layers_) {
            ps.push_back(l.w);
            ps.push_back(l.b);
        }
        for (const ProjectionParams& p : projections_)
            if (p.mode() == ProjectionMode::Learnable) ps.push_back(p.log_lambda());
        return ps;
    }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (const Value& p : parameters()) n += p->data.size();
        return n;
    }

    /// Clamp all learnable log-variances; call after optimizer updates.
    void clamp_projections()
    {
        for (ProjectionParams& p : projections_) p.clamp_log_lambda();
    }

    /// Build the forward graph for a batch leaf/const x of shape (n, input).
    /// Sampled mode consumes one noise array per enabled projection; the
    /// output is the final activation (logits for classification).
    Value forward_graph(const Value& x, ForwardMode mode) const
    {
        if (x->data.rank() != 2 || x->data.shape()[1] != input_dim())
            throw std::invalid_argument("forward: input " + x->data.shape_str() +
                                        " does not match model input dim " +
                                        std::to_string(input_dim()));
        if (mode.is_sampled()) {
            std::size_t need = 0;
            for (const auto& p : projections_) need += p.enabled() ? 1 : 0;
            if (mode.trajectory->layers() != need)
                throw std::invalid_argument(
                    "forward: trajectory has " + std::to_string(mode.trajectory->layers()) +
                    " noise arrays, model needs " + std::to_string(need));
        }
        Value h = x;
        std::size_t traj_idx = 0;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const ProjectionParams& proj = projections_[l];
            if (proj.enabled() && mode.is_sampled())
                h = apply_projection(h, proj, mode.trajectory->eps[traj_idx++]);
            h = affine(h, layers_[l].w, layers_[l].b);
            switch (layers_[l].act) {
                case Activation::Identity: break;
                case Activation::Relu: h = relu(h); break;
                case Activation::Tanh: h = tanh(h); break;
            }
        }
        return h;
    }

    /// Non-graph forward; returns the output tensor only.
    Tensor forward(const Tensor& x, ForwardMode mode = ForwardMode::deterministic()) const
    {
        return forward_graph(make_const(x), mode)->data;
    }

    /// Mean over k sampled forwards (Monte-Carlo prediction). Regression
    /// averages raw outputs; classification averages softmax probabilities.
    /// Trajectories come from per-sample derived rng streams, and the k
    /// results are combined by pairwise summation so the value is independent
    /// of evaluation order (and exact for power-of-two k).
    Tensor predict_averaged(const Tensor& x, std::size_t k, RngStream& rng) const
    {
        if (k == 0) throw std::invalid_argument("predict_averaged: k must be >= 1");
        if (!any_projection_enabled()) {
            // all k passes would be identical; answer exactly, not to rounding
            Tensor out = forward(x);
            return task_ == Task::Classification ? softmax_rows(out) : out;
        }
        std::vector<Tensor> outs;
        outs.reserve(k);
        for (std::size_t r = 0; r < k; ++r) {
            RngStream traj_rng = rng.derive(0x9d, r);
            NoiseDraw traj = draw_noise_trajectory(projections_, x.shape()[0], traj_rng);
            Tensor out = forward(x, ForwardMode::sampled(traj));
            if (task_ == Task::Classification) out = softmax_rows(out);
            outs.push_back(std::move(out));
        }
        return pairwise_mean(std::move(outs));
    }

    /// Row-wise softmax with max-shift.
    static Tensor softmax_rows(const Tensor& logits)
    {
        Tensor p = logits;
        const std::size_t n = p.rows(), c = p.cols();
        for (std::size_t i = 0; i < n; ++i) {
            double mx = p[i * c];
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, p[i * c + j]);
            double acc = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                p[i * c + j] = std::exp(p[i * c + j] - mx);
                acc += p[i * c + j];
            }
            for (std::size_t j = 0; j < c; ++j) p[i * c + j] /= acc;
        }
        return p;
    }

private:
    Task task_;
    std::vector<std::size_t> dims_;
    std::vector<Layer> layers_;
    std::vector<ProjectionParams> projections_;
};

/// Argmax class per row of a probability/logit matrix.
inline std::vector<std::size_t> argmax_rows(const Tensor& m)
{
    std::vector<std::size_t> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < m.cols(); ++j)
            if (m.at(i, j) > m.at(i, best)) best = j;
        out[i] = best;
    }
    return out;
}

} // namespace dipnet
