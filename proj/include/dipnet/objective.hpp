#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "network.hpp"
#include "projection.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace dipnet {

/// Training knobs. alpha/beta weight the variance-prevention penalty
/// (alpha*sum lambda - beta*sum ln lambda), lambda_stab the pairwise output
/// stability penalty, m the stochastic forwards per example during training,
/// k the averaged forwards at prediction time.
struct Hyperparams {
    double alpha = 0.0;
    double beta = 0.0;
    double lambda_stab = 0.0;
    std::size_t m = 1;
    std::size_t k = 1;
    double sigma_obs = 0.7071067811865476; // sqrt(1/2): NLL reduces to plain squared error
    double lr = 0.05;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double momentum = 0.0;
    bool mean_reduction = false; // false: sum over batch examples

    std::vector<std::string> validate() const
    {
        std::vector<std::string> errors;
        if (m < 1) errors.push_back("m must be >= 1");
        if (k < 1) errors.push_back("k must be >= 1");
        if (lambda_stab > 0.0 && m < 2)
            errors.push_back("m >= 2 required when the stability penalty is active");
        if (alpha < 0.0) errors.push_back("alpha must be nonnegative");
        if (beta < 0.0) errors.push_back("beta must be nonnegative");
        if (lambda_stab < 0.0) errors.push_back("lambda_stab must be nonnegative");
        if (sigma_obs <= 0.0) errors.push_back("sigma_obs must be positive");
        if (lr <= 0.0) errors.push_back("lr must be positive");
        if (batch_size < 1) errors.push_back("batch_size must be >= 1");
        if (momentum < 0.0 || momentum >= 1.0) errors.push_back("momentum must be in [0, 1)");
        return errors;
    }
};

/// The four summands of the training objective. `total` is always the
/// left-to-right sum nll + trace_penalty + logdet_penalty + stability, in
/// that fixed order, so the decomposition is bit-exact.
struct LossBreakdown {
    double nll = 0.0;
    double trace_penalty = 0.0;
    double logdet_penalty = 0.0;
    double stability = 0.0;
    double total = 0.0;
};

/// Data-level NLL over m outputs of one batch. Regression:
/// (1/m) sum_j ||f_j - y||^2 / (2 sigma^2); classification: (1/m) sum_j
/// cross-entropy against integer labels in y (one per row).
inline double nll_term(const std::vector<Tensor>& outputs, const Tensor& y, Task task,
                       double sigma_obs)
{
    if (outputs.empty()) throw std::invalid_argument("nll_term: need at least one output");
    const double m = static_cast<double>(outputs.size());
    double acc = 0.0;
    if (task == Task::Regression) {
        const double c = 1.0 / (2.0 * sigma_obs * sigma_obs * m);
        for (const Tensor& f : outputs) {
            if (!f.same_shape(y))
                throw std::invalid_argument("nll_term: output " + f.shape_str() +
                                            " vs target " + y.shape_str());
            double sq = 0.0;
            for (std::size_t i = 0; i < f.size(); ++i) {
                const double d = f[i] - y[i];
                sq += d * d;
            }
            acc += sq;
        }
        return acc * c;
    }
    for (const Tensor& f : outputs) {
        const std::size_t n = f.rows(), cdim = f.cols();
        for (std::size_t i = 0; i < n; ++i) {
            double mx = f.at(i, 0);
            for (std::size_t j = 1; j < cdim; ++j) mx = std::max(mx, f.at(i, j));
            double lse = 0.0;
            for (std::size_t j = 0; j < cdim; ++j) lse += std::exp(f.at(i, j) - mx);
            acc += mx + std::log(lse) - f.at(i, static_cast<std::size_t>(y[i]));
        }
    }
    return acc / m;
}

/// alpha * sum lambda - beta * sum ln(lambda) over Learnable projections
/// only; Fixed and Disabled layers contribute nothing.
inline double variance_prevention_penalty(const std::vector<ProjectionParams>& projections,
                                          double alpha, double beta)
{
    double trace = 0.0, logdet = 0.0;
    for (const ProjectionParams& p : projections) {
        if (p.mode() != ProjectionMode::Learnable) continue;
        for (std::size_t j = 0; j < p.dim(); ++j) {
            const double s = p.log_lambda()->data[p.tied() ? 0 : j];
            trace += std::exp(s);
            logdet += s; // ln(exp(s)) = s exactly
        }
    }
    return alpha * trace - beta * logdet;
}

/// Unbiased pairwise stability estimate: lambda_stab / (m(m-1)) * sum over
/// unordered output pairs of their squared distance. Expectation equals
/// lambda_stab * tr Var[f] per example.
inline double stability_penalty(const std::vector<Tensor>& outputs, double lambda_stab)
{
    const std::size_t m = outputs.size();
    if (m < 2) throw std::invalid_argument("stability_penalty: need m >= 2 outputs, got " +
                                           std::to_string(m));
    double acc = 0.0;
    for (std::size_t j1 = 0; j1 < m; ++j1)
        for (std::size_t j2 = j1 + 1; j2 < m; ++j2) {
            const Tensor& a = outputs[j1];
            const Tensor& b = outputs[j2];
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double d = a[i] - b[i];
                acc += d * d;
            }
        }
    return acc * (lambda_stab / static_cast<double>(m * (m - 1)));
}

/// Differentiable total loss for one batch.
struct TotalLoss {
    Value root;          // scalar graph node; backward() reaches all leaves
    LossBreakdown parts; // values of the four summands and their exact sum
};

/// Build the objective graph for a batch: m trajectory draws per forward,
/// NLL + variance-prevention penalty + stability, combined in a fixed order.
/// For regression y is (n, out); for classification y is (n, 1) holding
/// class indices. Trajectories come from rng.derive(0x7a, j).
inline TotalLoss total_loss(const DipNet& model, const Tensor& x, const Tensor& y,
                            const Hyperparams& hp, RngStream& rng)
{
    if (x.rank() != 2 || x.shape()[0] == 0)
        throw std::invalid_argument("total_loss: batch must be a nonempty (n, d) matrix, got " +
                                    x.shape_str());
    const std::size_t n = x.shape()[0];
    const double batch_scale = hp.mean_reduction ? 1.0 / static_cast<double>(n) : 1.0;
    const bool stochastic = model.any_projection_enabled();

    Value xv = make_const(x);
    std::vector<Value> outputs;
    outputs.reserve(hp.m);
    for (std::size_t j = 0; j < hp.m; ++j) {
        RngStream traj_rng = rng.derive(0x7a, j);
        if (stochastic) {
            NoiseDraw traj = draw_noise_trajectory(model.projections(), n, traj_rng);
            outputs.push_back(model.forward_graph(xv, ForwardMode::sampled(traj)));
        } else {
            outputs.push_back(model.forward_graph(xv, ForwardMode::deterministic()));
        }
    }

    // NLL term
    Value nll;
    if (model.task() == Task::Regression) {
        const double c = batch_scale / (2.0 * hp.sigma_obs * hp.sigma_obs *
                                        static_cast<double>(hp.m));
        Value yv = make_const(y);
        Value sq;
        for (const Value& f : outputs) {
            Value term = sum(square(sub(f, yv)));
            sq = sq ? add(sq, term) : term;
        }
        nll = scale(sq, c);
    } else {
        std::vector<std::size_t> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::size_t>(y[i]);
        Value ce;
        for (const Value& f : outputs) {
            Value term = softmax_cross_entropy(f, labels);
            ce = ce ? add(ce, term) : term;
        }
        nll = scale(ce, batch_scale / static_cast<double>(hp.m));
    }

    // variance-prevention penalty over Learnable projections, as graph nodes
    // so gradients reach the log-variances
    Value trace_term, logdet_term;
    for (const ProjectionParams& p : model.projections()) {
        if (p.mode() != ProjectionMode::Learnable) continue;
        Value s_sum = sum(p.log_lambda());
        Value lam_sum = sum(exp(p.log_lambda()));
        if (p.tied()) {
            // one shared log-variance stands for dim() coordinates
            const double dim = static_cast<double>(p.dim());
            s_sum = scale(s_sum, dim);
            lam_sum = scale(lam_sum, dim);
        }
        trace_term = trace_term ? add(trace_term, lam_sum) : lam_sum;
        logdet_term = logdet_term ? add(logdet_term, s_sum) : s_sum;
    }
    Value trace_penalty =
        trace_term ? scale(trace_term, hp.alpha) : make_const(Tensor::scalar(0.0));
    Value logdet_penalty =
        logdet_term ? scale(logdet_term, -hp.beta) : make_const(Tensor::scalar(0.0));

    // pairwise stability penalty
    Value stability;
    if (hp.lambda_stab > 0.0) {
        if (hp.m < 2)
            throw std::invalid_argument("total_loss: stability penalty needs m >= 2");
        Value acc;
        for (std::size_t j1 = 0; j1 < hp.m; ++j1)
            for (std::size_t j2 = j1 + 1; j2 < hp.m; ++j2) {
                Value d = sum(square(sub(outputs[j1], outputs[j2])));
                acc = acc ? add(acc, d) : d;
            }
        stability = scale(acc, batch_scale * hp.lambda_stab /
                                   static_cast<double>(hp.m * (hp.m - 1)));
    } else {
        stability = make_const(Tensor::scalar(0.0));
    }

    TotalLoss out;
    out.root = add(add(add(nll, trace_penalty), logdet_penalty), stability);
    out.parts.nll = nll->data[0];
    out.parts.trace_penalty = trace_penalty->data[0];
    out.parts.logdet_penalty = logdet_penalty->data[0];
    out.parts.stability = stability->data[0];
    out.parts.total = out.root->data[0];
    return out;
}

} // namespace dipnet
