#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace dipnet {

enum class ProjectionMode { Disabled, Learnable, Fixed };

inline const char* to_string(ProjectionMode m)
{
    switch (m) {
        case ProjectionMode::Disabled: return "disabled";
        case ProjectionMode::Learnable: return "learnable";
        case ProjectionMode::Fixed: return "fixed";
    }
    return "?";
}

/// Per-layer projection state: the input v of a layer is replaced by a sample
/// from N(v, diag(lambda)). Learnable mode parameterizes lambda = exp(s) with
/// s a trainable log-variance (one per coordinate, or a single shared scalar
/// when tied). Fixed mode uses a constant lambda and never receives gradient.
/// Disabled mode is an exact identity pass-through.
class ProjectionParams {
public:
    static constexpr double kLogLambdaMin = -30.0;
    static constexpr double kLogLambdaMax = 4.0;
    static constexpr double kDefaultInit = -4.0;

    static ProjectionParams disabled(std::size_t dim)
    {
        return ProjectionParams(ProjectionMode::Disabled, dim, 0.0, false);
    }

    static ProjectionParams learnable(std::size_t dim, double init_log_lambda = kDefaultInit,
                                      bool tied = false)
    {
        ProjectionParams p(ProjectionMode::Learnable, dim, 0.0, tied);
        p.log_lambda_ = make_leaf(Tensor({tied ? std::size_t{1} : dim}, init_log_lambda));
        return p;
    }

    static ProjectionParams fixed(std::size_t dim, double lambda)
    {
        if (lambda < 0.0)
            throw std::invalid_argument("ProjectionParams::fixed: negative variance " +
                                        std::to_string(lambda));
        return ProjectionParams(ProjectionMode::Fixed, dim, lambda, false);
    }

    ProjectionMode mode() const { return mode_; }
    std::size_t dim() const { return dim_; }
    bool tied() const { return tied_; }
    double fixed_lambda() const { return fixed_lambda_; }
    bool enabled() const { return mode_ != ProjectionMode::Disabled; }

    /// Trainable leaf (Learnable mode only).
    const Value& log_lambda() const
    {
        if (mode_ != ProjectionMode::Learnable)
            throw std::logic_error("ProjectionParams: log_lambda only exists in Learnable mode");
        return log_lambda_;
    }

    /// Current per-coordinate variances, expanded to length dim().
    Tensor lambda_values() const
    {
        Tensor out({dim_});
        for (std::size_t j = 0; j < dim_; ++j) out[j] = lambda_at(j);
        return out;
    }

    double lambda_at(std::size_t j) const
    {
        switch (mode_) {
            case ProjectionMode::Disabled: return 0.0;
            case ProjectionMode::Fixed: return fixed_lambda_;
            case ProjectionMode::Learnable:
                return std::exp(log_lambda_->data[tied_ ? 0 : j]);
        }
        return 0.0;
    }

    /// Per-coordinate noise scale sqrt(lambda).
    double scale_at(std::size_t j) const
    {
        switch (mode_) {
            case ProjectionMode::Disabled: return 0.0;
            case ProjectionMode::Fixed: return std::sqrt(fixed_lambda_);
            case ProjectionMode::Learnable:
                return std::exp(0.5 * log_lambda_->data[tied_ ? 0 : j]);
        }
        return 0.0;
    }

    /// Graph node for the noise scale exp(s/2), differentiable in Learnable
    /// mode, constant in Fixed mode. Not meaningful for Disabled.
    Value scale_node() const
    {
        if (mode_ == ProjectionMode::Learnable) return exp(scale(log_lambda_, 0.5));
        Tensor s({dim_});
        if (mode_ == ProjectionMode::Fixed) s.fill(std::sqrt(fixed_lambda_));
        return make_const(std::move(s));
    }

    /// Clamp log-variances into [kLogLambdaMin, kLogLambdaMax]; called by the
    /// optimizer after every update as a numerical backstop.
    void clamp_log_lambda()
    {
        if (mode_ != ProjectionMode::Learnable) return;
        Tensor& s = log_lambda_->data;
        for (std::size_t i = 0; i < s.size(); ++i)
            s[i] = std::min(kLogLambdaMax, std::max(kLogLambdaMin, s[i]));
    }

    /// Data-level reparameterized sample u = v + sqrt(lambda) * eps with eps
    /// drawn from rng. Accepts a vector of length dim() or an (n, dim) batch.
    Tensor sample(const Tensor& v, RngStream& rng) const
    {
        check_dims(v);
        if (mode_ == ProjectionMode::Disabled) return v;
        Tensor u = v;
        const std::size_t cols = dim_;
        for (std::size_t i = 0; i < u.size(); ++i)
            u[i] += scale_at(i % cols) * rng.normal();
        return u;
    }

    void check_dims(const Tensor& v) const
    {
        const std::size_t width = v.rank() == 2 ? v.shape()[1] : v.size();
        if (width != dim_)
            throw std::invalid_argument("projection: input " + v.shape_str() +
                                        " does not match dimension " + std::to_string(dim_));
    }

private:
    ProjectionParams(ProjectionMode m, std::size_t dim, double fixed_lambda, bool tied)
        : mode_(m), dim_(dim), fixed_lambda_(fixed_lambda), tied_(tied)
    {
    }

    ProjectionMode mode_;
    std::size_t dim_;
    double fixed_lambda_;
    bool tied_;
    Value log_lambda_; // null unless Learnable
};

/// One joint draw of standard-normal noise: one (rows, dim) array per enabled
/// projection, in layer order. All-disabled nets yield an empty trajectory.
struct NoiseDraw {
    std::vector<Tensor> eps;

    bool empty() const { return eps.empty(); }
    std::size_t layers() const { return eps.size(); }
};

inline NoiseDraw draw_noise_trajectory(const std::vector<ProjectionParams>& projections,
                                       std::size_t rows, RngStream& rng)
{
    NoiseDraw t;
    for (const ProjectionParams& p : projections)
        if (p.enabled()) t.eps.push_back(rng.normal_tensor({rows, p.dim()}));
    return t;
}

/// Graph-side projection: identity for Disabled, otherwise the
/// reparameterized v + scale * eps with eps taken from the trajectory.
inline Value apply_projection(const Value& v, const ProjectionParams& params, const Tensor& eps)
{
    if (!params.enabled()) return v;
    params.check_dims(v->data);
    return project(v, params.scale_node(), make_const(eps));
}

} // namespace dipnet
