#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "network.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace dipnet {

enum class AttackKind { None, Gaussian, Fgsm };
enum class AttackPhase { TrainInputs, EvalInputs };

inline const char* to_string(AttackKind k)
{
    switch (k) {
        case AttackKind::None: return "none";
        case AttackKind::Gaussian: return "gaussian";
        case AttackKind::Fgsm: return "fgsm";
    }
    return "?";
}

inline const char* to_string(AttackPhase p)
{
    return p == AttackPhase::TrainInputs ? "train" : "eval";
}

struct AttackSpec {
    AttackKind kind = AttackKind::None;
    double sigma = 0.0;   // Gaussian scale
    double epsilon = 0.0; // FGSM step
    AttackPhase phase = AttackPhase::EvalInputs;

    bool active() const { return kind != AttackKind::None; }

    std::vector<std::string> validate() const
    {
        std::vector<std::string> errors;
        if (kind == AttackKind::Gaussian && sigma <= 0.0)
            errors.push_back("gaussian attack requires sigma > 0");
        if (kind == AttackKind::Fgsm && epsilon <= 0.0)
            errors.push_back("fgsm attack requires epsilon > 0");
        return errors;
    }
};

/// x' = x + eta, eta i.i.d. N(0, sigma^2).
inline Tensor gaussian_attack(const Tensor& x, double sigma, RngStream& rng)
{
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_attack: sigma must be positive");
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sigma * rng.normal();
    return out;
}

/// FGSM perturbation and the attacked input. `delta` is epsilon * sign(grad)
/// by construction, so its nonzero coordinates have magnitude exactly
/// epsilon; x_prime = x + delta may not reproduce that exactly after
/// rounding, which is why delta is reported first-class.
struct FgsmResult {
    Tensor x_prime;
    Tensor delta;
};

/// Single-step sign attack x -> x + epsilon * sign(grad_x L). The gradient is
/// taken through the deterministic (mean) network; the loss is summed squared
/// error for regression, cross-entropy for classification. Model parameters
/// are untouched; their scratch adjoints are re-zeroed before returning.
inline FgsmResult fgsm_attack(const DipNet& model, const Tensor& x, const Tensor& y,
                              double epsilon)
{
    if (epsilon <= 0.0) throw std::invalid_argument("fgsm_attack: epsilon must be positive");
    Value x_leaf = make_leaf(x);
    Value out = model.forward_graph(x_leaf, ForwardMode::deterministic());
    Value loss;
    if (model.task() == Task::Regression) {
        if (!out->data.same_shape(y))
            throw std::invalid_argument("fgsm_attack: output " + out->data.shape_str() +
                                        " vs target " + y.shape_str());
        loss = sum(square(sub(out, make_const(y))));
    } else {
        std::vector<std::size_t> labels(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) labels[i] = static_cast<std::size_t>(y[i]);
        loss = softmax_cross_entropy(out, std::move(labels));
    }
    backward(loss);

    FgsmResult res;
    res.delta = Tensor(x.shape());
    res.x_prime = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double g = x_leaf->grad[i];
        res.delta[i] = g > 0.0 ? epsilon : (g < 0.0 ? -epsilon : 0.0);
        res.x_prime[i] += res.delta[i];
    }
    zero_grad(loss); // leave no residue in the model's parameter adjoints
    return res;
}

/// Apply an eval-phase attack to a feature matrix. FGSM needs targets; the
/// Gaussian attack needs an rng stream. Returns x unchanged for None.
inline Tensor apply_attack(const DipNet& model, const Tensor& x, const Tensor& y,
                           const AttackSpec& attack, RngStream& rng)
{
    switch (attack.kind) {
        case AttackKind::None: return x;
        case AttackKind::Gaussian: return gaussian_attack(x, attack.sigma, rng);
        case AttackKind::Fgsm: return fgsm_attack(model, x, y, attack.epsilon).x_prime;
    }
    return x;
}

} // namespace dipnet
