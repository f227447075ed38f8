#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "data_io.hpp"
#include "network.hpp"
#include "objective.hpp"
#include "robustness.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace dipnet {

/// Raised when a loss evaluates to NaN/Inf; training aborts rather than
/// clamping so a too-large step size is visible, with the location attached.
struct DivergenceError : std::runtime_error {
    std::size_t epoch, batch;
    DivergenceError(std::size_t e, std::size_t b)
        : std::runtime_error("non-finite loss at epoch " + std::to_string(e) + ", batch " +
                             std::to_string(b) + " (step size too large?)"),
          epoch(e), batch(b)
    {
    }
};

struct EvalMetrics {
    double mse = 0.0;          // normalized target units
    double mse_original = 0.0; // original target units
    double accuracy = 0.0;     // classification only
    double mean_nll = 0.0;     // classification only
    std::size_t count = 0;
};

/// k-sample averaged prediction metrics on one split.
inline EvalMetrics evaluate(const DipNet& model, const Tensor& x, const Tensor& y, std::size_t k,
                            RngStream& rng, double target_std = 1.0)
{
    EvalMetrics out;
    out.count = x.rows();
    if (out.count == 0) return out;
    Tensor pred = model.predict_averaged(x, k, rng);
    if (model.task() == Task::Regression) {
        double acc = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred[i] - y[i];
            acc += d * d;
        }
        out.mse = acc / static_cast<double>(pred.size());
        out.mse_original = out.mse * target_std * target_std;
    } else {
        std::size_t hits = 0;
        double nll = 0.0;
        const std::size_t c = pred.cols();
        for (std::size_t i = 0; i < pred.rows(); ++i) {
            const std::size_t label = static_cast<std::size_t>(y[i]);
            std::size_t best = 0;
            for (std::size_t j = 1; j < c; ++j)
                if (pred.at(i, j) > pred.at(i, best)) best = j;
            hits += best == label ? 1 : 0;
            nll -= std::log(std::max(pred.at(i, label), 1e-300));
        }
        out.accuracy = static_cast<double>(hits) / static_cast<double>(pred.rows());
        out.mean_nll = nll / static_cast<double>(pred.rows());
    }
    return out;
}

struct EpochRecord {
    std::size_t epoch = 0;
    LossBreakdown train_loss; // summed over the epoch's batches
    bool has_val = false;
    EvalMetrics val;
    double wall_seconds = 0.0; // informational only; keep out of metric files
};

struct TrainState {
    Hyperparams hp;
    std::size_t epoch = 0;
    std::uint64_t rng_seed = 0;
    std::size_t steps = 0;
    std::vector<EpochRecord> history;
};

struct TrainCallbacks {
    std::function<void(std::size_t epoch, std::size_t batch, const LossBreakdown&)> on_step;
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Weight-initialization stream for a run seed; shared by the CLI, the bench
/// grid, and tests so "same seed" means the same starting point everywhere.
inline RngStream model_init_stream(std::uint64_t seed)
{
    return RngStream(seed).derive(0x11, 0);
}

namespace detail {

inline Tensor gather(const Tensor& src, const std::vector<std::size_t>& rows, std::size_t begin,
                     std::size_t end)
{
    const std::size_t w = src.cols();
    Tensor out({end - begin, w});
    for (std::size_t i = begin; i < end; ++i)
        for (std::size_t j = 0; j < w; ++j) out.at(i - begin, j) = src.at(rows[i], j);
    return out;
}

} // namespace detail

/// Mini-batch SGD on the full objective. Every rng draw derives statelessly
/// from (seed, epoch, batch), so runs are reproducible and checkpoints
/// byte-stable. A train-phase attack perturbs each batch freshly per visit.
inline TrainState train(DipNet& model, const DatasetSplit& data, const Hyperparams& hp,
                        std::uint64_t seed, const AttackSpec& attack = {},
                        const TrainCallbacks& cb = {})
{
    for (const std::string& e : hp.validate())
        throw std::invalid_argument("hyperparams: " + e);
    if (data.x_train.rows() == 0) throw std::invalid_argument("train: empty training split");
    const std::size_t n = data.x_train.rows();
    const std::size_t bsz = std::min(hp.batch_size, n);

    TrainState state;
    state.hp = hp;
    state.rng_seed = seed;
    RngStream root(seed);

    std::vector<Value> params = model.parameters();
    std::vector<Tensor> velocity;
    if (hp.momentum > 0.0)
        for (const Value& p : params) velocity.emplace_back(p->data.shape(), 0.0);

    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> perm = root.derive(0xe0, epoch).permutation(n);
        LossBreakdown epoch_loss;
        const std::size_t batches = (n + bsz - 1) / bsz;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t lo = b * bsz, hi = std::min(n, lo + bsz);
            Tensor xb = detail::gather(data.x_train, perm, lo, hi);
            Tensor yb = detail::gather(data.y_train, perm, lo, hi);
            if (attack.active() && attack.phase == AttackPhase::TrainInputs) {
                RngStream attack_rng = root.derive(0xa7, epoch).derive(b, 0);
                xb = apply_attack(model, xb, yb, attack, attack_rng);
            }
            RngStream batch_rng = root.derive(0xb0, epoch).derive(b, 0);
            TotalLoss loss = total_loss(model, xb, yb, hp, batch_rng);
            if (!std::isfinite(loss.parts.total)) throw DivergenceError(epoch, b);

            zero_grad(loss.root);
            backward(loss.root);
            for (std::size_t i = 0; i < params.size(); ++i) {
                Tensor& p = params[i]->data;
                const Tensor& g = params[i]->grad;
                if (hp.momentum > 0.0) {
                    Tensor& v = velocity[i];
                    for (std::size_t e = 0; e < p.size(); ++e) {
                        v[e] = hp.momentum * v[e] + g[e];
                        p[e] -= hp.lr * v[e];
                    }
                } else {
                    for (std::size_t e = 0; e < p.size(); ++e) p[e] -= hp.lr * g[e];
                }
            }
            model.clamp_projections();
            ++state.steps;

            epoch_loss.nll += loss.parts.nll;
            epoch_loss.trace_penalty += loss.parts.trace_penalty;
            epoch_loss.logdet_penalty += loss.parts.logdet_penalty;
            epoch_loss.stability += loss.parts.stability;
            epoch_loss.total += loss.parts.total;
            if (cb.on_step) cb.on_step(epoch, b, loss.parts);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss;
        if (data.has_val()) {
            RngStream eval_rng = root.derive(0xe7, epoch);
            rec.has_val = true;
            rec.val = evaluate(model, data.x_val, data.y_val, hp.k, eval_rng,
                               data.stats.target_std);
        }
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        state.history.push_back(rec);
        state.epoch = epoch + 1;
        if (cb.on_epoch) cb.on_epoch(rec);
    }
    return state;
}

} // namespace dipnet
