#pragma once

// Plain MLP trained by the textbook equations, written against raw arrays
// with no autodiff. Serves as the independent reference for the claim that
// disabling every projection recovers ordinary SGD bit for bit.

#include <cmath>
#include <cstddef>
#include <vector>

#include "dipnet/network.hpp"

namespace mirror {

struct PlainMlp {
    struct Layer {
        std::vector<double> w, b; // w is (out, in) row-major
        std::size_t in = 0, out = 0;
        bool tanh_act = false;
    };
    std::vector<Layer> layers;

    static PlainMlp from(const dipnet::DipNet& net)
    {
        PlainMlp m;
        for (const auto& l : net.layers()) {
            Layer pl;
            pl.out = l.w->data.rows();
            pl.in = l.w->data.cols();
            pl.w.assign(l.w->data.data(), l.w->data.data() + l.w->data.size());
            pl.b.assign(l.b->data.data(), l.b->data.data() + l.b->data.size());
            pl.tanh_act = l.act == dipnet::Activation::Tanh;
            m.layers.push_back(std::move(pl));
        }
        return m;
    }

    /// One SGD step on sum((f - y)^2) * cm over the given rows; returns the
    /// loss value. Row order matters: the caller passes rows in the exact
    /// order the reference trainer visits them.
    double step(const std::vector<std::vector<double>>& X, const std::vector<double>& Y,
                double cm, double lr)
    {
        const std::size_t n = X.size();
        // forward, keeping every intermediate activation
        std::vector<std::vector<std::vector<double>>> acts(layers.size() + 1);
        acts[0].resize(n);
        for (std::size_t i = 0; i < n; ++i) acts[0][i] = X[i];
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const Layer& L = layers[l];
            acts[l + 1].assign(n, std::vector<double>(L.out));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < L.out; ++j) {
                    double acc = L.b[j];
                    for (std::size_t t = 0; t < L.in; ++t)
                        acc += acts[l][i][t] * L.w[j * L.in + t];
                    acts[l + 1][i][j] = L.tanh_act ? std::tanh(acc) : acc;
                }
        }

        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = acts.back()[i][0] - Y[i];
            sq += d * d;
        }
        const double loss = sq * cm;

        // backward
        std::vector<std::vector<double>> g(n, std::vector<double>(1));
        for (std::size_t i = 0; i < n; ++i)
            g[i][0] = cm * 2.0 * (acts.back()[i][0] - Y[i]);
        for (std::size_t l = layers.size(); l-- > 0;) {
            Layer& L = layers[l];
            if (L.tanh_act)
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < L.out; ++j)
                        g[i][j] *= 1.0 - acts[l + 1][i][j] * acts[l + 1][i][j];
            std::vector<double> dw(L.w.size()), db(L.b.size());
            for (std::size_t j = 0; j < L.out; ++j) {
                for (std::size_t t = 0; t < L.in; ++t) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < n; ++i) acc += g[i][j] * acts[l][i][t];
                    dw[j * L.in + t] = acc;
                }
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += g[i][j];
                db[j] = acc;
            }
            if (l > 0) {
                std::vector<std::vector<double>> gprev(n, std::vector<double>(L.in));
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t t = 0; t < L.in; ++t) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < L.out; ++j)
                            acc += g[i][j] * L.w[j * L.in + t];
                        gprev[i][t] = acc;
                    }
                g = std::move(gprev);
            }
            for (std::size_t e = 0; e < L.w.size(); ++e) L.w[e] -= lr * dw[e];
            for (std::size_t e = 0; e < L.b.size(); ++e) L.b[e] -= lr * db[e];
        }
        return loss;
    }
};

} // namespace mirror
