// SPDX-License-Identifier: Apache-2.0
#ifndef HALOW_NN_TRAIN_HPP
#define HALOW_NN_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "halow/nn/layers.hpp"
#include "halow/nn/tensor.hpp"

namespace halow::nn {

template <class T>
struct MseResult {
    T loss;
    std::vector<T> grad;
};

/// L = sum_i (t_i - p_i)^2 / batch, grad = 2(p - t)/batch, batch = element
/// count.
template <class T>
MseResult<T> mse_loss(const std::vector<T>& pred, const std::vector<T>& target) {
    if (pred.size() != target.size() || pred.empty())
        throw std::invalid_argument("mse_loss: size mismatch");
    const T inv = T(1) / static_cast<T>(pred.size());
    MseResult<T> r{T(0), std::vector<T>(pred.size())};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T d = pred[i] - target[i];
        r.loss += d * d * inv;
        r.grad[i] = T(2) * d * inv;
    }
    return r;
}

/// Adam optimizer state; moments mirror the weight structure. Moment and
/// update arithmetic run in double regardless of the weight scalar type.
template <class T>
struct AdamState {
    double alpha = 0.001, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;
    Weights<double> m, v;

    static AdamState init(const std::vector<LayerSpec>& net) {
        AdamState s;
        s.m = zero_weights<double>(net);
        s.v = zero_weights<double>(net);
        return s;
    }
};

template <class T>
void adam_step(AdamState<T>& st, Weights<T>& w, const Weights<T>& g) {
    ++st.step;
    const double b1t = 1.0 - std::pow(st.beta1, st.step);
    const double b2t = 1.0 - std::pow(st.beta2, st.step);
    for (std::size_t li = 0; li < w.size(); ++li)
        for (std::size_t ti = 0; ti < w[li].size(); ++ti) {
            auto& wd = w[li][ti].data;
            const auto& gd = g[li][ti].data;
            auto& md = st.m[li][ti].data;
            auto& vd = st.v[li][ti].data;
            for (std::size_t i = 0; i < wd.size(); ++i) {
                const double gi = static_cast<double>(gd[i]);
                md[i] = st.beta1 * md[i] + (1.0 - st.beta1) * gi;
                vd[i] = st.beta2 * vd[i] + (1.0 - st.beta2) * gi * gi;
                const double mhat = md[i] / b1t;
                const double vhat = vd[i] / b2t;
                wd[i] = static_cast<T>(static_cast<double>(wd[i]) -
                                       st.alpha * mhat / (std::sqrt(vhat) + st.eps));
            }
        }
}

template <class T>
struct Sample {
    std::vector<T> x;
    T y;
};

struct TrainConfig {
    std::size_t batch = 80;
    std::size_t epochs = 400;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    // epoch index, mean training loss, mean validation loss (NaN when no
    // validation set is supplied)
    std::function<void(std::size_t, double, double)> on_epoch;
};

namespace detail {

template <class T>
void accumulate(Weights<T>& acc, const Weights<T>& g) {
    for (std::size_t li = 0; li < acc.size(); ++li)
        for (std::size_t ti = 0; ti < acc[li].size(); ++ti)
            for (std::size_t i = 0; i < acc[li][ti].data.size(); ++i)
                acc[li][ti].data[i] += g[li][ti].data[i];
}

template <class T>
double mean_loss(const std::vector<LayerSpec>& net, const Weights<T>& w,
                 const std::vector<Sample<T>>& data) {
    if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
    double acc = 0.0;
    for (const auto& s : data) {
        const auto out = forward(net, w, s.x);
        const double d = static_cast<double>(out[0]) - static_cast<double>(s.y);
        acc += d * d;
    }
    return acc / static_cast<double>(data.size());
}

}  // namespace detail

/// Mini-batch training with Adam. Per-sample gradients are computed into
/// per-sample slots (parallelizable) and summed in index order, so the
/// result is bit-identical for any thread count.
template <class T>
Weights<T> train(const std::vector<LayerSpec>& net, const std::vector<Sample<T>>& data,
                 const std::vector<Sample<T>>& validation, const TrainConfig& cfg,
                 Weights<T> w = {}) {
    if (data.empty()) throw std::invalid_argument("train: empty data");
    if (cfg.batch == 0) throw std::invalid_argument("train: zero batch size");
    if (w.empty()) w = init_weights<T>(net, cfg.seed);
    auto adam = AdamState<T>::init(net);
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    const std::size_t threads = std::max<std::size_t>(1, cfg.threads);
    std::vector<BackwardResult<T>> per_sample(std::min(cfg.batch, data.size()));
    std::vector<T> outs(per_sample.size());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_sq = 0.0;
        for (std::size_t start = 0; start < data.size(); start += cfg.batch) {
            const std::size_t bs = std::min(cfg.batch, data.size() - start);
            auto work = [&](std::size_t lo, std::size_t hi) {
                Cache<T> cache;
                for (std::size_t b = lo; b < hi; ++b) {
                    const auto& s = data[order[start + b]];
                    const auto out = forward(net, w, s.x, &cache);
                    outs[b] = out[0];
                    const T g = T(2) * (out[0] - s.y) / static_cast<T>(bs);
                    per_sample[b] = backward(net, w, cache, std::vector<T>{g});
                }
            };
            if (threads <= 1 || bs < 2 * threads) {
                work(0, bs);
            } else {
                std::vector<std::thread> pool;
                const std::size_t chunk = (bs + threads - 1) / threads;
                for (std::size_t t = 0; t < threads; ++t) {
                    const std::size_t lo = t * chunk, hi = std::min(bs, lo + chunk);
                    if (lo < hi) pool.emplace_back(work, lo, hi);
                }
                for (auto& th : pool) th.join();
            }
            Weights<T> grad = zero_weights<T>(net);
            double batch_loss = 0.0;
            for (std::size_t b = 0; b < bs; ++b) {
                detail::accumulate(grad, per_sample[b].grad);
                const double d =
                    static_cast<double>(outs[b]) - static_cast<double>(data[order[start + b]].y);
                batch_loss += d * d;
                epoch_sq += d * d;
            }
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch));
            adam_step(adam, w, grad);
        }
        if (cfg.on_epoch) {
            const double val = detail::mean_loss(net, w, validation);
            cfg.on_epoch(epoch, epoch_sq / static_cast<double>(data.size()), val);
        }
    }
    return w;
}

}  // namespace halow::nn

#endif
