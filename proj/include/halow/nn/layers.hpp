// SPDX-License-Identifier: Apache-2.0
#ifndef HALOW_NN_LAYERS_HPP
#define HALOW_NN_LAYERS_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "halow/nn/tensor.hpp"

namespace halow::nn {

/// Intermediates recorded by forward, consumed by backward. Slot layout
/// per layer kind:
///   dense/conv1d/relu: {input}
///   tanh:              {output}
///   lstm: {input, h ((T+1)*U, h_0 first), c ((T+1)*U), gates (T*4U, i,f,g,o)}
///   gru:  {input, h ((T+1)*U), rz (T*2U), n (T*U), hn_pre (T*U)}
template <class T>
struct Cache {
    std::vector<std::vector<std::vector<T>>> slots;
};

namespace detail {

template <class T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

template <class T>
std::vector<T> lstm_forward(const LayerSpec& l, const std::vector<Tensor<T>>& w,
                            const std::vector<T>& x, std::vector<std::vector<T>>* slot) {
    const std::size_t U = l.units, NF = l.features, Ts = l.steps;
    const auto& wih = w[0].data;
    const auto& whh = w[1].data;
    const auto& bih = w[2].data;
    const auto& bhh = w[3].data;
    std::vector<T> h((Ts + 1) * U, T(0)), c((Ts + 1) * U, T(0)), gates(Ts * 4 * U);
    std::vector<T> a(4 * U);
    for (std::size_t t = 0; t < Ts; ++t) {
        const T* xt = x.data() + t * NF;
        const T* hp = h.data() + t * U;
        for (std::size_t j = 0; j < 4 * U; ++j) {
            T acc = bih[j] + bhh[j];
            for (std::size_t k = 0; k < NF; ++k) acc += wih[j * NF + k] * xt[k];
            for (std::size_t k = 0; k < U; ++k) acc += whh[j * U + k] * hp[k];
            a[j] = acc;
        }
        T* g = gates.data() + t * 4 * U;
        for (std::size_t j = 0; j < U; ++j) {
            const T gi = sigmoid(a[j]);
            const T gf = sigmoid(a[U + j]);
            const T gg = std::tanh(a[2 * U + j]);
            const T go = sigmoid(a[3 * U + j]);
            g[j] = gi;
            g[U + j] = gf;
            g[2 * U + j] = gg;
            g[3 * U + j] = go;
            const T ct = gf * c[t * U + j] + gi * gg;
            c[(t + 1) * U + j] = ct;
            h[(t + 1) * U + j] = go * std::tanh(ct);
        }
    }
    std::vector<T> out(h.begin() + Ts * U, h.end());
    if (slot) *slot = {x, std::move(h), std::move(c), std::move(gates)};
    return out;
}

template <class T>
std::vector<T> gru_forward(const LayerSpec& l, const std::vector<Tensor<T>>& w,
                           const std::vector<T>& x, std::vector<std::vector<T>>* slot) {
    const std::size_t U = l.units, NF = l.features, Ts = l.steps;
    const auto& wih = w[0].data;
    const auto& whh = w[1].data;
    const auto& bih = w[2].data;
    const auto& bhh = w[3].data;
    std::vector<T> h((Ts + 1) * U, T(0)), rz(Ts * 2 * U), nn(Ts * U), hnp(Ts * U);
    std::vector<T> ai(3 * U), ah(3 * U);
    for (std::size_t t = 0; t < Ts; ++t) {
        const T* xt = x.data() + t * NF;
        const T* hp = h.data() + t * U;
        for (std::size_t j = 0; j < 3 * U; ++j) {
            T acc = bih[j];
            for (std::size_t k = 0; k < NF; ++k) acc += wih[j * NF + k] * xt[k];
            ai[j] = acc;
            acc = bhh[j];
            for (std::size_t k = 0; k < U; ++k) acc += whh[j * U + k] * hp[k];
            ah[j] = acc;
        }
        for (std::size_t j = 0; j < U; ++j) {
            const T r = sigmoid(ai[j] + ah[j]);
            const T z = sigmoid(ai[U + j] + ah[U + j]);
            const T pre = ah[2 * U + j];  // W_hn h + b_hn, gated by r
            const T n = std::tanh(ai[2 * U + j] + r * pre);
            rz[t * 2 * U + j] = r;
            rz[t * 2 * U + U + j] = z;
            nn[t * U + j] = n;
            hnp[t * U + j] = pre;
            h[(t + 1) * U + j] = (T(1) - z) * n + z * hp[j];
        }
    }
    std::vector<T> out(h.begin() + Ts * U, h.end());
    if (slot) *slot = {x, std::move(h), std::move(rz), std::move(nn), std::move(hnp)};
    return out;
}

}  // namespace detail

/// Sequential forward pass; validates shapes layer by layer. When `cache`
/// is supplied the per-layer intermediates needed by backward are stored.
template <class T>
std::vector<T> forward(const std::vector<LayerSpec>& net, const Weights<T>& w,
                       std::vector<T> x, Cache<T>* cache = nullptr) {
    if (w.size() != net.size()) throw std::invalid_argument("forward: weights/net size mismatch");
    if (cache) cache->slots.assign(net.size(), {});
    for (std::size_t li = 0; li < net.size(); ++li) {
        const auto& l = net[li];
        const std::size_t out_n = l.out_len(x.size());
        auto* slot = cache ? &cache->slots[li] : nullptr;
        switch (l.kind) {
            case LayerKind::dense: {
                const auto& W = w[li][0].data;
                const auto& b = w[li][1].data;
                std::vector<T> y(l.out);
                for (std::size_t j = 0; j < l.out; ++j) {
                    T acc = b[j];
                    for (std::size_t i = 0; i < l.in; ++i) acc += W[j * l.in + i] * x[i];
                    y[j] = acc;
                }
                if (slot) *slot = {std::move(x)};
                x = std::move(y);
                break;
            }
            case LayerKind::relu: {
                if (slot) *slot = {x};
                for (auto& v : x) v = v > T(0) ? v : T(0);
                break;
            }
            case LayerKind::tanh_act: {
                for (auto& v : x) v = std::tanh(v);
                if (slot) *slot = {x};
                break;
            }
            case LayerKind::conv1d: {
                const std::size_t F = l.filter_len, ci = l.in_channels, co = l.out_channels;
                const std::size_t w_in = x.size() / ci;
                const std::size_t K = w_in - F + 1;
                const auto& W = w[li][0].data;
                const auto& b = w[li][1].data;
                std::vector<T> y(out_n);
                for (std::size_t o = 0; o < co; ++o)
                    for (std::size_t k = 0; k < K; ++k) {
                        T acc = b[o];
                        for (std::size_t c = 0; c < ci; ++c) {
                            const T* xc = x.data() + c * w_in + k;
                            const T* wf = W.data() + (o * ci + c) * F;
                            for (std::size_t f = 0; f < F; ++f) acc += wf[f] * xc[f];
                        }
                        y[o * K + k] = acc;
                    }
                if (slot) *slot = {std::move(x)};
                x = std::move(y);
                break;
            }
            case LayerKind::lstm:
                x = detail::lstm_forward(l, w[li], x, slot);
                break;
            case LayerKind::gru:
                x = detail::gru_forward(l, w[li], x, slot);
                break;
        }
        (void)out_n;
    }
    return x;
}

namespace detail {

template <class T>
std::vector<T> lstm_backward(const LayerSpec& l, const std::vector<Tensor<T>>& w,
                             const std::vector<std::vector<T>>& slot,
                             const std::vector<T>& grad_out, std::vector<Tensor<T>>& gw) {
    const std::size_t U = l.units, NF = l.features, Ts = l.steps;
    const auto& x = slot[0];
    const auto& h = slot[1];
    const auto& c = slot[2];
    const auto& gates = slot[3];
    const auto& wih = w[0].data;
    const auto& whh = w[1].data;
    std::vector<T> dx(x.size(), T(0));
    std::vector<T> dh(grad_out), dc(U, T(0)), da(4 * U);
    for (std::size_t ti = Ts; ti-- > 0;) {
        const T* g = gates.data() + ti * 4 * U;
        const T* cp = c.data() + ti * U;
        const T* ct = c.data() + (ti + 1) * U;
        const T* hp = h.data() + ti * U;
        const T* xt = x.data() + ti * NF;
        for (std::size_t j = 0; j < U; ++j) {
            const T gi = g[j], gf = g[U + j], gg = g[2 * U + j], go = g[3 * U + j];
            const T tc = std::tanh(ct[j]);
            const T dcj = dc[j] + dh[j] * go * (T(1) - tc * tc);
            da[j] = dcj * gg * gi * (T(1) - gi);
            da[U + j] = dcj * cp[j] * gf * (T(1) - gf);
            da[2 * U + j] = dcj * gi * (T(1) - gg * gg);
            da[3 * U + j] = dh[j] * tc * go * (T(1) - go);
            dc[j] = dcj * gf;
        }
        for (std::size_t j = 0; j < 4 * U; ++j) {
            const T d = da[j];
            gw[2].data[j] += d;
            gw[3].data[j] += d;
            for (std::size_t k = 0; k < NF; ++k) gw[0].data[j * NF + k] += d * xt[k];
            for (std::size_t k = 0; k < U; ++k) gw[1].data[j * U + k] += d * hp[k];
        }
        std::fill(dh.begin(), dh.end(), T(0));
        for (std::size_t j = 0; j < 4 * U; ++j) {
            const T d = da[j];
            for (std::size_t k = 0; k < U; ++k) dh[k] += whh[j * U + k] * d;
            for (std::size_t k = 0; k < NF; ++k) dx[ti * NF + k] += wih[j * NF + k] * d;
        }
    }
    return dx;
}

template <class T>
std::vector<T> gru_backward(const LayerSpec& l, const std::vector<Tensor<T>>& w,
                            const std::vector<std::vector<T>>& slot,
                            const std::vector<T>& grad_out, std::vector<Tensor<T>>& gw) {
    const std::size_t U = l.units, NF = l.features, Ts = l.steps;
    const auto& x = slot[0];
    const auto& h = slot[1];
    const auto& rz = slot[2];
    const auto& nn = slot[3];
    const auto& hnp = slot[4];
    const auto& wih = w[0].data;
    const auto& whh = w[1].data;
    std::vector<T> dx(x.size(), T(0));
    std::vector<T> dh(grad_out), dai(3 * U), dah(3 * U), dhn(U);
    for (std::size_t ti = Ts; ti-- > 0;) {
        const T* hp = h.data() + ti * U;
        const T* xt = x.data() + ti * NF;
        for (std::size_t j = 0; j < U; ++j) {
            const T r = rz[ti * 2 * U + j];
            const T z = rz[ti * 2 * U + U + j];
            const T n = nn[ti * U + j];
            const T pre = hnp[ti * U + j];
            const T dz = dh[j] * (hp[j] - n);
            const T dn = dh[j] * (T(1) - z);
            const T dan = dn * (T(1) - n * n);
            const T dr = dan * pre;
            dhn[j] = dh[j] * z;  // direct path h_{t-1} -> h_t
            dai[j] = dr * r * (T(1) - r);
            dai[U + j] = dz * z * (T(1) - z);
            dai[2 * U + j] = dan;
            dah[j] = dai[j];
            dah[U + j] = dai[U + j];
            dah[2 * U + j] = dan * r;
        }
        for (std::size_t j = 0; j < 3 * U; ++j) {
            gw[2].data[j] += dai[j];
            gw[3].data[j] += dah[j];
            for (std::size_t k = 0; k < NF; ++k) gw[0].data[j * NF + k] += dai[j] * xt[k];
            for (std::size_t k = 0; k < U; ++k) gw[1].data[j * U + k] += dah[j] * hp[k];
        }
        for (std::size_t j = 0; j < U; ++j) dh[j] = dhn[j];
        for (std::size_t j = 0; j < 3 * U; ++j) {
            for (std::size_t k = 0; k < U; ++k) dh[k] += whh[j * U + k] * dah[j];
            for (std::size_t k = 0; k < NF; ++k) dx[ti * NF + k] += wih[j * NF + k] * dai[j];
        }
    }
    return dx;
}

}  // namespace detail

template <class T>
struct BackwardResult {
    Weights<T> grad;
    std::vector<T> input_grad;
};

/// Exact gradients of every parameter and of the input, given the cache
/// recorded by forward. Recurrent layers backpropagate through all steps.
template <class T>
BackwardResult<T> backward(const std::vector<LayerSpec>& net, const Weights<T>& w,
                           const Cache<T>& cache, const std::vector<T>& grad_out) {
    if (cache.slots.size() != net.size())
        throw std::invalid_argument("backward: cache/net size mismatch");
    BackwardResult<T> res;
    res.grad = zero_weights<T>(net);
    std::vector<T> g = grad_out;
    for (std::size_t li = net.size(); li-- > 0;) {
        const auto& l = net[li];
        const auto& slot = cache.slots[li];
        switch (l.kind) {
            case LayerKind::dense: {
                const auto& xin = slot[0];
                const auto& W = w[li][0].data;
                auto& gW = res.grad[li][0].data;
                auto& gb = res.grad[li][1].data;
                std::vector<T> gx(l.in, T(0));
                for (std::size_t j = 0; j < l.out; ++j) {
                    gb[j] += g[j];
                    for (std::size_t i = 0; i < l.in; ++i) {
                        gW[j * l.in + i] += g[j] * xin[i];
                        gx[i] += W[j * l.in + i] * g[j];
                    }
                }
                g = std::move(gx);
                break;
            }
            case LayerKind::relu: {
                const auto& xin = slot[0];
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (xin[i] <= T(0)) g[i] = T(0);
                break;
            }
            case LayerKind::tanh_act: {
                const auto& y = slot[0];
                for (std::size_t i = 0; i < g.size(); ++i) g[i] *= T(1) - y[i] * y[i];
                break;
            }
            case LayerKind::conv1d: {
                const auto& xin = slot[0];
                const std::size_t F = l.filter_len, ci = l.in_channels, co = l.out_channels;
                const std::size_t w_in = xin.size() / ci;
                const std::size_t K = w_in - F + 1;
                const auto& W = w[li][0].data;
                auto& gW = res.grad[li][0].data;
                auto& gb = res.grad[li][1].data;
                std::vector<T> gx(xin.size(), T(0));
                for (std::size_t o = 0; o < co; ++o)
                    for (std::size_t k = 0; k < K; ++k) {
                        const T go = g[o * K + k];
                        gb[o] += go;
                        for (std::size_t c = 0; c < ci; ++c) {
                            const T* xc = xin.data() + c * w_in + k;
                            T* gxc = gx.data() + c * w_in + k;
                            const T* wf = W.data() + (o * ci + c) * F;
                            T* gwf = gW.data() + (o * ci + c) * F;
                            for (std::size_t f = 0; f < F; ++f) {
                                gwf[f] += go * xc[f];
                                gxc[f] += go * wf[f];
                            }
                        }
                    }
                g = std::move(gx);
                break;
            }
            case LayerKind::lstm:
                g = detail::lstm_backward(l, w[li], slot, g, res.grad[li]);
                break;
            case LayerKind::gru:
                g = detail::gru_backward(l, w[li], slot, g, res.grad[li]);
                break;
        }
    }
    res.input_grad = std::move(g);
    return res;
}

}  // namespace halow::nn

#endif
