// SPDX-License-Identifier: Apache-2.0
#ifndef HALOW_NN_TENSOR_HPP
#define HALOW_NN_TENSOR_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "halow/rng.hpp"

namespace halow::nn {

template <class T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        data.assign(n, T(0));
    }
    std::size_t numel() const { return data.size(); }
};

enum class LayerKind { dense, relu, tanh_act, conv1d, lstm, gru };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::relu: return "relu";
        case LayerKind::tanh_act: return "tanh";
        case LayerKind::conv1d: return "conv1d";
        case LayerKind::lstm: return "lstm";
        case LayerKind::gru: return "gru";
    }
    return "?";
}

inline LayerKind layer_kind_from_name(const std::string& s) {
    if (s == "dense") return LayerKind::dense;
    if (s == "relu") return LayerKind::relu;
    if (s == "tanh") return LayerKind::tanh_act;
    if (s == "conv1d") return LayerKind::conv1d;
    if (s == "lstm") return LayerKind::lstm;
    if (s == "gru") return LayerKind::gru;
    throw std::invalid_argument("unknown layer kind: " + s);
}

/// One layer of a sequential network. Only the fields of the active kind
/// are meaningful; conv1d stride is fixed at 1.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t in = 0, out = 0;                              // dense
    std::size_t filter_len = 0, in_channels = 0, out_channels = 0;  // conv1d
    std::size_t units = 0, features = 0, steps = 0;           // lstm/gru

    static LayerSpec dense(std::size_t in, std::size_t out) {
        LayerSpec s;
        s.kind = LayerKind::dense;
        s.in = in;
        s.out = out;
        return s;
    }
    static LayerSpec relu() { return LayerSpec{}; }
    static LayerSpec tanh_act() {
        LayerSpec s;
        s.kind = LayerKind::tanh_act;
        return s;
    }
    static LayerSpec conv1d(std::size_t filter_len, std::size_t in_ch, std::size_t out_ch) {
        LayerSpec s;
        s.kind = LayerKind::conv1d;
        s.filter_len = filter_len;
        s.in_channels = in_ch;
        s.out_channels = out_ch;
        return s;
    }
    static LayerSpec lstm(std::size_t units, std::size_t features, std::size_t steps) {
        LayerSpec s;
        s.kind = LayerKind::lstm;
        s.units = units;
        s.features = features;
        s.steps = steps;
        return s;
    }
    static LayerSpec gru(std::size_t units, std::size_t features, std::size_t steps) {
        LayerSpec s = lstm(units, features, steps);
        s.kind = LayerKind::gru;
        return s;
    }

    /// Output length for a given input length; throws on any mismatch.
    std::size_t out_len(std::size_t in_len) const {
        switch (kind) {
            case LayerKind::dense:
                if (in_len != in) throw std::invalid_argument("dense: input length mismatch");
                if (in == 0 || out == 0) throw std::invalid_argument("dense: zero dimension");
                return out;
            case LayerKind::relu:
            case LayerKind::tanh_act:
                return in_len;
            case LayerKind::conv1d: {
                if (filter_len == 0 || in_channels == 0 || out_channels == 0)
                    throw std::invalid_argument("conv1d: zero dimension");
                if (in_len % in_channels != 0)
                    throw std::invalid_argument("conv1d: input not divisible by channels");
                const std::size_t w_in = in_len / in_channels;
                if (w_in < filter_len) throw std::invalid_argument("conv1d: input shorter than filter");
                return out_channels * (w_in - filter_len + 1);
            }
            case LayerKind::lstm:
            case LayerKind::gru:
                if (units == 0 || features == 0 || steps == 0)
                    throw std::invalid_argument("recurrent: zero dimension");
                if (in_len != features * steps)
                    throw std::invalid_argument("recurrent: input length != steps*features");
                return units;
        }
        throw std::invalid_argument("unknown layer kind");
    }
};

/// Parameter tensors per layer, in a fixed order:
///   dense:  W (out x in), b (out)
///   conv1d: W (out_ch x in_ch x F), b (out_ch)
///   lstm:   W_ih (4U x NF), W_hh (4U x U), b_ih (4U), b_hh (4U), gates i,f,g,o
///   gru:    W_ih (3U x NF), W_hh (3U x U), b_ih (3U), b_hh (3U), gates r,z,n
template <class T>
using Weights = std::vector<std::vector<Tensor<T>>>;

inline std::vector<std::vector<std::vector<std::size_t>>> param_shapes(
    const std::vector<LayerSpec>& net) {
    std::vector<std::vector<std::vector<std::size_t>>> out;
    for (const auto& l : net) {
        switch (l.kind) {
            case LayerKind::dense:
                out.push_back({{l.out, l.in}, {l.out}});
                break;
            case LayerKind::conv1d:
                out.push_back({{l.out_channels, l.in_channels, l.filter_len}, {l.out_channels}});
                break;
            case LayerKind::lstm:
                out.push_back({{4 * l.units, l.features},
                               {4 * l.units, l.units},
                               {4 * l.units},
                               {4 * l.units}});
                break;
            case LayerKind::gru:
                out.push_back({{3 * l.units, l.features},
                               {3 * l.units, l.units},
                               {3 * l.units},
                               {3 * l.units}});
                break;
            default:
                out.push_back({});
        }
    }
    return out;
}

template <class T>
Weights<T> zero_weights(const std::vector<LayerSpec>& net) {
    Weights<T> w;
    for (const auto& shapes : param_shapes(net)) {
        std::vector<Tensor<T>> layer;
        for (const auto& s : shapes) layer.emplace_back(s);
        w.push_back(std::move(layer));
    }
    return w;
}

/// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) for every parameter of a
/// layer, biases included; the LSTM forget-gate bias then gets +1.0.
/// Draw order (layer, tensor, element) is part of the seed contract.
template <class T>
Weights<T> init_weights(const std::vector<LayerSpec>& net, std::uint64_t seed) {
    Weights<T> w = zero_weights<T>(net);
    std::mt19937_64 rng(seed);
    for (std::size_t li = 0; li < net.size(); ++li) {
        const auto& l = net[li];
        double fan_in = 1.0;
        switch (l.kind) {
            case LayerKind::dense: fan_in = static_cast<double>(l.in); break;
            case LayerKind::conv1d:
                fan_in = static_cast<double>(l.filter_len * l.in_channels);
                break;
            case LayerKind::lstm:
            case LayerKind::gru:
                fan_in = static_cast<double>(l.units);
                break;
            default: continue;
        }
        const double bound = std::sqrt(1.0 / fan_in);
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& t : w[li])
            for (auto& v : t.data) v = static_cast<T>(u(rng));
        if (l.kind == LayerKind::lstm) {
            for (std::size_t j = l.units; j < 2 * l.units; ++j)
                w[li][2].data[j] += T(1);  // forget-gate bias
        }
    }
    return w;
}

}  // namespace halow::nn

#endif
