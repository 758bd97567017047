// SPDX-License-Identifier: Apache-2.0
#ifndef HALOW_MODELS_HPP
#define HALOW_MODELS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "halow/nn/checkpoint.hpp"
#include "halow/nn/layers.hpp"
#include "halow/nn/tensor.hpp"
#include "halow/nn/train.hpp"
#include "halow/records.hpp"

namespace halow {

inline constexpr double cfo_label_scale_hz = 15625.0;  // delta_f / 2
inline constexpr std::size_t stf_sample_count = 160;

inline const std::vector<std::size_t>& supported_block_lengths() {
    static const std::vector<std::size_t> v{40, 80, 160, 320, 800, 1600};
    return v;
}

/// Regression label convention for the detector: tau/B for a start in
/// [0, B-1], -1 for "no packet"; decisions threshold at -0.5.
struct LabelCodec {
    std::size_t block_len = 40;
    float no_packet_code = -1.0f;

    float encode(long tau) const {
        if (tau < 0) return no_packet_code;
        if (tau >= static_cast<long>(block_len))
            throw std::invalid_argument("LabelCodec: tau out of range");
        return static_cast<float>(tau) / static_cast<float>(block_len);
    }
    std::optional<long> decode(float v) const {
        if (v < -0.5f) return std::nullopt;
        const long b = static_cast<long>(block_len);
        return std::clamp(std::lround(v * static_cast<float>(block_len)), 0l, b - 1);
    }
};

/// 1D-CNN packet detector operating on fixed-length amplitude blocks
/// reshaped to 4 channels.
struct DetectorModel {
    std::size_t block_len = 40;
    std::size_t input_channels = 4;
    bool contiguous_split = false;  // default: polyphase interleave
    std::vector<nn::LayerSpec> net;
    nn::Weights<float> weights;

    LabelCodec codec() const { return LabelCodec{block_len, -1.0f}; }
};

/// Builds the detector and audits every intermediate width; throws if the
/// architecture arithmetic does not close.
inline DetectorModel make_detector(std::size_t block_len, std::uint64_t seed) {
    const auto& ok = supported_block_lengths();
    if (std::find(ok.begin(), ok.end(), block_len) == ok.end())
        throw std::invalid_argument("make_detector: unsupported block length");
    DetectorModel m;
    m.block_len = block_len;
    const std::size_t w0 = block_len / 4;
    const std::size_t w1 = w0 - 7;  // after F=8 conv
    const std::size_t w2 = w1 - 2;  // after F=3 conv
    m.net = {nn::LayerSpec::conv1d(8, 4, 9),      nn::LayerSpec::relu(),
             nn::LayerSpec::conv1d(3, 9, 5),      nn::LayerSpec::relu(),
             nn::LayerSpec::dense(5 * w2, 3),     nn::LayerSpec::relu(),
             nn::LayerSpec::dense(3, 1)};
    std::size_t len = block_len;
    for (const auto& l : m.net) len = l.out_len(len);
    if (len != 1 || m.net[0].out_len(block_len) != 9 * w1 || m.net[2].out_len(9 * w1) != 5 * w2)
        throw std::logic_error("make_detector: width audit failed");
    m.weights = nn::init_weights<float>(m.net, seed);
    return m;
}

enum class CellKind { lstm, gru };

/// CFO regressor over the 160 STF phases: either the 4-layer ReLU DNN or
/// a 30-unit recurrent cell over 10 steps of 16 features with a small
/// dense head.
struct CfoModel {
    std::string kind;  // "dnn" | "lstm" | "gru"
    std::vector<nn::LayerSpec> net;
    nn::Weights<float> weights;
};

inline CfoModel make_cfo_dnn(std::uint64_t seed) {
    CfoModel m;
    m.kind = "dnn";
    m.net = {nn::LayerSpec::dense(160, 32), nn::LayerSpec::relu(),
             nn::LayerSpec::dense(32, 64),  nn::LayerSpec::relu(),
             nn::LayerSpec::dense(64, 16),  nn::LayerSpec::relu(),
             nn::LayerSpec::dense(16, 1)};
    m.weights = nn::init_weights<float>(m.net, seed);
    return m;
}

inline CfoModel make_cfo_rnn(CellKind cell, std::uint64_t seed) {
    CfoModel m;
    m.kind = cell == CellKind::lstm ? "lstm" : "gru";
    m.net = {cell == CellKind::lstm ? nn::LayerSpec::lstm(30, 16, 10)
                                    : nn::LayerSpec::gru(30, 16, 10),
             nn::LayerSpec::dense(30, 5), nn::LayerSpec::relu(), nn::LayerSpec::dense(5, 1)};
    m.weights = nn::init_weights<float>(m.net, seed);
    return m;
}

namespace detail {

/// RMS-normalized 4-channel view of an amplitude block. Polyphase
/// interleave sends sample n to channel n mod 4, position n/4, so a start
/// instant lands at the same filter position in every channel.
inline std::vector<float> detector_input(const DetectorModel& m, const std::vector<float>& block) {
    if (block.size() != m.block_len)
        throw std::invalid_argument("detector input: wrong block length");
    double sq = 0.0;
    for (float v : block) sq += static_cast<double>(v) * static_cast<double>(v);
    const float rms = static_cast<float>(std::sqrt(sq / static_cast<double>(block.size())));
    const float inv = rms > 0.0f ? 1.0f / rms : 0.0f;
    const std::size_t C = m.input_channels, W = m.block_len / C;
    std::vector<float> x(block.size());
    for (std::size_t n = 0; n < block.size(); ++n) {
        const std::size_t c = m.contiguous_split ? n / W : n % C;
        const std::size_t p = m.contiguous_split ? n % W : n / C;
        x[c * W + p] = block[n] * inv;
    }
    return x;
}

/// Phases normalized by pi, the CFO models' input convention.
inline std::vector<float> cfo_input(const std::vector<float>& phases) {
    if (phases.size() != stf_sample_count)
        throw std::invalid_argument("cfo input: expected 160 phase samples");
    std::vector<float> x(phases.size());
    for (std::size_t i = 0; i < phases.size(); ++i)
        x[i] = phases[i] / static_cast<float>(std::numbers::pi);
    return x;
}

}  // namespace detail

struct DetectorDecision {
    bool detected = false;
    std::optional<long> tau_hat;
    float raw = 0.0f;  // network output before decoding
};

inline DetectorDecision detector_infer(const DetectorModel& m, const std::vector<float>& block) {
    const auto x = detail::detector_input(m, block);
    const auto out = nn::forward(m.net, m.weights, x);
    DetectorDecision d;
    d.raw = out[0];
    d.tau_hat = m.codec().decode(d.raw);
    d.detected = d.tau_hat.has_value();
    return d;
}

inline double cfo_infer(const CfoModel& m, const std::vector<float>& phases) {
    const auto x = detail::cfo_input(phases);
    const auto out = nn::forward(m.net, m.weights, x);
    return static_cast<double>(out[0]) * cfo_label_scale_hz;
}

/// Training views apply exactly the inference-side normalizations.
inline std::vector<nn::Sample<float>> build_training_view(const DetectorModel& m,
                                                          const std::vector<DetectionRecord>& recs) {
    std::vector<nn::Sample<float>> out;
    out.reserve(recs.size());
    const auto codec = m.codec();
    for (const auto& r : recs)
        out.push_back({detail::detector_input(m, r.block),
                       r.label < 0.0f ? codec.no_packet_code
                                      : codec.encode(std::lround(r.label))});
    return out;
}

inline std::vector<nn::Sample<float>> build_training_view(const std::vector<CfoRecord>& recs) {
    std::vector<nn::Sample<float>> out;
    out.reserve(recs.size());
    for (const auto& r : recs)
        out.push_back({detail::cfo_input(r.phases),
                       static_cast<float>(r.label_hz / cfo_label_scale_hz)});
    return out;
}

inline void save_detector(const std::string& base, const DetectorModel& m,
                          nlohmann::json extra = {}) {
    if (!extra.is_object()) extra = nlohmann::json::object();
    extra["model_kind"] = "detector";
    extra["block_len"] = m.block_len;
    extra["contiguous_split"] = m.contiguous_split;
    nn::save_checkpoint(base, m.net, m.weights, extra);
}

inline DetectorModel load_detector(const std::string& base) {
    auto ck = nn::load_checkpoint<float>(base);
    if (ck.manifest.value("model_kind", "") != "detector")
        throw std::runtime_error("load_detector: checkpoint is not a detector");
    DetectorModel m;
    m.block_len = ck.manifest.at("block_len").get<std::size_t>();
    m.contiguous_split = ck.manifest.value("contiguous_split", false);
    m.net = std::move(ck.net);
    m.weights = std::move(ck.weights);
    return m;
}

inline void save_cfo_model(const std::string& base, const CfoModel& m,
                           nlohmann::json extra = {}) {
    if (!extra.is_object()) extra = nlohmann::json::object();
    extra["model_kind"] = "cfo_" + m.kind;
    nn::save_checkpoint(base, m.net, m.weights, extra);
}

inline CfoModel load_cfo_model(const std::string& base) {
    auto ck = nn::load_checkpoint<float>(base);
    const std::string mk = ck.manifest.value("model_kind", "");
    if (mk.rfind("cfo_", 0) != 0)
        throw std::runtime_error("load_cfo_model: checkpoint is not a CFO model");
    CfoModel m;
    m.kind = mk.substr(4);
    m.net = std::move(ck.net);
    m.weights = std::move(ck.weights);
    return m;
}

}  // namespace halow

#endif
