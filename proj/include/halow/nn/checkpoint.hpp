// SPDX-License-Identifier: Apache-2.0
#ifndef HALOW_NN_CHECKPOINT_HPP
#define HALOW_NN_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "halow/nn/tensor.hpp"

namespace halow::nn {

inline nlohmann::json layer_to_json(const LayerSpec& l) {
    nlohmann::json j;
    j["kind"] = layer_kind_name(l.kind);
    switch (l.kind) {
        case LayerKind::dense:
            j["in"] = l.in;
            j["out"] = l.out;
            break;
        case LayerKind::conv1d:
            j["filter_len"] = l.filter_len;
            j["in_channels"] = l.in_channels;
            j["out_channels"] = l.out_channels;
            break;
        case LayerKind::lstm:
        case LayerKind::gru:
            j["units"] = l.units;
            j["features"] = l.features;
            j["steps"] = l.steps;
            break;
        default: break;
    }
    return j;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
    LayerSpec l;
    l.kind = layer_kind_from_name(j.at("kind").get<std::string>());
    switch (l.kind) {
        case LayerKind::dense:
            l.in = j.at("in").get<std::size_t>();
            l.out = j.at("out").get<std::size_t>();
            break;
        case LayerKind::conv1d:
            l.filter_len = j.at("filter_len").get<std::size_t>();
            l.in_channels = j.at("in_channels").get<std::size_t>();
            l.out_channels = j.at("out_channels").get<std::size_t>();
            break;
        case LayerKind::lstm:
        case LayerKind::gru:
            l.units = j.at("units").get<std::size_t>();
            l.features = j.at("features").get<std::size_t>();
            l.steps = j.at("steps").get<std::size_t>();
            break;
        default: break;
    }
    return l;
}

/// Checkpoint = `<base>.json` manifest + `<base>.bin` little-endian f32
/// parameter blob. The manifest records the architecture, per-tensor byte
/// offsets into the blob, and any caller metadata (model_kind, block_len,
/// seeds, hyperparameters).
template <class T>
void save_checkpoint(const std::string& base, const std::vector<LayerSpec>& net,
                     const Weights<T>& w, const nlohmann::json& extra = {}) {
    nlohmann::json man;
    man["format"] = "CK01";
    man["layers"] = nlohmann::json::array();
    for (const auto& l : net) man["layers"].push_back(layer_to_json(l));

    std::vector<float> blob;
    nlohmann::json offsets = nlohmann::json::array();
    for (const auto& layer : w) {
        nlohmann::json per_layer = nlohmann::json::array();
        for (const auto& t : layer) {
            per_layer.push_back(blob.size() * sizeof(float));
            for (const auto& v : t.data) blob.push_back(static_cast<float>(v));
        }
        offsets.push_back(per_layer);
    }
    man["offsets"] = offsets;
    man["blob_bytes"] = blob.size() * sizeof(float);
    if (extra.is_object())
        for (auto it = extra.begin(); it != extra.end(); ++it) man[it.key()] = it.value();

    std::ofstream jf(base + ".json", std::ios::binary | std::ios::trunc);
    if (!jf) throw std::runtime_error("save_checkpoint: cannot open " + base + ".json");
    jf << man.dump(2) << "\n";

    std::ofstream bf(base + ".bin", std::ios::binary | std::ios::trunc);
    if (!bf) throw std::runtime_error("save_checkpoint: cannot open " + base + ".bin");
    for (float v : blob) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        const unsigned char b[4] = {static_cast<unsigned char>(u & 0xff),
                                    static_cast<unsigned char>((u >> 8) & 0xff),
                                    static_cast<unsigned char>((u >> 16) & 0xff),
                                    static_cast<unsigned char>((u >> 24) & 0xff)};
        bf.write(reinterpret_cast<const char*>(b), 4);
    }
    if (!bf) throw std::runtime_error("save_checkpoint: write failed");
}

template <class T>
struct Checkpoint {
    std::vector<LayerSpec> net;
    Weights<T> weights;
    nlohmann::json manifest;
};

template <class T>
Checkpoint<T> load_checkpoint(const std::string& base) {
    std::ifstream jf(base + ".json", std::ios::binary);
    if (!jf) throw std::runtime_error("load_checkpoint: cannot open " + base + ".json");
    Checkpoint<T> ck;
    jf >> ck.manifest;
    if (ck.manifest.value("format", "") != "CK01")
        throw std::runtime_error("load_checkpoint: bad manifest format");
    for (const auto& lj : ck.manifest.at("layers")) ck.net.push_back(layer_from_json(lj));

    std::ifstream bf(base + ".bin", std::ios::binary);
    if (!bf) throw std::runtime_error("load_checkpoint: cannot open " + base + ".bin");
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(bf)),
                                   std::istreambuf_iterator<char>());
    if (raw.size() != ck.manifest.at("blob_bytes").template get<std::size_t>())
        throw std::runtime_error("load_checkpoint: blob size mismatch");

    ck.weights = zero_weights<T>(ck.net);
    const auto& offsets = ck.manifest.at("offsets");
    for (std::size_t li = 0; li < ck.weights.size(); ++li)
        for (std::size_t ti = 0; ti < ck.weights[li].size(); ++ti) {
            std::size_t off = offsets.at(li).at(ti).template get<std::size_t>();
            for (auto& v : ck.weights[li][ti].data) {
                if (off + 4 > raw.size())
                    throw std::runtime_error("load_checkpoint: truncated blob");
                std::uint32_t u = static_cast<std::uint32_t>(raw[off]) |
                                  (static_cast<std::uint32_t>(raw[off + 1]) << 8) |
                                  (static_cast<std::uint32_t>(raw[off + 2]) << 16) |
                                  (static_cast<std::uint32_t>(raw[off + 3]) << 24);
                float f;
                std::memcpy(&f, &u, 4);
                v = static_cast<T>(f);
                off += 4;
            }
        }
    return ck;
}

}  // namespace halow::nn

#endif
