// SPDX-License-Identifier: Apache-2.0
#ifndef HALOW_CHANNEL_HPP
#define HALOW_CHANNEL_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "halow/waveform.hpp"

namespace halow {

struct FadingTap {
    double delay_s = 0.0;
    double mean_power_db = 0.0;
};

/// Tapped delay line profile. Tap mean powers are normalized to sum to
/// 0 dB, so the expected output power of the faded signal equals the
/// input power; per-packet tap gains are complex Gaussian draws.
struct FadingProfile {
    std::vector<FadingTap> taps;
    bool rayleigh = true;  // false: deterministic unit gains (identity-like)

    static FadingProfile identity() {
        FadingProfile p;
        p.taps = {{0.0, 0.0}};
        p.rayleigh = false;
        return p;
    }

    /// Model-B stand-in: 9 taps at 10 ns spacing with ~-4.3 dB/tap
    /// exponential decay (about 15 ns RMS delay spread). At 1 MHz this
    /// behaves as near-flat per-packet Rayleigh fading.
    static FadingProfile model_b() {
        FadingProfile p;
        for (int k = 0; k < 9; ++k)
            p.taps.push_back({k * 10e-9, -4.3 * k});
        return p;
    }

    static FadingProfile from_json(const nlohmann::json& j) {
        FadingProfile p;
        for (const auto& t : j.at("taps"))
            p.taps.push_back({t.at("delay_ns").get<double>() * 1e-9,
                              t.at("power_db").get<double>()});
        if (j.contains("rayleigh")) p.rayleigh = j["rayleigh"].get<bool>();
        return p;
    }
};

enum class ChannelKind { identity, awgn_only, multipath };

/// Per-packet impairment description.
struct ChannelConfig {
    double snr_db = 20.0;           // +inf disables noise
    double cfo_hz = 0.0;
    long timing_offset = 0;         // samples at 1 MHz
    ChannelKind fading = ChannelKind::awgn_only;
    std::uint64_t seed = 0;
};

/// Tapped-delay-line convolution with per-packet complex Gaussian tap
/// gains. Tap delays are rounded to the waveform's own sample grid.
inline Waveform apply_multipath(const Waveform& w, const FadingProfile& profile,
                                std::uint64_t seed) {
    if (profile.taps.empty()) throw std::invalid_argument("apply_multipath: empty profile");
    double total = 0.0;
    long max_delay = 0;
    for (const auto& t : profile.taps) {
        if (t.delay_s > 10e-6)
            throw std::invalid_argument("apply_multipath: tap delay beyond 10 us");
        total += std::pow(10.0, t.mean_power_db / 10.0);
        max_delay = std::max(max_delay, std::lround(t.delay_s * w.sample_rate));
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    // Impulse response on the sample grid; powers normalized to sum to 1.
    std::vector<cplx> h(static_cast<std::size_t>(max_delay) + 1, cplx(0.0, 0.0));
    for (const auto& t : profile.taps) {
        const double p = std::pow(10.0, t.mean_power_db / 10.0) / total;
        const std::size_t d = static_cast<std::size_t>(std::lround(t.delay_s * w.sample_rate));
        cplx g;
        if (profile.rayleigh) {
            const double s = std::sqrt(p / 2.0);
            const double re = gauss(rng);  // draw order is part of the seed contract
            const double im = gauss(rng);
            g = cplx(re * s, im * s);
        } else {
            g = cplx(std::sqrt(p), 0.0);
        }
        h[d] += g;
    }
    Waveform out = w;
    for (std::size_t n = 0; n < w.samples.size(); ++n) {
        cplx acc = 0.0;
        for (std::size_t d = 0; d < h.size() && d <= n; ++d)
            acc += h[d] * w.samples[n - d];
        out.samples[n] = acc;
    }
    return out;
}

/// y_n = x_n e^{j 2 pi f n / rate}. Preserves per-sample magnitude.
inline Waveform apply_cfo(const Waveform& w, double cfo_hz) {
    Waveform out = w;
    const double step = 2.0 * std::numbers::pi * cfo_hz / w.sample_rate;
    for (std::size_t n = 0; n < w.samples.size(); ++n)
        out.samples[n] = w.samples[n] * std::polar(1.0, step * static_cast<double>(n));
    return out;
}

/// Circularly-symmetric complex Gaussian noise with
/// variance = signal_power / 10^(snr_db/10). snr_db = +inf is the identity.
inline Waveform add_awgn(const Waveform& w, double snr_db, std::uint64_t seed) {
    if (std::isinf(snr_db) && snr_db > 0) return w;
    const double var = mean_power(w) / std::pow(10.0, snr_db / 10.0);
    const double s = std::sqrt(var / 2.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Waveform out = w;
    for (auto& v : out.samples) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        v += cplx(re * s, im * s);
    }
    return out;
}

namespace detail {

/// Place an (already noisy) packet into a fresh noise floor. `pos` may be
/// negative or beyond the buffer; out-of-range packet samples are clipped,
/// which is how mid- and tail-of-packet blocks are produced.
inline Waveform place_in_noise(const Waveform& w, long pos, std::size_t total_len,
                               double noise_var, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double s = std::sqrt(noise_var / 2.0);
    Waveform out;
    out.sample_rate = w.sample_rate;
    out.oversample_factor = w.oversample_factor;
    out.samples.resize(total_len);
    for (auto& v : out.samples) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        v = cplx(re * s, im * s);
    }
    for (std::size_t k = 0; k < w.samples.size(); ++k) {
        const long i = pos + static_cast<long>(k);
        if (i >= 0 && i < static_cast<long>(total_len))
            out.samples[static_cast<std::size_t>(i)] = w.samples[k];
    }
    return out;
}

/// Noise floor implied by a noisy packet whose in-band SNR is snr_db:
/// measured power is signal + noise, so the floor is power/(snr+1).
inline double noise_floor(const Waveform& noisy_packet, double snr_db) {
    if (std::isinf(snr_db) && snr_db > 0) return 0.0;
    return mean_power(noisy_packet) / (std::pow(10.0, snr_db / 10.0) + 1.0);
}

}  // namespace detail

/// Surround the packet with noise-only samples at the packet's own noise
/// floor; the packet start lands at exactly `offset`.
inline Waveform embed_in_noise(const Waveform& w, std::size_t offset, std::size_t total_len,
                               double snr_db, std::uint64_t seed) {
    if (offset + w.samples.size() > total_len)
        throw std::invalid_argument("embed_in_noise: packet does not fit");
    return detail::place_in_noise(w, static_cast<long>(offset), total_len,
                                  detail::noise_floor(w, snr_db), seed);
}

}  // namespace halow

#endif
