// SPDX-License-Identifier: Apache-2.0
#ifndef HALOW_RESAMPLE_HPP
#define HALOW_RESAMPLE_HPP

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "halow/waveform.hpp"

namespace halow {

namespace detail {

/// Hamming-windowed sinc lowpass. `cutoff` is normalized to the sampling
/// rate (0.5 = Nyquist). Tap count is forced odd so the group delay is an
/// integer number of samples.
inline std::vector<double> lowpass_taps(double cutoff, std::size_t taps) {
    if (taps % 2 == 0) ++taps;
    std::vector<double> h(taps);
    const long m = static_cast<long>(taps / 2);
    double sum = 0.0;
    for (std::size_t i = 0; i < taps; ++i) {
        const double t = static_cast<double>(static_cast<long>(i) - m);
        double v;
        if (t == 0.0)
            v = 2.0 * cutoff;
        else
            v = std::sin(2.0 * std::numbers::pi * cutoff * t) / (std::numbers::pi * t);
        v *= 0.54 + 0.46 * std::cos(std::numbers::pi * t / static_cast<double>(m));
        h[i] = v;
        sum += v;
    }
    for (auto& v : h) v /= sum;  // unity DC gain
    return h;
}

/// Convolve and drop the (taps-1)/2-sample group delay; output length equals
/// input length.
inline std::vector<cplx> filter_compensated(const std::vector<cplx>& x,
                                            const std::vector<double>& h) {
    const long m = static_cast<long>(h.size() / 2);
    std::vector<cplx> y(x.size());
    const long n = static_cast<long>(x.size());
    for (long i = 0; i < n; ++i) {
        cplx acc = 0.0;
        for (long k = 0; k < static_cast<long>(h.size()); ++k) {
            const long j = i + m - k;
            if (j >= 0 && j < n) acc += h[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(j)];
        }
        y[static_cast<std::size_t>(i)] = acc;
    }
    return y;
}

}  // namespace detail

/// Zero-stuff by `factor` and lowpass at the original Nyquist rate.
/// Group delay is compensated; output length = input length x factor.
inline Waveform oversample(const Waveform& w, int factor, std::size_t filter_taps = 49) {
    if (factor < 1) throw std::invalid_argument("oversample: factor must be >= 1");
    if (factor == 1) return w;
    std::vector<cplx> up(w.samples.size() * static_cast<std::size_t>(factor), cplx(0.0, 0.0));
    for (std::size_t i = 0; i < w.samples.size(); ++i)
        up[i * static_cast<std::size_t>(factor)] = w.samples[i] * static_cast<double>(factor);
    auto h = detail::lowpass_taps(0.5 / static_cast<double>(factor), filter_taps);
    Waveform out;
    out.samples = detail::filter_compensated(up, h);
    out.sample_rate = w.sample_rate * factor;
    out.oversample_factor = w.oversample_factor * factor;
    return out;
}

/// Anti-alias filter at the target Nyquist rate, then decimate.
inline Waveform downsample(const Waveform& w, int factor, std::size_t filter_taps = 49) {
    if (factor < 1) throw std::invalid_argument("downsample: factor must be >= 1");
    if (factor == 1) return w;
    auto h = detail::lowpass_taps(0.5 / static_cast<double>(factor), filter_taps);
    auto filtered = detail::filter_compensated(w.samples, h);
    Waveform out;
    out.samples.reserve(filtered.size() / static_cast<std::size_t>(factor));
    for (std::size_t i = 0; i < filtered.size(); i += static_cast<std::size_t>(factor))
        out.samples.push_back(filtered[i]);
    out.sample_rate = w.sample_rate / factor;
    out.oversample_factor = std::max(1, w.oversample_factor / factor);
    return out;
}

}  // namespace halow

#endif
