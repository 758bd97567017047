// SPDX-License-Identifier: Apache-2.0
#ifndef HALOW_PREAMBLE_HPP
#define HALOW_PREAMBLE_HPP

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "halow/waveform.hpp"

namespace halow {

/// Frequency-domain OFDM symbol, one complex value per subcarrier.
struct SpectrumSymbol {
    std::vector<cplx> bins;
};

/// x_n = (1/N) sum_k X_k e^{j 2 pi k n / N}, output length N.
inline std::vector<cplx> idft(const SpectrumSymbol& sym, std::size_t n) {
    if (sym.bins.size() != n)
        throw std::invalid_argument("idft: bin count does not match transform size");
    std::vector<cplx> out(n);
    const double w = 2.0 * std::numbers::pi / static_cast<double>(n);
    for (std::size_t t = 0; t < n; ++t) {
        cplx acc = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            acc += sym.bins[k] * std::polar(1.0, w * static_cast<double>(k * t));
        out[t] = acc / static_cast<double>(n);
    }
    return out;
}

/// Y_k = sum_n y_n e^{-j 2 pi k n / N}.
inline SpectrumSymbol dft(const std::vector<cplx>& seg, std::size_t n) {
    if (seg.size() != n)
        throw std::invalid_argument("dft: segment length does not match transform size");
    SpectrumSymbol out;
    out.bins.resize(n);
    const double w = 2.0 * std::numbers::pi / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        cplx acc = 0.0;
        for (std::size_t t = 0; t < n; ++t)
            acc += seg[t] * std::polar(1.0, -w * static_cast<double>(k * t));
        out.bins[k] = acc;
    }
    return out;
}

namespace detail {

/// Deterministic QPSK fill of the listed bins, normalized to unit mean
/// time-domain power. The same fixed seed is used on every call so the
/// shipped training symbols are reproducible configuration data.
inline std::vector<cplx> training_symbol(std::size_t n, const std::vector<std::size_t>& occupied,
                                         std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SpectrumSymbol sym;
    sym.bins.assign(n, cplx(0.0, 0.0));
    const double s = std::numbers::sqrt2 / 2.0;
    for (std::size_t k : occupied) {
        std::uint64_t r = rng();
        double re = (r & 1) ? s : -s;
        double im = (r & 2) ? s : -s;
        sym.bins[k] = cplx(re, im);
    }
    auto t = idft(sym, n);
    double p = mean_power(t);
    double g = 1.0 / std::sqrt(p);
    for (auto& v : t) v *= g;
    return t;
}

}  // namespace detail

/// All 802.11ah 1 MHz preamble constants. The standard's exact S1G
/// training sequences are not shipped; the defaults are deterministic
/// unit-power sequences with the same repetition structure, and both
/// sts and lts may be replaced by standard tables if available.
struct PreambleSpec {
    std::size_t n_subcarriers = 32;        // N
    double subcarrier_spacing = 31250.0;   // Hz
    std::size_t cp_len = 8;                // samples at 1 MHz
    double sample_rate = 1e6;              // f_s
    std::size_t sts_len = 16;              // l_S
    std::size_t stf_len = 160;             // L_S
    std::size_t lts_len = 64;              // l_L
    std::size_t ltf_len = 160;             // L_L
    std::size_t sig_symbols = 6;
    // SIG occupies bins +-1..+-13, keeping the field clear of the band
    // edge so the oversampling filters pass it undistorted.
    std::vector<std::size_t> sig_bins = {1,  2,  3,  4,  5,  6,  7,  8,  9,  10, 11, 12, 13,
                                         19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31};
    std::vector<cplx> sts;                 // short training symbol, sts_len samples
    std::vector<cplx> lts;                 // long training symbol, lts_len samples
    std::vector<int> sig_bits;             // BPSK bits, one per occupied SIG bin per symbol

    std::size_t preamble_len() const {
        return stf_len + ltf_len + sig_symbols * (cp_len + n_subcarriers);
    }
};

inline PreambleSpec default_preamble_spec() {
    PreambleSpec s;
    // STS: 16-point spectrum with 8 occupied bins; LTS: 64-point spectrum
    // with 52 occupied bins (all but DC and the outer guard bins).
    s.sts = detail::training_symbol(16, {1, 2, 3, 4, 12, 13, 14, 15}, 0x5354u);
    std::vector<std::size_t> lts_bins;
    for (std::size_t k = 1; k <= 26; ++k) lts_bins.push_back(k);
    for (std::size_t k = 38; k <= 63; ++k) lts_bins.push_back(k);
    s.lts = detail::training_symbol(64, lts_bins, 0x4c54u);
    // Fixed SIG payload; content is irrelevant to synchronization.
    std::mt19937_64 rng(0x534947u);
    s.sig_bits.resize(s.sig_symbols * s.sig_bins.size());
    for (auto& b : s.sig_bits) b = (rng() & 1) ? 1 : -1;
    return s;
}

inline void validate(const PreambleSpec& s) {
    if (s.stf_len != 10 * s.sts_len)
        throw std::invalid_argument("PreambleSpec: stf_len must be 10 x sts_len");
    if (s.ltf_len != 2 * s.lts_len + s.lts_len / 2)
        throw std::invalid_argument("PreambleSpec: ltf_len must be guard + 2 x lts_len");
    if (s.sts.size() != s.sts_len || s.lts.size() != s.lts_len)
        throw std::invalid_argument("PreambleSpec: training symbol length mismatch");
    if (s.sig_bits.size() != s.sig_symbols * s.sig_bins.size())
        throw std::invalid_argument("PreambleSpec: sig_bits length mismatch");
    for (std::size_t k : s.sig_bins)
        if (k >= s.n_subcarriers)
            throw std::invalid_argument("PreambleSpec: sig bin out of range");
}

/// NDP preamble at 1 MHz: [STF | LTF1 | SIG], 560 samples.
///   STF  = 10 consecutive STS copies (the field is generated at field level;
///          an 8-sample CP does not tile the 16-sample STS period).
///   LTF1 = [last 32 samples of LTS | LTS | LTS], so y[n] = y[n+64] holds
///          over the whole guard + first LTS.
///   SIG  = 6 symbols of [8-sample CP | 32-sample IDFT of BPSK sig_bits].
inline Waveform generate_ndp(const PreambleSpec& spec) {
    validate(spec);
    Waveform w;
    w.sample_rate = spec.sample_rate;
    w.oversample_factor = 1;
    w.samples.reserve(spec.preamble_len());
    for (int r = 0; r < 10; ++r)
        w.samples.insert(w.samples.end(), spec.sts.begin(), spec.sts.end());
    const std::size_t guard = spec.lts_len / 2;
    w.samples.insert(w.samples.end(), spec.lts.end() - static_cast<long>(guard), spec.lts.end());
    w.samples.insert(w.samples.end(), spec.lts.begin(), spec.lts.end());
    w.samples.insert(w.samples.end(), spec.lts.begin(), spec.lts.end());
    const std::size_t n = spec.n_subcarriers;
    const std::size_t nb = spec.sig_bins.size();
    // Scale for unit mean symbol power: Parseval gives mean |x|^2 = nb/N^2.
    const double gain = static_cast<double>(n) / std::sqrt(static_cast<double>(nb));
    for (std::size_t s = 0; s < spec.sig_symbols; ++s) {
        SpectrumSymbol sym;
        sym.bins.assign(n, cplx(0.0, 0.0));
        for (std::size_t i = 0; i < nb; ++i)
            sym.bins[spec.sig_bins[i]] =
                cplx(static_cast<double>(spec.sig_bits[s * nb + i]) * gain, 0.0);
        auto t = idft(sym, n);
        w.samples.insert(w.samples.end(), t.end() - static_cast<long>(spec.cp_len), t.end());
        w.samples.insert(w.samples.end(), t.begin(), t.end());
    }
    return w;
}

}  // namespace halow

#endif
