// SPDX-License-Identifier: Apache-2.0
#ifndef HALOW_SYNC_HPP
#define HALOW_SYNC_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "halow/channel.hpp"
#include "halow/preamble.hpp"
#include "halow/waveform.hpp"

namespace halow {

struct SyncConfig {
    std::size_t corr_window = 80;     // L, one half of the STF duration
    double detect_threshold = 0.5;    // on M(tau), in (0,1)
    bool use_90pct_refine = false;
    std::size_t coarse_span = 144;    // P, samples used by the coarse CFO sum
    bool fine_enabled = true;
    // Normalized LTS cross-correlation peak required to confirm a
    // detection when the fine stage runs. The sliding metric alone cannot
    // hold both miss and false-alarm rates at low SNR; the 64-sample
    // matched correlation supplies the missing processing gain.
    double verify_threshold = 0.25;
};

struct DetectionResult {
    bool detected = false;
    std::optional<long> tau_hat;      // final start estimate
    double metric_peak = 0.0;
    std::optional<long> fine_tau;     // LTS-correlation refinement, when run
};

struct CfoResult {
    double coarse_hz = 0.0;
    double fine_hz = 0.0;
    double total_hz = 0.0;
    bool degenerate = false;          // zero-magnitude correlation seen
};

namespace detail {

struct CorrSums {
    cplx lambda;        // sum y*_{tau+i} y_{tau+i+L}
    double power;       // sum |y_{tau+i+L}|^2 (trailing half)
    double power_lead;  // sum |y_{tau+i}|^2 (leading half)
};

inline CorrSums correlation_sums(const std::vector<cplx>& y, std::size_t tau, std::size_t L) {
    CorrSums s{cplx(0.0, 0.0), 0.0, 0.0};
    for (std::size_t i = 0; i < L; ++i) {
        s.lambda += std::conj(y[tau + i]) * y[tau + i + L];
        s.power += std::norm(y[tau + i + L]);
        s.power_lead += std::norm(y[tau + i]);
    }
    return s;
}

inline double metric_of(const CorrSums& s) {
    if (s.power <= 0.0) return 0.0;
    return std::norm(s.lambda) / (s.power * s.power);
}

/// Metric used by the detector sweep. The squared trailing power in the
/// denominator inflates M where the trailing half runs out of signal
/// (packet tails); windows whose trailing power falls below half the
/// leading power cannot contain a start and are suppressed. A start
/// always has trailing power >= leading power, so it is never masked,
/// and where noise alone keeps the ratio above 1/2 the denominator is
/// no longer small enough to inflate the metric.
inline double detect_metric_of(const CorrSums& s) {
    if (s.power <= 0.0 || s.power < 0.5 * s.power_lead) return 0.0;
    return std::norm(s.lambda) / (s.power * s.power);
}

/// Incremental sliding sums for every window position, O(1) per step with a
/// direct refresh every 1024 steps to bound floating-point drift.
inline std::vector<CorrSums> sliding_correlation(const std::vector<cplx>& y, std::size_t L) {
    const std::size_t last = y.size() - 2 * L;
    std::vector<CorrSums> out(last + 1);
    out[0] = correlation_sums(y, 0, L);
    CorrSums acc = out[0];
    for (std::size_t tau = 1; tau <= last; ++tau) {
        if (tau % 1024 == 0) {
            acc = correlation_sums(y, tau, L);
        } else {
            acc.lambda += std::conj(y[tau - 1 + L]) * y[tau - 1 + 2 * L] -
                          std::conj(y[tau - 1]) * y[tau - 1 + L];
            acc.power += std::norm(y[tau - 1 + 2 * L]) - std::norm(y[tau - 1 + L]);
            acc.power_lead += std::norm(y[tau - 1 + L]) - std::norm(y[tau - 1]);
        }
        out[tau] = acc;
    }
    return out;
}

}  // namespace detail

/// M(tau) = |Lambda_tau|^2 / P_tau^2 over a 2L window; 0 when P_tau = 0.
inline double timing_metric(const Waveform& y, std::size_t tau, std::size_t L) {
    if (tau + 2 * L > y.samples.size())
        throw std::invalid_argument("timing_metric: window exceeds buffer");
    return detail::metric_of(detail::correlation_sums(y.samples, tau, L));
}

namespace detail {

/// Normalized cross-correlation of the known LTS against y at lag p:
/// |sum lts*_i y_{p+i}|^2 / (E_lts * sum |y_{p+i}|^2), in [0, 1].
inline double lts_corr(const std::vector<cplx>& y, const std::vector<cplx>& lts,
                       double lts_energy, std::size_t p) {
    cplx acc = 0.0;
    double e = 0.0;
    for (std::size_t i = 0; i < lts.size(); ++i) {
        acc += std::conj(lts[i]) * y[p + i];
        e += std::norm(y[p + i]);
    }
    if (e <= 0.0) return 0.0;
    return std::norm(acc) / (lts_energy * e);
}

}  // namespace detail

/// Coarse CFO from the STS lag-16 autocorrelation over P samples of STF.
inline double coarse_cfo(const Waveform& y, std::size_t tau_s, const PreambleSpec& spec,
                         const SyncConfig& cfg, bool* degenerate = nullptr) {
    const std::size_t P = cfg.coarse_span;
    const std::size_t lag = spec.sts_len;
    if (P < lag || tau_s + P >= y.samples.size())
        throw std::invalid_argument("coarse_cfo: window exceeds buffer");
    cplx lambda = 0.0;
    for (std::size_t n = tau_s; n <= tau_s + P - lag; ++n)
        lambda += std::conj(y.samples[n]) * y.samples[n + lag];
    if (std::abs(lambda) == 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return y.sample_rate * std::arg(lambda) /
           (2.0 * std::numbers::pi * static_cast<double>(lag));
}

/// Sliding-window packet detection. Lambda_tau and P_tau are maintained
/// incrementally (O(1) per step, refreshed by a direct recomputation every
/// 1024 steps to bound floating-point drift). When the fine stage is
/// enabled, the known LTS is cross-correlated over [tau_hat, tau_hat+560)
/// and the earlier of the two LTS peaks refines and confirms the estimate.
inline DetectionResult detect_packet(const Waveform& y, const SyncConfig& cfg,
                                     const PreambleSpec& spec = default_preamble_spec()) {
    const std::size_t L = cfg.corr_window;
    const auto& s = y.samples;
    if (s.size() < 2 * L) throw std::invalid_argument("detect_packet: buffer shorter than 2L");
    const std::size_t last = s.size() - 2 * L;

    const auto sums = detail::sliding_correlation(s, L);
    // Windows of exact zeros accumulate only cancellation residue (~1e-16
    // of the energies that passed through the incremental sums), and the
    // ratio of two residues is meaningless; floor the trailing power at a
    // vanishing fraction of the total stream energy so such windows score 0.
    double total_power = 0.0;
    for (const auto& v : s) total_power += std::norm(v);
    const double power_floor = 1e-12 * total_power;
    std::vector<double> metric(last + 1);
    for (std::size_t tau = 0; tau <= last; ++tau)
        metric[tau] =
            sums[tau].power > power_floor ? detail::detect_metric_of(sums[tau]) : 0.0;

    DetectionResult res;
    std::size_t best = 0;
    for (std::size_t tau = 1; tau <= last; ++tau)
        if (metric[tau] > metric[best]) best = tau;
    res.metric_peak = metric[best];
    if (res.metric_peak < cfg.detect_threshold) return res;

    long tau_s = static_cast<long>(best);
    if (cfg.use_90pct_refine) {
        const double lvl = 0.9 * res.metric_peak;
        std::size_t left = best, right = best;
        while (left > 0 && metric[left - 1] >= lvl) --left;
        while (right < last && metric[right + 1] >= lvl) ++right;
        tau_s = std::lround((static_cast<double>(left) + static_cast<double>(right)) / 2.0);
    }
    res.detected = true;
    res.tau_hat = tau_s;

    if (cfg.fine_enabled) {
        const std::size_t l_L = spec.lts_len;
        const double e_lts = mean_power(spec.lts) * static_cast<double>(l_L);
        const std::size_t begin = static_cast<std::size_t>(std::max(0l, tau_s));
        const std::size_t end =
            std::min(s.size(), begin + spec.preamble_len());
        if (end >= begin + l_L) {
            // The 64-sample coherent LTS sum is nulled by an uncompensated
            // CFO near fs/64 (a full phase turn across the window), so the
            // scan segment is first derotated by the coarse STS estimate,
            // whose lag-16 pull-in range covers the whole ambiguity band.
            std::vector<cplx> seg(s.begin() + static_cast<long>(begin),
                                  s.begin() + static_cast<long>(end));
            if (begin + cfg.coarse_span < s.size()) {
                const double f0 = coarse_cfo(y, begin, spec, cfg);
                const double w0 = -2.0 * std::numbers::pi * f0 / y.sample_rate;
                for (std::size_t k = 0; k < seg.size(); ++k)
                    seg[k] *= std::polar(1.0, w0 * static_cast<double>(k));
            }
            std::size_t p_best = begin;
            double c_best = -1.0;
            std::vector<double> c(end - l_L - begin + 1);
            for (std::size_t p = begin; p + l_L <= end; ++p) {
                c[p - begin] = detail::lts_corr(seg, spec.lts, e_lts, p - begin);
                if (c[p - begin] > c_best) {
                    c_best = c[p - begin];
                    p_best = p;
                }
            }
            if (c_best < cfg.verify_threshold) {
                res.detected = false;
                res.tau_hat.reset();
                return res;
            }
            // Pick the earlier of the two LTS repetitions.
            std::size_t p_first = p_best;
            if (p_best >= begin + l_L && c[p_best - l_L - begin] >= 0.5 * c_best)
                p_first = p_best - l_L;
            const long lts_offset = static_cast<long>(spec.stf_len + spec.lts_len / 2);
            res.fine_tau = static_cast<long>(p_first) - lts_offset;
            res.tau_hat = res.fine_tau;
        }
    }
    return res;
}

/// Fine CFO from the LTS lag-64 autocorrelation over the LTF1 field of a
/// signal already compensated by the coarse estimate. The window is
/// [tau_L, tau_L + L_L - l_L), the largest span whose lag-l_L partner
/// stays inside the LTF1 field (96 sample pairs).
inline double fine_cfo(const Waveform& y_corrected, std::size_t tau_l, const PreambleSpec& spec,
                       bool* degenerate = nullptr) {
    const std::size_t lag = spec.lts_len;
    const std::size_t span = spec.ltf_len - lag;
    if (tau_l + span + lag > y_corrected.samples.size())
        throw std::invalid_argument("fine_cfo: window exceeds buffer");
    cplx lambda = 0.0;
    for (std::size_t n = tau_l; n < tau_l + span; ++n)
        lambda += std::conj(y_corrected.samples[n]) * y_corrected.samples[n + lag];
    if (std::abs(lambda) == 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return y_corrected.sample_rate * std::arg(lambda) /
           (2.0 * std::numbers::pi * static_cast<double>(lag));
}

/// Two-stage estimate: coarse, compensate, fine; total = coarse + fine.
inline CfoResult estimate_cfo(const Waveform& y, std::size_t tau_s, const PreambleSpec& spec,
                              const SyncConfig& cfg) {
    CfoResult r;
    r.coarse_hz = coarse_cfo(y, tau_s, spec, cfg, &r.degenerate);
    Waveform corrected = apply_cfo(y, -r.coarse_hz);
    r.fine_hz = fine_cfo(corrected, tau_s + spec.stf_len, spec, &r.degenerate);
    r.total_hz = r.coarse_hz + r.fine_hz;
    return r;
}

}  // namespace halow

#endif
