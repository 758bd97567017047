// SPDX-License-Identifier: Apache-2.0
#ifndef HALOW_EVAL_HPP
#define HALOW_EVAL_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "halow/nn/tensor.hpp"
#include "halow/preamble.hpp"
#include "halow/sync.hpp"

namespace halow {

struct SnrBin {
    std::size_t n = 0;        // records in the bin
    std::size_t n_err = 0;    // records contributing to MAE
    std::size_t n_pos = 0;    // records with a true start / any CFO record
    std::size_t n_neg = 0;    // records without a start
    std::size_t miss = 0;
    std::size_t false_alarm = 0;
    double abs_err_sum = 0.0;

    double mae() const { return n_err ? abs_err_sum / static_cast<double>(n_err) : 0.0; }
};

struct MetricsReport {
    std::map<int, SnrBin> bins;  // keyed by floor(snr_db), 1 dB granularity
    double overall_mae = 0.0;
    double miss_rate = 0.0;
    double false_alarm_rate = 0.0;
    std::size_t n_records = 0;
    std::uint64_t config_hash = 0;
    std::vector<std::array<double, 2>> scatter;  // (truth, prediction)
    std::size_t outliers = 0;                    // |err| > 10 x median |err|
};

struct DetectionEval {
    std::optional<long> pred;
    long label = -1;  // -1: no start in block
    double snr_db = 0.0;
};

/// MAE over records where both sides indicate a start; miss = start
/// present but none predicted; false alarm = start predicted in a
/// packet-free block. Rates are fractions of their own populations.
inline MetricsReport detection_metrics(const std::vector<DetectionEval>& evals) {
    MetricsReport rep;
    rep.n_records = evals.size();
    std::size_t pos = 0, neg = 0, miss = 0, fa = 0, n_err = 0;
    double err_sum = 0.0;
    for (const auto& e : evals) {
        auto& bin = rep.bins[static_cast<int>(std::floor(e.snr_db))];
        ++bin.n;
        if (e.label >= 0) {
            ++pos;
            ++bin.n_pos;
            if (!e.pred) {
                ++miss;
                ++bin.miss;
            } else {
                const double err = std::abs(static_cast<double>(*e.pred - e.label));
                err_sum += err;
                ++n_err;
                bin.abs_err_sum += err;
                ++bin.n_err;
            }
        } else {
            ++neg;
            ++bin.n_neg;
            if (e.pred) {
                ++fa;
                ++bin.false_alarm;
            }
        }
    }
    rep.overall_mae = n_err ? err_sum / static_cast<double>(n_err) : 0.0;
    rep.miss_rate = pos ? static_cast<double>(miss) / static_cast<double>(pos) : 0.0;
    rep.false_alarm_rate = neg ? static_cast<double>(fa) / static_cast<double>(neg) : 0.0;
    return rep;
}

struct CfoEval {
    double pred_hz = 0.0;
    double label_hz = 0.0;
    double snr_db = 0.0;
};

/// MAE in Hz per SNR bin, plus truth-vs-prediction scatter points and an
/// outlier count at 10x the median absolute error.
inline MetricsReport cfo_metrics(const std::vector<CfoEval>& evals) {
    MetricsReport rep;
    rep.n_records = evals.size();
    std::vector<double> abs_errs;
    abs_errs.reserve(evals.size());
    double err_sum = 0.0;
    for (const auto& e : evals) {
        const double err = std::abs(e.pred_hz - e.label_hz);
        abs_errs.push_back(err);
        err_sum += err;
        auto& bin = rep.bins[static_cast<int>(std::floor(e.snr_db))];
        ++bin.n;
        ++bin.n_err;
        ++bin.n_pos;
        bin.abs_err_sum += err;
        rep.scatter.push_back({e.label_hz, e.pred_hz});
    }
    rep.overall_mae = evals.empty() ? 0.0 : err_sum / static_cast<double>(evals.size());
    if (!abs_errs.empty()) {
        std::vector<double> sorted = abs_errs;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t m = sorted.size() / 2;
        const double median =
            sorted.size() % 2 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
        for (double e : abs_errs)
            if (e > 10.0 * median) ++rep.outliers;
    }
    return rep;
}

// --- FLOP accounting ---------------------------------------------------------

struct FlopCount {
    long long mul = 0;
    long long add = 0;
    long long total() const { return mul + add; }
};

/// Per-inference layer cost; bias additions included. Recurrent cells are
/// counted for a single time step: simple cell MUL = U^2 + NF*U + 2U,
/// ADD = U^2 + NF*U + U; LSTM = 4x, GRU = 3x. Gate nonlinearities excluded.
inline FlopCount layer_flops(const nn::LayerSpec& l, std::size_t in_len) {
    FlopCount f;
    const auto U = static_cast<long long>(l.units);
    const auto NF = static_cast<long long>(l.features);
    switch (l.kind) {
        case nn::LayerKind::dense:
            f.mul = static_cast<long long>(l.in) * static_cast<long long>(l.out);
            f.add = static_cast<long long>(l.in + 1) * static_cast<long long>(l.out);
            break;
        case nn::LayerKind::conv1d: {
            const long long K =
                static_cast<long long>(in_len / l.in_channels - l.filter_len + 1);
            f.mul = static_cast<long long>(l.filter_len * l.in_channels * l.out_channels) * K;
            f.add =
                static_cast<long long>(l.filter_len * (l.in_channels + 1) * l.out_channels) * K;
            break;
        }
        case nn::LayerKind::lstm:
        case nn::LayerKind::gru: {
            const long long gates = l.kind == nn::LayerKind::lstm ? 4 : 3;
            f.mul = gates * (U * U + NF * U + 2 * U);
            f.add = gates * (U * U + NF * U + U);
            break;
        }
        default:
            break;  // relu/tanh: free under this accounting
    }
    return f;
}

struct NetworkFlops {
    std::vector<FlopCount> per_layer;
    FlopCount total;
};

/// Sum of layer_flops over a network; recurrent layers enter as one
/// time-step pass, matching the published per-step accounting.
inline NetworkFlops network_flops(const std::vector<nn::LayerSpec>& net, std::size_t input_len) {
    NetworkFlops nf;
    std::size_t len = input_len;
    for (const auto& l : net) {
        const auto f = layer_flops(l, len);
        nf.per_layer.push_back(f);
        nf.total.mul += f.mul;
        nf.total.add += f.add;
        len = l.out_len(len);
    }
    return nf;
}

/// Conventional two-stage CFO cost in complex multiply-accumulates, the
/// unit the published comparison uses: one MAC per correlation lag pair.
/// Coarse runs the inclusive window (P - l_S + 1 pairs), fine the LTF1
/// window (L_L - l_L pairs).
struct ConventionalCfoFlops {
    long long coarse_macs = 0;
    long long fine_macs = 0;
    long long total() const { return coarse_macs + fine_macs; }
};

inline ConventionalCfoFlops conventional_cfo_flops(
    const PreambleSpec& spec = default_preamble_spec(), const SyncConfig& cfg = {}) {
    ConventionalCfoFlops f;
    f.coarse_macs = static_cast<long long>(cfg.coarse_span - spec.sts_len + 1);
    f.fine_macs = static_cast<long long>(spec.ltf_len - spec.lts_len);
    return f;
}

/// Stream-processing rate of a block detector: per-block cost times the
/// number of blocks per second.
inline double detector_throughput_flops(long long per_block_flops, std::size_t block_len,
                                        double sample_rate) {
    if (block_len == 0) throw std::invalid_argument("detector_throughput_flops: zero block");
    return static_cast<double>(per_block_flops) * sample_rate / static_cast<double>(block_len);
}

/// Conventional sliding-metric baseline: incremental update of Lambda, P
/// and M per input sample, independent of any block size. Itemized in
/// scalar operations: two complex multiplies and two complex adds for the
/// Lambda window edges, two squared magnitudes and two adds for P, then
/// |Lambda|^2 / P^2.
inline FlopCount conventional_detector_step_flops() {
    FlopCount f;
    f.mul = 8 + 4 + 4;   // Lambda products, two |.|^2, |Lambda|^2 + P^2 + divide
    f.add = 8 + 4 + 1;
    return f;
}

inline double conventional_detector_throughput_flops(double sample_rate) {
    return static_cast<double>(conventional_detector_step_flops().total()) * sample_rate;
}

// --- Report emission ---------------------------------------------------------

namespace detail {

inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace detail

inline std::string report_csv(const MetricsReport& rep) {
    std::string out = "snr_db,n,mae,miss_rate,false_alarm_rate\n";
    for (const auto& [snr, bin] : rep.bins) {
        const double miss = bin.n_pos ? static_cast<double>(bin.miss) / bin.n_pos : 0.0;
        const double fa = bin.n_neg ? static_cast<double>(bin.false_alarm) / bin.n_neg : 0.0;
        out += std::to_string(snr) + "," + std::to_string(bin.n) + "," + detail::fmt(bin.mae()) +
               "," + detail::fmt(miss) + "," + detail::fmt(fa) + "\n";
    }
    return out;
}

/// Self-contained SVG: MAE-vs-SNR polyline plus the scatter points when
/// present. Pure function of the report; the config hash rides in a
/// leading comment.
inline std::string report_svg(const MetricsReport& rep) {
    const int W = 640, H = 480, ML = 60, MR = 20, MT = 20, MB = 40;
    double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
    if (!rep.bins.empty()) {
        x0 = rep.bins.begin()->first;
        x1 = rep.bins.rbegin()->first;
        y1 = 0.0;
        for (const auto& [snr, bin] : rep.bins) y1 = std::max(y1, bin.mae());
        if (x1 == x0) x1 = x0 + 1.0;
        if (y1 == 0.0) y1 = 1.0;
    }
    auto px = [&](double x) {
        return ML + (x - x0) / (x1 - x0) * (W - ML - MR);
    };
    auto py = [&](double y) {
        return H - MB - (y - y0) / (y1 - y0) * (H - MT - MB);
    };
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\">\n";
    s << "<!-- config_hash=" << rep.config_hash << " n=" << rep.n_records << " -->\n";
    s << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    s << "<line x1=\"" << ML << "\" y1=\"" << H - MB << "\" x2=\"" << W - MR << "\" y2=\""
      << H - MB << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << ML << "\" y1=\"" << MT << "\" x2=\"" << ML << "\" y2=\"" << H - MB
      << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << ML << "\" y=\"" << H - 8 << "\" font-size=\"12\">" << detail::fmt(x0)
      << "</text>\n";
    s << "<text x=\"" << W - MR - 30 << "\" y=\"" << H - 8 << "\" font-size=\"12\">"
      << detail::fmt(x1) << "</text>\n";
    s << "<text x=\"4\" y=\"" << H - MB << "\" font-size=\"12\">" << detail::fmt(y0)
      << "</text>\n";
    s << "<text x=\"4\" y=\"" << MT + 10 << "\" font-size=\"12\">" << detail::fmt(y1)
      << "</text>\n";
    if (!rep.bins.empty()) {
        s << "<polyline fill=\"none\" stroke=\"blue\" points=\"";
        for (const auto& [snr, bin] : rep.bins)
            s << detail::fmt(px(snr)) << "," << detail::fmt(py(bin.mae())) << " ";
        s << "\"/>\n";
    }
    if (!rep.scatter.empty()) {
        double sx0 = rep.scatter[0][0], sx1 = sx0, sy0 = rep.scatter[0][1], sy1 = sy0;
        for (const auto& p : rep.scatter) {
            sx0 = std::min(sx0, p[0]);
            sx1 = std::max(sx1, p[0]);
            sy0 = std::min(sy0, p[1]);
            sy1 = std::max(sy1, p[1]);
        }
        if (sx1 == sx0) sx1 = sx0 + 1.0;
        if (sy1 == sy0) sy1 = sy0 + 1.0;
        for (const auto& p : rep.scatter) {
            const double cx = ML + (p[0] - sx0) / (sx1 - sx0) * (W - ML - MR);
            const double cy = H - MB - (p[1] - sy0) / (sy1 - sy0) * (H - MT - MB);
            s << "<circle cx=\"" << detail::fmt(cx) << "\" cy=\"" << detail::fmt(cy)
              << "\" r=\"2\" fill=\"red\" fill-opacity=\"0.5\"/>\n";
        }
    }
    s << "</svg>\n";
    return s.str();
}

inline void emit_report(const MetricsReport& rep, const std::string& base) {
    std::ofstream c(base + ".csv", std::ios::binary | std::ios::trunc);
    if (!c) throw std::runtime_error("emit_report: cannot open " + base + ".csv");
    c << report_csv(rep);
    std::ofstream s(base + ".svg", std::ios::binary | std::ios::trunc);
    if (!s) throw std::runtime_error("emit_report: cannot open " + base + ".svg");
    s << report_svg(rep);
}

/// Parses the CSV schema back into (snr, n, mae, miss, fa) rows.
inline std::vector<std::array<double, 5>> parse_report_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    std::vector<std::array<double, 5>> rows;
    if (!std::getline(in, line) || line != "snr_db,n,mae,miss_rate,false_alarm_rate")
        throw std::runtime_error("parse_report_csv: bad header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::array<double, 5> row{};
        std::istringstream ls(line);
        std::string cell;
        for (int i = 0; i < 5; ++i) {
            if (!std::getline(ls, cell, ',')) throw std::runtime_error("parse_report_csv: short row");
            row[i] = std::stod(cell);
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace halow

#endif
