// SPDX-License-Identifier: Apache-2.0
#ifndef HALOW_DATASET_HPP
#define HALOW_DATASET_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "halow/channel.hpp"
#include "halow/preamble.hpp"
#include "halow/records.hpp"
#include "halow/resample.hpp"
#include "halow/rng.hpp"
#include "halow/sync.hpp"
#include "halow/waveform.hpp"

namespace halow {

/// Impairment ranges used by the dataset generators; one draw per record.
struct GenConfig {
    double snr_min_db = 1.0;
    double snr_max_db = 25.0;
    double cfo_max_hz = 15625.0;
    ChannelKind channel = ChannelKind::awgn_only;
    FadingProfile profile = FadingProfile::model_b();
    int oversample_factor = 4;
    bool detector_aligned = false;  // cfo task: align at the conventional estimate

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["snr_min_db"] = snr_min_db;
        j["snr_max_db"] = snr_max_db;
        j["cfo_max_hz"] = cfo_max_hz;
        j["channel"] = static_cast<int>(channel);
        j["oversample_factor"] = oversample_factor;
        j["detector_aligned"] = detector_aligned;
        nlohmann::json taps = nlohmann::json::array();
        for (const auto& t : profile.taps)
            taps.push_back({{"delay_ns", t.delay_s * 1e9}, {"power_db", t.mean_power_db}});
        j["profile"] = {{"taps", taps}, {"rayleigh", profile.rayleigh}};
        return j;
    }
    std::uint64_t hash() const { return fnv1a(to_json().dump()); }

    static GenConfig from_json(const nlohmann::json& j) {
        GenConfig c;
        c.snr_min_db = j.at("snr_min_db").get<double>();
        c.snr_max_db = j.at("snr_max_db").get<double>();
        c.cfo_max_hz = j.at("cfo_max_hz").get<double>();
        c.channel = static_cast<ChannelKind>(j.at("channel").get<int>());
        c.oversample_factor = j.at("oversample_factor").get<int>();
        c.detector_aligned = j.at("detector_aligned").get<bool>();
        c.profile = FadingProfile::from_json(j.at("profile"));
        return c;
    }
};

namespace detail {

inline const Waveform& upsampled_ndp(int factor) {
    static const int cached_factor = factor;
    static const Waveform up = oversample(generate_ndp(default_preamble_spec()), factor);
    if (factor != cached_factor)
        throw std::invalid_argument("upsampled_ndp: mixed oversample factors in one process");
    return up;
}

}  // namespace detail

/// TX -> channel -> RX-filter chain for one packet: oversample, fade,
/// rotate by the CFO, add noise at the oversampled rate, filter and
/// decimate back to 1 MHz. The AWGN variance is raised by the oversample
/// ratio so the in-band SNR after the receive filter hits `snr_db`.
/// Sub-draws use seeds derived from `seed`, so a record regenerates from
/// its stored seed alone.
inline Waveform synth_rx_packet(const GenConfig& cfg, double snr_db, double cfo_hz,
                                std::uint64_t seed) {
    Waveform w = detail::upsampled_ndp(cfg.oversample_factor);
    if (cfg.channel == ChannelKind::multipath)
        w = apply_multipath(w, cfg.profile, derive_seed(seed, 1));
    if (cfo_hz != 0.0) w = apply_cfo(w, cfo_hz);
    if (cfg.channel != ChannelKind::identity) {
        const double snr_eff = snr_db - 10.0 * std::log10(cfg.oversample_factor);
        w = add_awgn(w, snr_eff, derive_seed(seed, 2));
    }
    return downsample(w, cfg.oversample_factor);
}

/// One detection trial: a 1 MHz complex stream holding noise and possibly
/// a packet, plus the labels a block cut from it would carry. The block
/// under test spans [block_origin, block_origin + B).
struct DetectionTrial {
    static constexpr std::size_t block_origin = 600;
    static constexpr std::size_t post_margin = 700;

    Waveform stream;
    long tau_in_block = -1;   // start offset within the block, -1 if none
    long packet_pos = -1;     // absolute start in the stream, -1 if none
    double snr_db = 0.0;
    double cfo_hz = 0.0;
    ChannelKind channel = ChannelKind::awgn_only;
};

/// Trial mix: 50% start-in-block (tau uniform over [0, B-1]), 25% pure
/// noise, 25% interior/tail content without a start (cut offset uniform
/// over [1, 559]).
inline DetectionTrial simulate_detection_trial(std::size_t block_len, const GenConfig& cfg,
                                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_real_distribution<double> snr(cfg.snr_min_db, cfg.snr_max_db);
    std::uniform_real_distribution<double> cfo(-cfg.cfo_max_hz, cfg.cfo_max_hz);

    DetectionTrial tr;
    tr.channel = cfg.channel;
    const double kind = u01(rng);
    const double tau_draw = u01(rng);
    tr.snr_db = snr(rng);
    tr.cfo_hz = cfo(rng);

    const std::size_t total = DetectionTrial::block_origin + block_len +
                              DetectionTrial::post_margin;
    Waveform pkt = synth_rx_packet(cfg, tr.snr_db, tr.cfo_hz, seed);
    const double floor = detail::noise_floor(pkt, tr.snr_db);

    long pos;
    if (kind < 0.5) {
        tr.tau_in_block =
            std::min<long>(static_cast<long>(tau_draw * static_cast<double>(block_len)),
                           static_cast<long>(block_len) - 1);
        pos = static_cast<long>(DetectionTrial::block_origin) + tr.tau_in_block;
    } else if (kind < 0.75) {
        pos = static_cast<long>(total);  // fully clipped: pure noise
    } else {
        // Packet cut so the block sees interior or tail content, never a start.
        const long cut = 1 + std::min<long>(static_cast<long>(tau_draw * 559.0), 558);
        pos = static_cast<long>(DetectionTrial::block_origin) - cut;
    }
    tr.stream = detail::place_in_noise(pkt, pos, total, floor, derive_seed(seed, 3));
    tr.packet_pos = pos < static_cast<long>(total) ? pos : -1;
    return tr;
}

inline DetectionRecord record_from_trial(const DetectionTrial& tr, std::size_t block_len,
                                         std::uint64_t seed) {
    DetectionRecord r;
    r.block.resize(block_len);
    for (std::size_t i = 0; i < block_len; ++i)
        r.block[i] =
            static_cast<float>(std::abs(tr.stream.samples[DetectionTrial::block_origin + i]));
    r.label = static_cast<float>(tr.tau_in_block);
    r.snr_db = static_cast<float>(tr.snr_db);
    r.seed = seed;
    r.channel = tr.channel;
    return r;
}

namespace detail {

template <class Fn>
void parallel_indices(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, threads);
    if (threads == 1 || n < 2 * threads) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
        if (lo < hi)
            pool.emplace_back([&fn, lo, hi] {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            });
    }
    for (auto& th : pool) th.join();
}

}  // namespace detail

inline std::vector<DetectionRecord> gen_detection_set(std::size_t n, std::size_t block_len,
                                                      const GenConfig& cfg,
                                                      std::uint64_t master_seed,
                                                      std::size_t threads = 1) {
    static const std::vector<std::size_t> ok{40, 80, 160, 320, 800, 1600};
    if (std::find(ok.begin(), ok.end(), block_len) == ok.end())
        throw std::invalid_argument("gen_detection_set: unsupported block length");
    detail::upsampled_ndp(cfg.oversample_factor);  // warm the cache before threading
    std::vector<DetectionRecord> out(n);
    detail::parallel_indices(n, threads, [&](std::size_t i) {
        const std::uint64_t seed = derive_seed(master_seed, i);
        out[i] = record_from_trial(simulate_detection_trial(block_len, cfg, seed), block_len,
                                   seed);
    });
    return out;
}

/// CFO example from one simulated packet. True-aligned mode reads the STF
/// phases at the known packet start; detector-aligned mode embeds the
/// packet in noise, runs the conventional detector and reads the phases
/// at its estimate (falling back to the true start on a miss).
inline CfoRecord simulate_cfo_packet(const GenConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> snr(cfg.snr_min_db, cfg.snr_max_db);
    std::uniform_real_distribution<double> cfo(-cfg.cfo_max_hz, cfg.cfo_max_hz);
    CfoRecord r;
    r.snr_db = static_cast<float>(snr(rng));
    r.label_hz = static_cast<float>(cfo(rng));
    r.seed = seed;
    r.channel = cfg.channel;

    Waveform pkt = synth_rx_packet(cfg, r.snr_db, r.label_hz, seed);
    std::size_t start = 0;
    const Waveform* src = &pkt;
    Waveform stream;
    if (cfg.detector_aligned) {
        const std::size_t offset = 400;
        stream = embed_in_noise(pkt, offset, offset + pkt.size() + 400, r.snr_db,
                                derive_seed(seed, 4));
        SyncConfig sc;
        sc.detect_threshold = 0.05;
        const auto det = detect_packet(stream, sc);
        start = det.detected && *det.tau_hat >= 0 ? static_cast<std::size_t>(*det.tau_hat)
                                                  : offset;
        src = &stream;
    }
    r.phases.resize(160);
    for (std::size_t i = 0; i < 160; ++i)
        r.phases[i] = static_cast<float>(std::arg(src->samples[start + i]));
    return r;
}

inline std::vector<CfoRecord> gen_cfo_set(std::size_t n, const GenConfig& cfg,
                                          std::uint64_t master_seed, std::size_t threads = 1) {
    detail::upsampled_ndp(cfg.oversample_factor);
    std::vector<CfoRecord> out(n);
    detail::parallel_indices(n, threads, [&](std::size_t i) {
        out[i] = simulate_cfo_packet(cfg, derive_seed(master_seed, i));
    });
    return out;
}

// --- Record file format -----------------------------------------------------
// Header: magic "DS01", u32 task (1 = detection, 2 = cfo), u32 dim,
// u64 count; per record: f32 label, f32 snr_db, u64 seed, u32 channel,
// dim x f32 data. All little-endian. A JSON manifest rides at <path>.json.

namespace detail {

inline void put_bytes(std::ofstream& f, std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) {
        const unsigned char b = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
        f.write(reinterpret_cast<const char*>(&b), 1);
    }
}

inline std::uint64_t get_bytes(std::ifstream& f, int n, const std::string& path) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
        unsigned char b;
        f.read(reinterpret_cast<char*>(&b), 1);
        if (f.gcount() != 1) throw std::runtime_error("truncated record file: " + path);
        v |= static_cast<std::uint64_t>(b) << (8 * i);
    }
    return v;
}

inline void put_f32(std::ofstream& f, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_bytes(f, u, 4);
}

inline float get_f32(std::ifstream& f, const std::string& path) {
    const std::uint32_t u = static_cast<std::uint32_t>(get_bytes(f, 4, path));
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

template <class Rec>
void write_record_file(const std::string& path, std::uint32_t task, std::uint32_t dim,
                       const std::vector<Rec>& recs, float Rec::* label,
                       const std::vector<float> Rec::* data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write("DS01", 4);
    put_bytes(f, task, 4);
    put_bytes(f, dim, 4);
    put_bytes(f, recs.size(), 8);
    for (const auto& r : recs) {
        if ((r.*data).size() != dim)
            throw std::invalid_argument("record dim mismatch writing " + path);
        put_f32(f, r.*label);
        put_f32(f, r.snr_db);
        put_bytes(f, r.seed, 8);
        put_bytes(f, static_cast<std::uint32_t>(r.channel), 4);
        for (float v : r.*data) put_f32(f, v);
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

template <class Rec>
std::vector<Rec> read_record_file(const std::string& path, std::uint32_t want_task,
                                  float Rec::* label, std::vector<float> Rec::* data,
                                  std::uint32_t* dim_out = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (f.gcount() != 4 || std::memcmp(magic, "DS01", 4) != 0)
        throw std::runtime_error("bad record magic in " + path);
    const auto task = static_cast<std::uint32_t>(get_bytes(f, 4, path));
    if (task != want_task) throw std::runtime_error("wrong record task in " + path);
    const auto dim = static_cast<std::uint32_t>(get_bytes(f, 4, path));
    const auto count = get_bytes(f, 8, path);
    if (dim_out) *dim_out = dim;
    std::vector<Rec> out(count);
    for (auto& r : out) {
        r.*label = get_f32(f, path);
        r.snr_db = get_f32(f, path);
        r.seed = get_bytes(f, 8, path);
        r.channel = static_cast<ChannelKind>(get_bytes(f, 4, path));
        (r.*data).resize(dim);
        for (auto& v : r.*data) v = get_f32(f, path);
    }
    return out;
}

}  // namespace detail

inline void save_detection_records(const std::string& path,
                                   const std::vector<DetectionRecord>& recs,
                                   std::uint32_t block_len) {
    detail::write_record_file(path, 1, block_len, recs, &DetectionRecord::label,
                              &DetectionRecord::block);
}

inline std::vector<DetectionRecord> load_detection_records(const std::string& path,
                                                           std::uint32_t* block_len = nullptr) {
    return detail::read_record_file<DetectionRecord>(path, 1, &DetectionRecord::label,
                                                     &DetectionRecord::block, block_len);
}

inline void save_cfo_records(const std::string& path, const std::vector<CfoRecord>& recs) {
    detail::write_record_file(path, 2, 160, recs, &CfoRecord::label_hz, &CfoRecord::phases);
}

inline std::vector<CfoRecord> load_cfo_records(const std::string& path) {
    return detail::read_record_file<CfoRecord>(path, 2, &CfoRecord::label_hz,
                                               &CfoRecord::phases);
}

inline void save_manifest(const std::string& record_path, const std::string& task,
                          std::size_t count, std::uint32_t dim, std::uint64_t master_seed,
                          const GenConfig& cfg, nlohmann::json extra = {}) {
    nlohmann::json j;
    j["format_version"] = "DS01";
    j["task"] = task;
    j["count"] = count;
    j["dim"] = dim;
    j["master_seed"] = master_seed;
    j["config"] = cfg.to_json();
    j["config_hash"] = cfg.hash();
    if (extra.is_object())
        for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    std::ofstream f(record_path + ".json", std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + record_path + ".json");
    f << j.dump(2) << "\n";
}

/// Largest-remainder split of n indices after a seeded shuffle; ties in
/// the remainder go to the later split. Disjoint and exhaustive.
inline std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n,
                                                             std::array<double, 3> fractions,
                                                             std::uint64_t seed) {
    double fsum = fractions[0] + fractions[1] + fractions[2];
    if (fsum <= 0.0) throw std::invalid_argument("split_indices: bad fractions");
    std::array<std::size_t, 3> counts;
    std::array<double, 3> rem;
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = static_cast<double>(n) * fractions[i] / fsum;
        counts[i] = static_cast<std::size_t>(exact);
        rem[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (rem[i] >= rem[best]) best = i;  // >= : ties to the later split
        ++counts[best];
        rem[best] = -1.0;
        ++assigned;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::array<std::vector<std::size_t>, 3> out;
    std::size_t at = 0;
    for (int i = 0; i < 3; ++i) {
        out[i].assign(order.begin() + at, order.begin() + at + counts[i]);
        at += counts[i];
    }
    return out;
}

/// Conventional-detector import of a captured IQ stream: consecutive
/// B-sample blocks become DetectionRecords; each detected packet also
/// yields a CfoRecord labeled with the conventional two-stage estimate.
/// SNR is inferred from the timing-metric peak, M = (rho/(1+rho))^2.
struct ImportResult {
    std::vector<DetectionRecord> detection;
    std::vector<CfoRecord> cfo;
};

inline double snr_from_metric_peak(double m) {
    const double r = std::sqrt(std::clamp(m, 0.0, 0.999999));
    const double rho = r / (1.0 - r);
    return 10.0 * std::log10(std::max(rho, 1e-6));
}

inline ImportResult import_iq(const std::string& path, std::size_t block_len,
                              const SyncConfig& sync_cfg = {},
                              const PreambleSpec& spec = default_preamble_spec()) {
    const Waveform all = load_waveform(path);
    ImportResult out;
    const std::size_t n_blocks = all.size() / block_len;
    out.detection.assign(n_blocks, {});
    for (std::size_t b = 0; b < n_blocks; ++b) {
        auto& r = out.detection[b];
        r.block.resize(block_len);
        for (std::size_t i = 0; i < block_len; ++i)
            r.block[i] = static_cast<float>(std::abs(all.samples[b * block_len + i]));
        r.label = -1.0f;
        r.channel = ChannelKind::identity;
    }

    const std::size_t need = spec.preamble_len() + 2 * sync_cfg.corr_window;
    std::size_t pos = 0;
    while (pos + need <= all.size()) {
        Waveform seg;
        seg.sample_rate = all.sample_rate;
        const std::size_t seg_end = std::min(all.size(), pos + 4 * spec.preamble_len());
        seg.samples.assign(all.samples.begin() + pos, all.samples.begin() + seg_end);
        const auto det = detect_packet(seg, sync_cfg, spec);
        if (!det.detected || *det.tau_hat < 0) {
            // No start in this segment; slide forward, overlapping by one
            // preamble so a straddling packet is still seen whole.
            pos += std::max<std::size_t>(1, seg.samples.size() - need + 1);
            continue;
        }
        const std::size_t tau = pos + static_cast<std::size_t>(*det.tau_hat);
        if (tau + spec.preamble_len() > all.size()) break;
        const double snr_db = snr_from_metric_peak(det.metric_peak);

        const std::size_t blk = tau / block_len;
        if (blk < n_blocks) {
            out.detection[blk].label = static_cast<float>(tau - blk * block_len);
            out.detection[blk].snr_db = static_cast<float>(snr_db);
        }
        const auto cfo = estimate_cfo(all, tau, spec, sync_cfg);
        CfoRecord cr;
        cr.phases.resize(160);
        for (std::size_t i = 0; i < 160; ++i)
            cr.phases[i] = static_cast<float>(std::arg(all.samples[tau + i]));
        cr.label_hz = static_cast<float>(cfo.total_hz);
        cr.snr_db = static_cast<float>(snr_db);
        cr.channel = ChannelKind::identity;
        out.cfo.push_back(std::move(cr));
        pos = tau + spec.preamble_len();
    }
    return out;
}

}  // namespace halow

#endif
