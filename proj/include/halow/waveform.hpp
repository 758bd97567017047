// SPDX-License-Identifier: Apache-2.0
#ifndef HALOW_WAVEFORM_HPP
#define HALOW_WAVEFORM_HPP

#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace halow {

using cplx = std::complex<double>;

/// Complex baseband sample sequence with rate metadata. The universal
/// signal currency passed between the transmit, channel and receive stages.
struct Waveform {
    std::vector<cplx> samples;
    double sample_rate = 1e6;
    int oversample_factor = 1;

    std::size_t size() const { return samples.size(); }
    cplx& operator[](std::size_t i) { return samples[i]; }
    const cplx& operator[](std::size_t i) const { return samples[i]; }
};

inline double mean_power(const std::vector<cplx>& v) {
    if (v.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& s : v) acc += std::norm(s);
    return acc / static_cast<double>(v.size());
}

inline double mean_power(const Waveform& w) { return mean_power(w.samples); }

// --- Waveform file format -------------------------------------------------
// 16-byte header: magic "WV01", u32 sample_rate, u32 oversample_factor,
// u32 sample_count; then interleaved little-endian float32 I/Q.

inline void save_waveform(const Waveform& w, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    const char magic[4] = {'W', 'V', '0', '1'};
    f.write(magic, 4);
    auto put_u32 = [&f](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
        f.write(reinterpret_cast<const char*>(b), 4);
    };
    put_u32(static_cast<std::uint32_t>(w.sample_rate));
    put_u32(static_cast<std::uint32_t>(w.oversample_factor));
    put_u32(static_cast<std::uint32_t>(w.samples.size()));
    std::vector<float> buf(w.samples.size() * 2);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
        buf[2 * i] = static_cast<float>(w.samples[i].real());
        buf[2 * i + 1] = static_cast<float>(w.samples[i].imag());
    }
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

inline Waveform load_waveform(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (f.gcount() != 4 || std::memcmp(magic, "WV01", 4) != 0)
        throw std::runtime_error("bad waveform magic in " + path);
    auto get_u32 = [&f, &path]() {
        unsigned char b[4];
        f.read(reinterpret_cast<char*>(b), 4);
        if (f.gcount() != 4) throw std::runtime_error("truncated header in " + path);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    };
    Waveform w;
    w.sample_rate = get_u32();
    w.oversample_factor = static_cast<int>(get_u32());
    std::uint32_t n = get_u32();
    std::vector<float> buf(static_cast<std::size_t>(n) * 2);
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (static_cast<std::size_t>(f.gcount()) != buf.size() * sizeof(float))
        throw std::runtime_error("truncated samples in " + path);
    w.samples.resize(n);
    for (std::uint32_t i = 0; i < n; ++i)
        w.samples[i] = cplx(buf[2 * i], buf[2 * i + 1]);
    return w;
}

}  // namespace halow

#endif
