// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <numbers>
#include <random>

#include "halow/preamble.hpp"
#include "halow/resample.hpp"

using namespace halow;

TEST_CASE("idft of DC bin is the all-ones sequence") {
    SpectrumSymbol x;
    x.bins.assign(32, cplx(0.0, 0.0));
    x.bins[0] = cplx(32.0, 0.0);
    auto t = idft(x, 32);
    for (const auto& v : t) {
        CHECK(v.real() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(v.imag() == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("idft of all-zeros is all-zeros") {
    SpectrumSymbol x;
    x.bins.assign(32, cplx(0.0, 0.0));
    for (const auto& v : idft(x, 32)) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("dft of all-ones concentrates in the DC bin") {
    std::vector<cplx> t(32, cplx(1.0, 0.0));
    auto y = dft(t, 32);
    CHECK(std::abs(y.bins[0] - cplx(32.0, 0.0)) < 1e-9);
    for (std::size_t k = 1; k < 32; ++k) CHECK(std::abs(y.bins[k]) < 1e-9);
}

TEST_CASE("dft of an impulse is a flat spectrum") {
    std::vector<cplx> t(32, cplx(0.0, 0.0));
    t[0] = cplx(1.0, 0.0);
    for (const auto& b : dft(t, 32).bins)
        CHECK(std::abs(b - cplx(1.0, 0.0)) < 1e-12);
}

TEST_CASE("dft(idft(X)) round-trips random spectra within 1e-9") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    SpectrumSymbol x;
    for (int k = 0; k < 32; ++k) x.bins.push_back(cplx(u(rng), u(rng)));
    auto back = dft(idft(x, 32), 32);
    for (int k = 0; k < 32; ++k) CHECK(std::abs(back.bins[k] - x.bins[k]) < 1e-9);
}

TEST_CASE("Parseval: sum |y|^2 = (1/N) sum |Y|^2 on random input") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<cplx> t;
    for (int n = 0; n < 32; ++n) t.push_back(cplx(u(rng), u(rng)));
    auto y = dft(t, 32);
    double lhs = 0.0, rhs = 0.0;
    for (const auto& v : t) lhs += std::norm(v);
    for (const auto& b : y.bins) rhs += std::norm(b);
    CHECK(lhs == doctest::Approx(rhs / 32.0).epsilon(1e-9));
}

TEST_CASE("idft/dft reject mismatched lengths") {
    SpectrumSymbol x;
    x.bins.assign(16, cplx(0.0, 0.0));
    CHECK_THROWS_AS(idft(x, 32), std::invalid_argument);
    std::vector<cplx> t(16);
    CHECK_THROWS_AS(dft(t, 32), std::invalid_argument);
}

TEST_CASE("default preamble spec invariants") {
    auto s = default_preamble_spec();
    CHECK(s.stf_len == 10 * s.sts_len);
    CHECK(s.ltf_len == 32 + 2 * s.lts_len);
    CHECK(s.preamble_len() == 560);
    CHECK(mean_power(s.sts) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(mean_power(s.lts) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("generate_ndp layout") {
    auto spec = default_preamble_spec();
    auto w = generate_ndp(spec);
    CHECK(w.samples.size() == 560);
    CHECK(w.sample_rate == 1e6);

    // STS repetition: x[n] = x[n+16] across the whole STF.
    for (std::size_t n = 0; n < 144; ++n)
        CHECK(std::abs(w.samples[n] - w.samples[n + 16]) < 1e-12);

    // Guard-equals-LTS-tail makes the lag-64 equality hold across LTF1.
    for (std::size_t n = 0; n < 96; ++n)
        CHECK(std::abs(w.samples[160 + n] - w.samples[160 + n + 64]) < 1e-12);

    // Deterministic: repeat calls are bit-identical.
    auto w2 = generate_ndp(spec);
    for (std::size_t n = 0; n < w.samples.size(); ++n)
        CHECK(w.samples[n] == w2.samples[n]);
}

TEST_CASE("oversample factor 1 is the identity") {
    auto w = generate_ndp(default_preamble_spec());
    auto o = oversample(w, 1);
    REQUIRE(o.samples.size() == w.samples.size());
    for (std::size_t n = 0; n < w.samples.size(); ++n)
        CHECK(o.samples[n] == w.samples[n]);
    CHECK_THROWS_AS(oversample(w, 0), std::invalid_argument);
    CHECK_THROWS_AS(downsample(w, 0), std::invalid_argument);
}

TEST_CASE("oversample preserves a mid-band tone") {
    Waveform w;
    w.sample_rate = 1e6;
    const int n_in = 512;
    for (int n = 0; n < n_in; ++n)
        w.samples.push_back(std::polar(1.0, 2.0 * std::numbers::pi * 0.1 * n));
    auto o = oversample(w, 4);
    REQUIRE(o.samples.size() == static_cast<std::size_t>(n_in) * 4);
    CHECK(o.sample_rate == 4e6);
    // Compare against the analytically resampled tone away from the edges.
    for (std::size_t m = 64; m + 64 < o.samples.size(); ++m) {
        cplx ref = std::polar(1.0, 2.0 * std::numbers::pi * 0.025 * static_cast<double>(m));
        CHECK(std::abs(std::abs(o.samples[m]) - 1.0) < 0.01);
        CHECK(std::abs(o.samples[m] - ref) < 0.02);
    }
}

TEST_CASE("oversample/downsample round trip on the NDP: EVM < -40 dB") {
    auto w = generate_ndp(default_preamble_spec());
    // A long filter keeps the transition error below the -40 dB target;
    // the symbol-boundary splatter near Nyquist needs the narrow transition.
    const std::size_t taps = 321;
    auto rt = downsample(oversample(w, 4, taps), 4, taps);
    REQUIRE(rt.samples.size() == w.samples.size());
    // Exclude the filter transition at both ends.
    double err = 0.0, sig = 0.0;
    for (std::size_t n = taps / 4 + 2; n + taps / 4 + 2 < w.samples.size(); ++n) {
        err += std::norm(rt.samples[n] - w.samples[n]);
        sig += std::norm(w.samples[n]);
    }
    double evm_db = 10.0 * std::log10(err / sig);
    CHECK(evm_db < -40.0);
}

TEST_CASE("waveform file round trip and error paths") {
    auto w = generate_ndp(default_preamble_spec());
    const std::string path = "test_phy_wave.bin";
    save_waveform(w, path);
    auto r = load_waveform(path);
    CHECK(r.sample_rate == w.sample_rate);
    CHECK(r.oversample_factor == w.oversample_factor);
    REQUIRE(r.samples.size() == w.samples.size());
    for (std::size_t n = 0; n < w.samples.size(); ++n)
        CHECK(std::abs(r.samples[n] - w.samples[n]) < 1e-6);  // float32 storage

    std::ofstream bad("test_phy_bad.bin", std::ios::binary);
    bad << "XXXXgarbage";
    bad.close();
    CHECK_THROWS(load_waveform("test_phy_bad.bin"));
}
