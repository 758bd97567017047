// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "halow/nn/checkpoint.hpp"
#include "halow/nn/layers.hpp"
#include "halow/nn/tensor.hpp"
#include "halow/nn/train.hpp"

using namespace halow::nn;

namespace {

/// Scalar objective J = sum_i c_i out_i; its analytic parameter and input
/// gradients come from backward(grad_out = c), the reference from central
/// finite differences.
double objective(const std::vector<LayerSpec>& net, const Weights<double>& w,
                 const std::vector<double>& x, const std::vector<double>& c) {
    const auto out = forward(net, w, x);
    double j = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) j += c[i] * out[i];
    return j;
}

/// Max relative error between analytic and finite-difference gradients
/// over every parameter and every input element.
double grad_check(const std::vector<LayerSpec>& net, std::size_t in_len, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto w = init_weights<double>(net, seed * 7919 + 1);
    std::vector<double> x(in_len);
    for (auto& v : x) v = u(rng);

    Cache<double> cache;
    const auto out = forward(net, w, x, &cache);
    std::vector<double> c(out.size());
    for (auto& v : c) v = u(rng);
    const auto an = backward(net, w, cache, c);

    const double h = 1e-4;
    double worst = 0.0;
    auto rel = [&](double analytic, double fd) {
        return std::abs(analytic - fd) / std::max({1e-3, std::abs(analytic), std::abs(fd)});
    };
    for (std::size_t li = 0; li < w.size(); ++li)
        for (std::size_t ti = 0; ti < w[li].size(); ++ti)
            for (std::size_t i = 0; i < w[li][ti].data.size(); ++i) {
                const double keep = w[li][ti].data[i];
                w[li][ti].data[i] = keep + h;
                const double jp = objective(net, w, x, c);
                w[li][ti].data[i] = keep - h;
                const double jm = objective(net, w, x, c);
                w[li][ti].data[i] = keep;
                worst = std::max(worst, rel(an.grad[li][ti].data[i], (jp - jm) / (2 * h)));
            }
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double jp = objective(net, w, x, c);
        x[i] = keep - h;
        const double jm = objective(net, w, x, c);
        x[i] = keep;
        worst = std::max(worst, rel(an.input_grad[i], (jp - jm) / (2 * h)));
    }
    return worst;
}

}  // namespace

TEST_CASE("dense identity passes input through") {
    std::vector<LayerSpec> net{LayerSpec::dense(3, 3)};
    auto w = zero_weights<double>(net);
    for (std::size_t i = 0; i < 3; ++i) w[0][0].data[i * 3 + i] = 1.0;
    const std::vector<double> x{0.5, -1.25, 3.0};
    CHECK(forward(net, w, x) == x);
}

TEST_CASE("relu clamps negatives") {
    std::vector<LayerSpec> net{LayerSpec::relu()};
    auto w = zero_weights<double>(net);
    const auto y = forward(net, w, std::vector<double>{-1.0, 0.0, 2.0});
    CHECK(y == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("all-zero LSTM produces a zero final state") {
    std::vector<LayerSpec> net{LayerSpec::lstm(4, 3, 5)};
    auto w = zero_weights<double>(net);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(15);
    for (auto& v : x) v = u(rng);
    for (double v : forward(net, w, x)) CHECK(v == 0.0);
}

TEST_CASE("forward validates shapes") {
    std::vector<LayerSpec> net{LayerSpec::dense(5, 2)};
    auto w = zero_weights<double>(net);
    CHECK_THROWS_AS(forward(net, w, std::vector<double>(4, 0.0)), std::invalid_argument);
    std::vector<LayerSpec> conv{LayerSpec::conv1d(8, 4, 9)};
    auto wc = zero_weights<double>(conv);
    CHECK_THROWS_AS(forward(conv, wc, std::vector<double>(13, 0.0)), std::invalid_argument);
    CHECK(conv[0].out_len(40) == 9 * 3);  // width 10 per channel, K = 10-8+1
}

TEST_CASE("conv1d matches a naive per-element oracle") {
    std::vector<LayerSpec> net{LayerSpec::conv1d(3, 2, 2)};
    auto w = init_weights<double>(net, 11);
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(12);
    for (auto& v : x) v = u(rng);
    const auto y = forward(net, w, x);
    const std::size_t w_in = 6, F = 3, K = w_in - F + 1;
    for (std::size_t o = 0; o < 2; ++o)
        for (std::size_t k = 0; k < K; ++k) {
            double acc = w[0][1].data[o];
            for (std::size_t c = 0; c < 2; ++c)
                for (std::size_t f = 0; f < F; ++f)
                    acc += w[0][0].data[(o * 2 + c) * F + f] * x[c * w_in + k + f];
            CHECK(y[o * K + k] == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("gradients match central finite differences for every layer kind") {
    struct Case {
        std::vector<LayerSpec> net;
        std::size_t in_len;
    };
    const Case cases[] = {
        {{LayerSpec::dense(5, 4)}, 5},
        {{LayerSpec::dense(5, 5), LayerSpec::relu(), LayerSpec::dense(5, 2)}, 5},
        {{LayerSpec::tanh_act(), LayerSpec::dense(5, 3)}, 5},
        {{LayerSpec::conv1d(3, 2, 3)}, 14},
        {{LayerSpec::lstm(5, 4, 6)}, 24},
        {{LayerSpec::gru(5, 4, 6)}, 24},
        {{LayerSpec::lstm(4, 3, 5), LayerSpec::dense(4, 1)}, 15},
        {{LayerSpec::gru(4, 3, 5), LayerSpec::dense(4, 1)}, 15},
    };
    for (const auto& cs : cases)
        for (std::uint64_t inst = 0; inst < 20; ++inst)
            CHECK(grad_check(cs.net, cs.in_len, inst * 131 + cs.in_len) < 1e-4);
}

TEST_CASE("zero upstream gradient yields zero parameter gradients") {
    std::vector<LayerSpec> net{LayerSpec::gru(3, 2, 4), LayerSpec::dense(3, 2)};
    auto w = init_weights<double>(net, 21);
    Cache<double> cache;
    std::vector<double> x(8, 0.3);
    forward(net, w, x, &cache);
    auto res = backward(net, w, cache, std::vector<double>{0.0, 0.0});
    for (const auto& layer : res.grad)
        for (const auto& t : layer)
            for (double v : t.data) CHECK(v == 0.0);
}

TEST_CASE("mse loss and gradient") {
    auto r = mse_loss<double>({1.0, -2.0, 0.5}, {1.0, -2.0, 0.5});
    CHECK(r.loss == 0.0);
    for (double g : r.grad) CHECK(g == 0.0);

    auto r1 = mse_loss<double>({0.0}, {1.0});
    CHECK(r1.loss == doctest::Approx(1.0));
    CHECK(r1.grad[0] == doctest::Approx(-2.0));

    // Independent scalar recomputation on a random case.
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<double> p(7), t(7);
    for (auto& v : p) v = u(rng);
    for (auto& v : t) v = u(rng);
    auto r2 = mse_loss(p, t);
    double want = 0.0;
    for (std::size_t i = 0; i < 7; ++i) want += (t[i] - p[i]) * (t[i] - p[i]);
    want /= 7.0;
    CHECK(r2.loss == doctest::Approx(want).epsilon(1e-12));
    for (std::size_t i = 0; i < 7; ++i)
        CHECK(r2.grad[i] == doctest::Approx(2.0 * (p[i] - t[i]) / 7.0).epsilon(1e-12));
}

TEST_CASE("first Adam step on f(w)=w^2 moves 1 -> 0.999") {
    std::vector<LayerSpec> net{LayerSpec::dense(1, 1)};
    auto w = zero_weights<double>(net);
    w[0][0].data[0] = 1.0;
    auto g = zero_weights<double>(net);
    g[0][0].data[0] = 2.0;
    auto st = AdamState<double>::init(net);
    adam_step(st, w, g);
    CHECK(w[0][0].data[0] == doctest::Approx(0.999).epsilon(1e-6));

    // Zero gradient forever (fresh moments) leaves parameters unchanged.
    auto st2 = AdamState<double>::init(net);
    auto gz = zero_weights<double>(net);
    const double keep = w[0][0].data[0];
    for (int i = 0; i < 10; ++i) adam_step(st2, w, gz);
    CHECK(w[0][0].data[0] == keep);
}

TEST_CASE("two Adam engines on identical gradients stay identical") {
    std::vector<LayerSpec> net{LayerSpec::dense(3, 2)};
    auto w1 = init_weights<double>(net, 5);
    auto w2 = w1;
    auto s1 = AdamState<double>::init(net);
    auto s2 = AdamState<double>::init(net);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int step = 0; step < 25; ++step) {
        auto g = zero_weights<double>(net);
        for (auto& t : g[0])
            for (auto& v : t.data) v = u(rng);
        adam_step(s1, w1, g);
        adam_step(s2, w2, g);
    }
    for (std::size_t ti = 0; ti < w1[0].size(); ++ti)
        CHECK(w1[0][ti].data == w2[0][ti].data);
}

TEST_CASE("training a single dense layer recovers slope 2") {
    std::vector<LayerSpec> net{LayerSpec::dense(1, 1)};
    std::vector<Sample<float>> data;
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const float x = static_cast<float>(u(rng));
        data.push_back({{x}, 2.0f * x});
    }
    TrainConfig cfg;
    cfg.batch = 10;
    cfg.epochs = 500;
    cfg.seed = 42;
    auto w = train(net, data, {}, cfg);
    CHECK(w[0][0].data[0] == doctest::Approx(2.0).epsilon(0.005));
    CHECK(std::abs(w[0][1].data[0]) < 0.01);
}

TEST_CASE("overfit smoke set: loss drops by 90% within 200 epochs") {
    std::vector<LayerSpec> net{LayerSpec::dense(2, 16), LayerSpec::relu(), LayerSpec::dense(16, 1)};
    std::vector<Sample<float>> data;
    std::mt19937_64 rng(51);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        const float a = static_cast<float>(u(rng)), b = static_cast<float>(u(rng));
        data.push_back({{a, b}, 0.5f * a - 0.3f * b + 0.2f});
    }
    std::vector<double> losses;
    TrainConfig cfg;
    cfg.batch = 10;
    cfg.epochs = 200;
    cfg.seed = 52;
    cfg.on_epoch = [&](std::size_t, double tl, double) { losses.push_back(tl); };
    train(net, data, {}, cfg);
    REQUIRE(losses.size() == 200);
    CHECK(losses.back() <= 0.1 * losses.front());
}

TEST_CASE("constant target converges to the zero-variance baseline") {
    std::vector<LayerSpec> net{LayerSpec::dense(3, 1)};
    std::vector<Sample<float>> data;
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 60; ++i)
        data.push_back({{static_cast<float>(u(rng)), static_cast<float>(u(rng)),
                         static_cast<float>(u(rng))},
                        0.7f});
    double last = 1.0;
    TrainConfig cfg;
    cfg.batch = 10;
    cfg.epochs = 600;
    cfg.seed = 62;
    cfg.on_epoch = [&](std::size_t, double tl, double) { last = tl; };
    train(net, data, {}, cfg);
    CHECK(last < 1e-3);
}

TEST_CASE("training is bit-identical for equal seeds and any thread count") {
    std::vector<LayerSpec> net{LayerSpec::gru(4, 2, 3), LayerSpec::dense(4, 1)};
    std::vector<Sample<float>> data;
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 40; ++i) {
        std::vector<float> x(6);
        for (auto& v : x) v = static_cast<float>(u(rng));
        data.push_back({x, static_cast<float>(u(rng))});
    }
    TrainConfig cfg;
    cfg.batch = 8;
    cfg.epochs = 15;
    cfg.seed = 72;
    auto w1 = train(net, data, {}, cfg);
    auto w2 = train(net, data, {}, cfg);
    cfg.threads = 3;
    auto w3 = train(net, data, {}, cfg);
    for (std::size_t li = 0; li < w1.size(); ++li)
        for (std::size_t ti = 0; ti < w1[li].size(); ++ti) {
            CHECK(w1[li][ti].data == w2[li][ti].data);
            CHECK(w1[li][ti].data == w3[li][ti].data);
        }
}

TEST_CASE("non-finite loss aborts training with a diagnostic") {
    std::vector<LayerSpec> net{LayerSpec::dense(1, 1)};
    std::vector<Sample<float>> data{{{1e30f}, 0.0f}};
    TrainConfig cfg;
    cfg.batch = 1;
    cfg.epochs = 5;
    CHECK_THROWS_AS(train(net, data, {}, cfg), std::runtime_error);
}

TEST_CASE("weight init respects the fan-in bound, LSTM forget bias near 1") {
    std::vector<LayerSpec> net{LayerSpec::dense(16, 4), LayerSpec::lstm(5, 3, 2)};
    auto w = init_weights<double>(net, 81);
    const double bd = std::sqrt(1.0 / 16.0);
    for (double v : w[0][0].data) CHECK(std::abs(v) <= bd);
    const double bl = std::sqrt(1.0 / 5.0);
    for (std::size_t j = 5; j < 10; ++j) {
        CHECK(w[1][2].data[j] >= 1.0 - bl);
        CHECK(w[1][2].data[j] <= 1.0 + bl);
    }
    // Same seed, same weights; different seed, different weights.
    auto w2 = init_weights<double>(net, 81);
    CHECK(w[0][0].data == w2[0][0].data);
    auto w3 = init_weights<double>(net, 82);
    CHECK(w[0][0].data != w3[0][0].data);
}

TEST_CASE("checkpoint round trip preserves weights and metadata") {
    std::vector<LayerSpec> net{LayerSpec::conv1d(8, 4, 9), LayerSpec::relu(),
                               LayerSpec::dense(27, 1)};
    auto w = init_weights<float>(net, 91);
    nlohmann::json extra;
    extra["model_kind"] = "detector";
    extra["block_len"] = 40;
    save_checkpoint("ck_test", net, w, extra);
    auto ck = load_checkpoint<float>("ck_test");
    REQUIRE(ck.net.size() == 3);
    CHECK(ck.net[0].kind == LayerKind::conv1d);
    CHECK(ck.manifest["model_kind"] == "detector");
    CHECK(ck.manifest["block_len"] == 40);
    for (std::size_t li = 0; li < w.size(); ++li)
        for (std::size_t ti = 0; ti < w[li].size(); ++ti)
            CHECK(ck.weights[li][ti].data == w[li][ti].data);

    // Saving twice is byte-identical.
    save_checkpoint("ck_test2", net, w, extra);
    auto slurp = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        std::ostringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    CHECK(slurp("ck_test.json") == slurp("ck_test2.json"));
    CHECK(slurp("ck_test.bin") == slurp("ck_test2.bin"));

    CHECK_THROWS_AS(load_checkpoint<float>("ck_missing"), std::runtime_error);
}
