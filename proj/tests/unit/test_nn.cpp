#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "wavevae/error.hpp"
#include "wavevae/nn.hpp"

using namespace wvae;

TEST_CASE("init: zero biases, he variance, seed determinism") {
    Rng rng(1);
    auto p = init_params(LayerSpec::conv(64, 128, 4, 2, 1), rng);
    for (float v : p.bias.values()) CHECK(v == 0.0f);
    double s2 = 0.0;
    for (float v : p.weight.values()) s2 += static_cast<double>(v) * v;
    const double var = s2 / static_cast<double>(p.weight.numel());
    const double expect = 2.0 / (64.0 * 16.0);
    CHECK(var > 0.8 * expect);
    CHECK(var < 1.2 * expect);

    Rng a(9), b(9);
    auto pa = init_params(LayerSpec::dense(10, 5), a);
    auto pb = init_params(LayerSpec::dense(10, 5), b);
    CHECK(oracle::max_abs_diff(pa.weight, pb.weight) == 0.0);
}

TEST_CASE("empty network is the identity") {
    ParamStore store;
    Rng rng(0);
    Network net("empty", {}, store, rng);
    Tensor x = oracle::random_tensor(rng, {2, 3});
    CHECK(oracle::max_abs_diff(net.forward(x, Mode::train), x) == 0.0);
}

TEST_CASE("layer output shapes") {
    CHECK(LayerSpec::conv(3, 8, 4, 2, 1).output_shape({5, 3, 32, 32}) == Shape{5, 8, 16, 16});
    CHECK(LayerSpec::conv_transpose(8, 4, 4, 2, 1).output_shape({5, 8, 4, 4}) == Shape{5, 4, 8, 8});
    CHECK(LayerSpec::flatten().output_shape({5, 2, 3, 3}) == Shape{5, 18});
    CHECK(LayerSpec::unflatten(2, 3, 3).output_shape({5, 18}) == Shape{5, 2, 3, 3});
    CHECK_THROWS_AS(LayerSpec::dense(4, 2).output_shape({5, 3}), ShapeError);
}

TEST_CASE("parameter store naming and duplicates") {
    ParamStore store;
    Rng rng(0);
    Network net("enc", {LayerSpec::conv(1, 2, 3, 1, 1), LayerSpec::batchnorm(2)}, store, rng);
    CHECK(store.contains("enc.0.weight"));
    CHECK(store.contains("enc.1.running_var"));
    CHECK(store.trainable().size() == 4);
    CHECK_THROWS_AS(store.add("enc.0.weight", Tensor::zeros({1})), StateError);
}

TEST_CASE("adam first step is lr times sign") {
    Tensor w = Tensor::vector({1.0f, -2.0f});
    Adam opt({{"w", w}}, AdamConfig{1e-4f});
    w.requires_grad_();
    auto g = w.mutable_grad();
    g[0] = 1.0f;
    g[1] = -3.0f;
    opt.step();
    CHECK(w.values()[0] == doctest::Approx(1.0 - 1e-4).epsilon(1e-7));
    CHECK(w.values()[1] == doctest::Approx(-2.0 + 1e-4).epsilon(1e-7));
    CHECK(opt.step_count() == 1);
}

TEST_CASE("adam leaves zero-gradient parameters in place") {
    Tensor w = Tensor::vector({0.5f});
    Adam opt({{"w", w}});
    w.requires_grad_();
    w.mutable_grad()[0] = 0.0f;
    opt.step();
    CHECK(w.item() == 0.5f);
}

TEST_CASE("adam trajectories are deterministic") {
    auto run = [] {
        Rng rng(4);
        Tensor w = oracle::random_tensor(rng, {5});
        w.requires_grad_();
        Adam opt({{"w", w}}, AdamConfig{1e-2f});
        for (int i = 0; i < 20; ++i) {
            backward(sum(square(w - 0.3f)));
            opt.step();
        }
        return std::vector<float>(w.values().begin(), w.values().end());
    };
    CHECK(run() == run());
}

TEST_CASE("learning-rate halving") {
    CHECK(LrSchedule{1e-4f, 300}.rate(0) == doctest::Approx(1e-4));
    CHECK(LrSchedule{1e-4f, 300}.rate(300) == doctest::Approx(5e-5));
    CHECK(LrSchedule{1e-4f, 48}.rate(96) == doctest::Approx(2.5e-5));
    CHECK(LrSchedule{1e-4f, 0}.rate(1000) == doctest::Approx(1e-4));
}
