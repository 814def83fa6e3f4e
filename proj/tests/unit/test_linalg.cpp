#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "wavevae/error.hpp"
#include "wavevae/tensor.hpp"

using namespace wvae;

TEST_CASE("matmul hand values") {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor m({2, 2}, {1, 2, 3, 4});
    CHECK(oracle::max_abs_diff(matmul(eye, m), m) == 0.0);
    CHECK(matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4})).item() == 11.0f);
    CHECK_THROWS_AS(matmul(m, Tensor::ones({3, 2})), ShapeError);
}

TEST_CASE("matmul gradient 4x5 by 5x3") {
    Rng rng(1);
    Tensor a = oracle::random_tensor(rng, {4, 5});
    Tensor b = oracle::random_tensor(rng, {5, 3});
    Tensor w = oracle::random_tensor(rng, {4, 3});
    CHECK(oracle::grad_check([=] { return oracle::contract(matmul(a, b), w); }, {a, b}) < 1e-3);
}

TEST_CASE("conv2d hand values") {
    Rng rng(2);
    Tensor x = oracle::random_tensor(rng, {1, 1, 4, 4});
    CHECK(oracle::max_abs_diff(conv2d(x, Tensor::ones({1, 1, 1, 1})), x) == 0.0);
    CHECK(conv2d(Tensor::ones({1, 1, 3, 3}), Tensor::ones({1, 1, 3, 3})).item() == 9.0f);
}

TEST_CASE("conv2d matches direct summation") {
    Rng rng(4);
    for (int stride : {1, 2})
        for (int pad : {0, 1, 2}) {
            Tensor x = oracle::random_tensor(rng, {2, 3, 7, 9});
            Tensor k = oracle::random_tensor(rng, {4, 3, 3, 3});
            Shape s;
            auto ref = oracle::naive_conv2d(x, k, stride, pad, &s);
            Tensor y = conv2d(x, k, stride, pad);
            REQUIRE(y.shape() == s);
            double err = 0.0;
            for (std::size_t i = 0; i < ref.size(); ++i) err = std::max(err, std::fabs(ref[i] - y.values()[i]));
            CHECK(err < 1e-5);
        }
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
    Rng rng(6);
    for (int stride : {1, 2}) {
        Tensor x = oracle::random_tensor(rng, {2, 3, 8, 8});
        Tensor k = oracle::random_tensor(rng, {5, 3, 4, 4});
        Tensor y = oracle::random_tensor(rng, conv2d(x, k, stride, 1).shape());
        // <conv(x), y> == <x, conv^T(y)> with the same kernel viewed [Cout,Cin,..].
        const double lhs = sum(conv2d(x, k, stride, 1) * y).item();
        Tensor xt = conv_transpose2d(y, k, stride, 1);
        REQUIRE(xt.shape() == x.shape());
        const double rhs = sum(x * xt).item();
        CHECK(std::fabs(lhs - rhs) / std::max(1.0, std::fabs(lhs)) < 1e-5);
    }
}

TEST_CASE("stride-2 transpose of a 1x1 input reproduces the kernel") {
    Tensor k({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor y = conv_transpose2d(Tensor::ones({1, 1, 1, 1}), k, 2, 0);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    CHECK(oracle::max_abs_diff(reshape(y, {1, 1, 2, 2}), k) == 0.0);
}

TEST_CASE("convolution output shapes and errors") {
    CHECK(conv2d(Tensor::zeros({2, 3, 32, 32}), Tensor::zeros({8, 3, 4, 4}), 2, 1).shape() == Shape{2, 8, 16, 16});
    CHECK(conv_transpose2d(Tensor::zeros({2, 8, 4, 4}), Tensor::zeros({8, 3, 4, 4}), 2, 1).shape() == Shape{2, 3, 8, 8});
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3})), ShapeError);
}

TEST_CASE("batch norm statistics") {
    Tensor x({4, 1}, {1, 2, 3, 4});
    Tensor rm = Tensor::zeros({1}), rv = Tensor::ones({1});
    Tensor y = batch_norm(x, Tensor::ones({1}), Tensor::zeros({1}), rm, rv, true);
    CHECK(sum(y).item() == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(rm.item() == doctest::Approx(0.25));  // 0.9*0 + 0.1*2.5
    Tensor e = batch_norm(x, Tensor::ones({1}), Tensor::zeros({1}), rm, rv, false);
    CHECK(e.values()[0] == doctest::Approx((1 - 0.25) / std::sqrt(rv.item() + 1e-5)));
}

TEST_CASE("avg pool") {
    Tensor x({1, 1, 2, 2}, {1, 2, 3, 6});
    CHECK(avg_pool2d(x, 2).item() == 3.0f);
}
