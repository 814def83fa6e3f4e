#include <benchmark/benchmark.h>

#include "wavevae/metrics.hpp"
#include "wavevae/rng.hpp"
#include "wavevae/tensor.hpp"
#include "wavevae/wavelet.hpp"

using namespace wvae;

namespace {

Tensor noise(Rng& rng, Shape s) {
    Tensor t(std::move(s));
    for (float& v : t.mutable_values()) v = static_cast<float>(rng.uniform());
    return t;
}

// 4/2/1 convolution as used by the encoder; arg is the input extent.
void BM_conv2d_forward(benchmark::State& state) {
    Rng rng(1);
    const std::int64_t e = state.range(0);
    const Tensor x = noise(rng, {32, 16, e, e}), k = noise(rng, {32, 16, 4, 4});
    NoGradGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 2, 1));
}
BENCHMARK(BM_conv2d_forward)->Arg(16)->Arg(32);

void BM_conv2d_backward(benchmark::State& state) {
    Rng rng(2);
    Tensor x = noise(rng, {32, 16, 16, 16}), k = noise(rng, {32, 16, 4, 4});
    k.requires_grad_();
    for (auto _ : state) {
        backward(sum(conv2d(x, k, 2, 1)));
        k.zero_grad();
    }
}
BENCHMARK(BM_conv2d_backward);

void BM_dwt2(benchmark::State& state) {
    Rng rng(3);
    const Tensor x = noise(rng, {64, 3, state.range(0), state.range(0)});
    NoGradGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(dwt2(x));
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(x.numel() * sizeof(float)));
}
BENCHMARK(BM_dwt2)->Arg(32)->Arg(64);

void BM_pyramid_round_trip(benchmark::State& state) {
    Rng rng(4);
    const Tensor x = noise(rng, {16, 3, 64, 64});
    NoGradGuard ng;
    for (auto _ : state) benchmark::DoNotOptimize(reconstruct(decompose(x, 3)));
}
BENCHMARK(BM_pyramid_round_trip);

void BM_fft2(benchmark::State& state) {
    Rng rng(5);
    const std::int64_t n = state.range(0);
    std::vector<double> g(static_cast<std::size_t>(n * n));
    for (double& v : g) v = rng.uniform();
    for (auto _ : state) benchmark::DoNotOptimize(fft2(g, n));
}
BENCHMARK(BM_fft2)->Arg(32)->Arg(64);

void BM_iqm_batch(benchmark::State& state) {
    Rng rng(6);
    const Tensor x = noise(rng, {256, 1, 32, 32});
    for (auto _ : state) benchmark::DoNotOptimize(iqm(x));
    state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_iqm_batch);

}  // namespace
