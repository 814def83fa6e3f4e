#include <benchmark/benchmark.h>

#include "wavevae/data.hpp"
#include "wavevae/models.hpp"
#include "wavevae/nn.hpp"

using namespace wvae;

namespace {

// One optimizer step on a batch of 100 32x32 images at desk width.
void BM_train_step(benchmark::State& state) {
    ModelConfig c;
    c.kind = static_cast<ModelKind>(state.range(0));
    c.channels = 1;
    c.extent = 32;
    c.latent = 16;
    c.width = 8;
    VaeModel model(c, 1);
    Adam opt(model.params().trainable(), AdamConfig{1e-4f});
    const auto ds = synth(parse_synth_spec("count=100,extent=32,seed=1"));
    Rng rng(2);
    for (auto _ : state) {
        backward(model.loss(ds.images, rng).total);
        opt.step();
    }
    state.SetLabel(to_string(c.kind));
}
BENCHMARK(BM_train_step)
    ->Arg(static_cast<int>(ModelKind::vae))
    ->Arg(static_cast<int>(ModelKind::wavelet_vae))
    ->Arg(static_cast<int>(ModelKind::wavelet_vae_mr))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
