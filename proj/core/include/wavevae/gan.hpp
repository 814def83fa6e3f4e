#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wavevae/data.hpp"
#include "wavevae/models.hpp"
#include "wavevae/nn.hpp"
#include "wavevae/rng.hpp"
#include "wavevae/tensor.hpp"

namespace wvae {

enum class GanLoss { non_saturating, least_squares, wasserstein_clip };

std::string to_string(GanLoss k);
GanLoss parse_gan_loss(const std::string& s);

struct GanConfig {
    GanLoss loss = GanLoss::non_saturating;
    float clip = 0.01f;    // wasserstein_clip only
    int critic_steps = 0;  // 0 = 5 for wasserstein_clip, 1 otherwise
    float lr_generator = 2e-4f;
    float lr_discriminator = 2e-4f;
    float beta1 = 0.5f;
    std::int64_t disc_width = 0;  // 0 = generator width

    int effective_critic_steps() const;
    void validate() const;  // throws ConfigError
};

// DCGAN-style critic: 4x4 stride-2 convolutions down to 4x4, leaky relu 0.2,
// batch norm on every block but the first, then a dense layer to one score.
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(std::int64_t channels, std::int64_t extent, std::int64_t width, bool batchnorm, ParamStore& store, Rng& rng,
                  const std::string& prefix = "disc");
    Tensor forward(const Tensor& x, Mode mode);  // [B,1]

private:
    Network net_;
};

struct GanLosses {
    Tensor d_loss;
    Tensor g_loss;
};

// Batch means of the per-sample losses. d_loss and g_loss both read d_fake;
// callers decide which graph each one is backpropagated through.
GanLosses gan_losses(GanLoss kind, const Tensor& d_real, const Tensor& d_fake);

// Clamps every trainable tensor whose name starts with `prefix` into [-c, c].
void clip_weights(ParamStore& store, float c, const std::string& prefix = "disc.");

// Wavelet-space generator and critic over one parameter store. The generator
// is the single-level wavelet decoder, registered under the same "decoder."
// names a wavelet VAE uses, followed by idwt2.
class GanModel {
public:
    GanModel(const ModelConfig& generator, const GanConfig& config, std::uint64_t init_seed);

    const ModelConfig& generator_config() const { return gen_cfg_; }
    const GanConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

    WaveletPrediction generate_wavelets(const Tensor& z);
    Tensor generator_forward(const Tensor& z);
    Tensor discriminate(const Tensor& x, Mode mode) { return disc_.forward(x, mode); }
    Tensor sample(Rng& rng, std::int64_t n);  // no recording

    std::vector<std::pair<std::string, Tensor>> generator_params() const;
    std::vector<std::pair<std::string, Tensor>> discriminator_params() const;

private:
    ModelConfig gen_cfg_;
    GanConfig cfg_;
    ParamStore store_;
    WaveletDecoder decoder_;
    Discriminator disc_;
};

struct GanStepStats {
    std::int64_t step = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
};

// Alternating optimizer: critic_steps discriminator updates (each followed by
// clipping for the Wasserstein loss), then one generator update.
class GanTrainer {
public:
    GanTrainer(GanModel& model);

    // next_real supplies one real batch per critic step. A non-finite loss
    // raises NumericError naming the step.
    GanStepStats step(const std::function<Tensor()>& next_real, Rng& rng);

    Adam& generator_optimizer() { return g_opt_; }
    Adam& discriminator_optimizer() { return d_opt_; }
    std::int64_t steps_done() const { return steps_; }
    void set_steps_done(std::int64_t s) { steps_ = s; }

private:
    GanModel* model_;
    Adam g_opt_;
    Adam d_opt_;
    std::int64_t steps_ = 0;
};

struct GanTrainOptions {
    std::int64_t steps = 500;
    std::int64_t batch_size = 64;
    // Called after every step; may stop the loop by returning false.
    std::function<bool(const GanStepStats&)> on_step;
};

// Runs options.steps generator updates over reshuffled epochs of `data`.
std::vector<GanStepStats> train_gan(GanModel& model, const ImageDataset& data, Rng& rng, const GanTrainOptions& options);

// Fraction of real items scored above and fake items scored below the
// decision boundary (0 logit).
double discriminator_accuracy(GanModel& model, const Tensor& real, const Tensor& fake);

}  // namespace wvae
