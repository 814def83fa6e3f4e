#include "wavevae/gan.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "wavevae/error.hpp"
#include "wavevae/wavelet.hpp"

namespace wvae {

std::string to_string(GanLoss k) {
    switch (k) {
        case GanLoss::non_saturating: return "non_saturating";
        case GanLoss::least_squares: return "least_squares";
        case GanLoss::wasserstein_clip: return "wasserstein_clip";
    }
    return "?";
}

GanLoss parse_gan_loss(const std::string& s) {
    if (s == "non_saturating" || s == "ns" || s == "gan_ns") return GanLoss::non_saturating;
    if (s == "least_squares" || s == "ls" || s == "gan_ls") return GanLoss::least_squares;
    if (s == "wasserstein_clip" || s == "wclip" || s == "gan_wclip") return GanLoss::wasserstein_clip;
    throw ConfigError("unknown GAN loss '" + s + "'");
}

int GanConfig::effective_critic_steps() const {
    if (critic_steps > 0) return critic_steps;
    return loss == GanLoss::wasserstein_clip ? 5 : 1;
}

void GanConfig::validate() const {
    if (loss == GanLoss::wasserstein_clip && !(clip > 0)) throw ConfigError("gan: clip bound must be positive");
    if (critic_steps < 0) throw ConfigError("gan: critic steps must be >= 1 (0 selects the default)");
    if (!(lr_generator > 0) || !(lr_discriminator > 0)) throw ConfigError("gan: learning rates must be positive");
    if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("gan: beta1 must lie in [0, 1)");
    if (disc_width < 0) throw ConfigError("gan: discriminator width must be non-negative");
}

Discriminator::Discriminator(std::int64_t channels, std::int64_t extent, std::int64_t width, bool batchnorm, ParamStore& store,
                             Rng& rng, const std::string& prefix) {
    std::vector<LayerSpec> specs;
    std::int64_t in = channels;
    for (std::int64_t e = extent, i = 0; e > 4; e /= 2, ++i) {
        const std::int64_t out = width << i;
        specs.push_back(LayerSpec::conv(in, out, 4, 2, 1));
        if (i > 0 && batchnorm) specs.push_back(LayerSpec::batchnorm(out));
        specs.push_back(LayerSpec::activation(Activation::leaky_relu));
        in = out;
    }
    specs.push_back(LayerSpec::flatten());
    specs.push_back(LayerSpec::dense(in * 16, 1));
    net_ = Network(prefix, std::move(specs), store, rng);
}

Tensor Discriminator::forward(const Tensor& x, Mode mode) { return net_.forward(x, mode); }

GanLosses gan_losses(GanLoss kind, const Tensor& d_real, const Tensor& d_fake) {
    switch (kind) {
        case GanLoss::non_saturating:
            // -log sigmoid(a) = softplus(-a), -log(1 - sigmoid(a)) = softplus(a)
            return {mean(softplus(-d_real)) + mean(softplus(d_fake)), mean(softplus(-d_fake))};
        case GanLoss::least_squares:
            return {mean(square(d_real - 1.0f)) * 0.5f + mean(square(d_fake)) * 0.5f, mean(square(d_fake - 1.0f)) * 0.5f};
        case GanLoss::wasserstein_clip:
            return {mean(d_fake) - mean(d_real), -mean(d_fake)};
    }
    throw ConfigError("gan_losses: unknown loss kind");
}

void clip_weights(ParamStore& store, float c, const std::string& prefix) {
    if (!(c > 0)) throw ConfigError("clip_weights: bound must be positive");
    for (const auto& e : store.entries()) {
        if (!e.trainable || e.name.rfind(prefix, 0) != 0) continue;
        Tensor t = e.tensor;
        for (float& v : t.mutable_values()) v = std::clamp(v, -c, c);
    }
}

GanModel::GanModel(const ModelConfig& generator, const GanConfig& config, std::uint64_t init_seed)
    : gen_cfg_(generator), cfg_(config) {
    gen_cfg_.validate();
    cfg_.validate();
    Rng rng(init_seed);
    decoder_ = WaveletDecoder(gen_cfg_, 1, store_, rng);
    const std::int64_t width = cfg_.disc_width > 0 ? cfg_.disc_width : gen_cfg_.width;
    disc_ = Discriminator(gen_cfg_.channels, gen_cfg_.extent, width, true, store_, rng);
}

WaveletPrediction GanModel::generate_wavelets(const Tensor& z) { return decoder_.forward(z, 1); }

Tensor GanModel::generator_forward(const Tensor& z) { return image_from_prediction(generate_wavelets(z)); }

Tensor GanModel::sample(Rng& rng, std::int64_t n) {
    NoGradGuard no_grad;
    return generator_forward(sample_normal(rng, {n, gen_cfg_.latent}));
}

namespace {
std::vector<std::pair<std::string, Tensor>> with_prefix(const ParamStore& store, const std::string& prefix) {
    std::vector<std::pair<std::string, Tensor>> out;
    for (auto& p : store.trainable()) {
        if (p.first.rfind(prefix, 0) == 0) out.push_back(p);
    }
    return out;
}
}  // namespace

std::vector<std::pair<std::string, Tensor>> GanModel::generator_params() const { return with_prefix(store_, "decoder."); }
std::vector<std::pair<std::string, Tensor>> GanModel::discriminator_params() const { return with_prefix(store_, "disc."); }

GanTrainer::GanTrainer(GanModel& model)
    : model_(&model),
      g_opt_(model.generator_params(), AdamConfig{model.config().lr_generator, model.config().beta1}),
      d_opt_(model.discriminator_params(), AdamConfig{model.config().lr_discriminator, model.config().beta1}) {}

GanStepStats GanTrainer::step(const std::function<Tensor()>& next_real, Rng& rng) {
    GanModel& m = *model_;
    const GanConfig& cfg = m.config();
    const std::int64_t latent = m.generator_config().latent;
    auto guard = [this](const char* which, double v) {
        if (!std::isfinite(v)) {
            throw NumericError("gan step " + std::to_string(steps_ + 1) + ": " + which + " loss is non-finite");
        }
    };
    GanStepStats stats;
    std::int64_t batch = 0;
    try {
        for (int k = 0; k < cfg.effective_critic_steps(); ++k) {
            const Tensor real = next_real();
            batch = real.dim(0);
            Tensor fake;
            {
                NoGradGuard no_grad;
                fake = m.generator_forward(sample_normal(rng, {real.dim(0), latent}));
            }
            const auto losses = gan_losses(cfg.loss, m.discriminate(real, Mode::train), m.discriminate(fake, Mode::train));
            stats.d_loss = losses.d_loss.item();
            guard("discriminator", stats.d_loss);
            backward(losses.d_loss);
            d_opt_.step();
            if (cfg.loss == GanLoss::wasserstein_clip) clip_weights(m.params(), cfg.clip);
        }
        const Tensor fake = m.generator_forward(sample_normal(rng, {batch, latent}));
        const Tensor zero = Tensor::zeros({1, 1});
        const auto losses = gan_losses(cfg.loss, zero, m.discriminate(fake, Mode::train));
        stats.g_loss = losses.g_loss.item();
        guard("generator", stats.g_loss);
        backward(losses.g_loss);
        g_opt_.step();
        // The generator pass also left gradients on the critic.
        for (auto& p : m.discriminator_params()) p.second.zero_grad();
    } catch (const NumericError& e) {
        clear_tape();
        std::string what = e.what();
        if (what.rfind("gan step", 0) != 0) what = "gan step " + std::to_string(steps_ + 1) + ": " + what;
        throw NumericError(what);
    }
    stats.step = ++steps_;
    return stats;
}

std::vector<GanStepStats> train_gan(GanModel& model, const ImageDataset& data, Rng& rng, const GanTrainOptions& options) {
    if (options.steps < 1) throw ConfigError("train_gan: steps must be positive");
    GanTrainer trainer(model);
    std::vector<GanStepStats> history;
    std::optional<Batches> epoch;
    Tensor batch;
    auto next_real = [&]() -> Tensor {
        if (!epoch || !epoch->next(batch)) {
            epoch.emplace(data, options.batch_size, true, rng);
            epoch->next(batch);
        }
        return batch;
    };
    for (std::int64_t s = 0; s < options.steps; ++s) {
        history.push_back(trainer.step(next_real, rng));
        if (options.on_step && !options.on_step(history.back())) break;
    }
    return history;
}

double discriminator_accuracy(GanModel& model, const Tensor& real, const Tensor& fake) {
    NoGradGuard no_grad;
    const auto r = model.discriminate(real, Mode::eval).values();
    const auto f = model.discriminate(fake, Mode::eval).values();
    std::int64_t correct = 0;
    for (float v : r) correct += v > 0.0f;
    for (float v : f) correct += v < 0.0f;
    return static_cast<double>(correct) / static_cast<double>(r.size() + f.size());
}

}  // namespace wvae
