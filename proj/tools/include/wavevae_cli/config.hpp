#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wavevae/gan.hpp"
#include "wavevae/models.hpp"

namespace wvae::cli {

// Everything a training run depends on. Defaults follow the CIFAR-style
// schedule (batch 100, lr 1e-4, latent 64, 1000 epochs halving every 300, beta 5).
struct RunConfig {
    std::string model = "wavelet_vae";  // vae, vae_c, wavelet_vae, wavelet_vae_mr, gan_ns, gan_ls, gan_wclip
    std::string dataset;                // folder, packed file or synth:<spec>
    int epochs = 1000;
    std::int64_t batch_size = 100;
    std::int64_t latent = 64;
    std::int64_t width = 64;
    bool batchnorm = true;
    float beta = 5.0f;
    float lr = 1e-4f;
    int lr_halving = 300;  // epochs; 0 disables halving
    int mr_levels = 3;
    std::uint64_t seed = 0;
    std::string out = "run";
    bool shuffle = true;
    bool hflip = false;
    int checkpoint_every = 10;  // epochs
    // GAN
    float clip = 0.01f;
    int critic_steps = 0;
    float lr_discriminator = 2e-4f;
    float gan_beta1 = 0.5f;
    int eval_every = 10;        // epochs between sample grids / FID rows
    std::string extractor = "randconv";

    bool is_gan() const;
    ModelConfig model_config(std::int64_t channels, std::int64_t extent) const;
    GanConfig gan_config() const;

    void set(const std::string& key, const std::string& value);  // throws ConfigError
    void validate() const;

    // Canonical key=value text, one field per line. Without `out` it is what
    // checkpoints embed, so runs differing only in output directory match.
    std::string to_text(bool include_out = true) const;
    // Hash of the fields that shape the training trajectory (not `out`,
    // epochs, checkpoint_every or eval_every).
    std::string hash() const;
};

// Published schedules: "cifar" (1000 epochs, halve every 300, beta 5) and
// "celeba" (120 epochs, halve every 48, beta 1).
void apply_preset(RunConfig& c, const std::string& name);

// key=value lines; '#' starts a comment. A "preset" key is applied where it
// appears, so later lines override it.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
// Applies "key=value" overrides in order.
void apply_overrides(RunConfig& c, const std::vector<std::string>& overrides);

}  // namespace wvae::cli
