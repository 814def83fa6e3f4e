#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wavevae/nn.hpp"
#include "wavevae/rng.hpp"
#include "wavevae/tensor.hpp"
#include "wavevae/wavelet.hpp"

namespace wvae {

enum class ModelKind { vae, vae_c, wavelet_vae, wavelet_vae_mr };

std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& s);
bool is_wavelet(ModelKind k);

// Architecture and objective settings shared by every VAE variant. The
// network is an InfoGAN-style stack of 4x4 stride-2 convolutions whose
// depth follows from the image extent: log2(extent/4) encoder blocks and
// as many decoder upsampling blocks (4x4 -> extent).
struct ModelConfig {
    ModelKind kind = ModelKind::wavelet_vae;
    std::int64_t channels = 3;
    std::int64_t extent = 64;
    std::int64_t latent = 64;
    std::int64_t width = 64;  // filters of the first encoder / last decoder block
    bool batchnorm = true;    // encoder blocks after the first
    int mr_levels = 3;        // supervised pyramid levels for wavelet_vae_mr
    bool mr_independent_heads = true;
    float beta = 1.0f;
    std::vector<float> level_weights;  // empty = all 1

    int blocks() const;
    int levels() const;  // supervised wavelet levels (0 for image-space models)
    float level_weight(int level) const;
    void validate() const;  // throws ConfigError
};

struct GaussianPosterior {
    Tensor mean;     // [B,d]
    Tensor logvar;   // [B,d]
};

// Per-level channel-stacked coefficient predictions, levels[0] = y_1.
struct WaveletPrediction {
    std::vector<Tensor> levels;
};

// Negative ELBO terms (all minimized). total == ll_recon + beta*detail_recon + kl.
struct ElboBreakdown {
    Tensor total;
    double ll_recon = 0.0;
    double detail_recon = 0.0;
    double kl = 0.0;
    double beta = 0.0;
    double total_value() const { return total.item(); }
};

// ---- objective terms (sum over elements, mean over batch) ----------------

Tensor kl_to_standard_normal(const GaussianPosterior& q);
Tensor gaussian_nll(const Tensor& x, const Tensor& x_hat);
Tensor laplacian_nll(const Tensor& w, const Tensor& w_hat);
// Elementwise continuous Bernoulli-style cross-entropy between targets in
// [0,1] and predictions sigmoid(logits), computed from the logits.
Tensor cross_entropy_with_logits(const Tensor& target, const Tensor& logits);
// Density of the generalized Laplacian exp(-|y/s|^p) / (2 s/p Gamma(1/p)).
double generalized_laplacian_density(double y, double s, double p);

Tensor reparameterize(const GaussianPosterior& q, Rng& rng);
Tensor reparameterize(const GaussianPosterior& q, const Tensor& eps);

// Wavelet objective against targets decomposed from x on the fly.
ElboBreakdown wavelet_elbo(const Tensor& x, const WaveletPrediction& prediction, const GaussianPosterior& q,
                           float beta, const std::vector<float>& level_weights = {});

// ---- networks ------------------------------------------------------------

class Encoder {
public:
    Encoder() = default;
    Encoder(const ModelConfig& cfg, ParamStore& store, Rng& rng);
    GaussianPosterior forward(const Tensor& x, Mode mode);

private:
    std::int64_t latent_ = 0;
    Shape input_;
    Network net_;
};

// Dense stem to 4x4 followed by stride-2 upsampling blocks. Shared by the
// image decoder and the wavelet decoder, which drops the final block and
// taps intermediate resolutions instead.
class DecoderTrunk {
public:
    DecoderTrunk() = default;
    DecoderTrunk(const ModelConfig& cfg, int trunk_blocks, const std::string& prefix, ParamStore& store, Rng& rng);
    // features[b] is the activation after b upsampling blocks (extent 4*2^b).
    std::vector<Tensor> forward(const Tensor& z, int needed_blocks);
    std::int64_t channels_at(int b) const;

private:
    std::int64_t top_channels_ = 0;
    Network stem_;
    std::vector<Network> blocks_;
};

class ImageDecoder {
public:
    ImageDecoder() = default;
    ImageDecoder(const ModelConfig& cfg, ParamStore& store, Rng& rng);
    Tensor forward(const Tensor& z);  // [B,C,extent,extent], unsquashed

private:
    int blocks_ = 0;
    DecoderTrunk trunk_;
    Network final_;
};

class WaveletDecoder {
public:
    WaveletDecoder() = default;
    // `levels` heads; level j reads the trunk at extent / 2^j.
    WaveletDecoder(const ModelConfig& cfg, int levels, ParamStore& store, Rng& rng, const std::string& prefix = "decoder");
    WaveletPrediction forward(const Tensor& z, int levels = -1);
    int levels() const { return static_cast<int>(heads_.size()); }

private:
    int blocks_ = 0;
    DecoderTrunk trunk_;
    std::vector<Network> heads_;
};

// Image obtained from predicted coefficients: idwt2 of the finest level only.
Tensor image_from_prediction(const WaveletPrediction& p);

// ---- full model ------------------------------------------------------------

class VaeModel {
public:
    VaeModel(const ModelConfig& cfg, std::uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

    GaussianPosterior encode(const Tensor& x, Mode mode);
    Tensor decode_image(const Tensor& z);                       // vae / vae_c raw output
    WaveletPrediction decode_wavelets(const Tensor& z, int levels = -1);
    // Image-space sample for a latent batch: decoder output (squashed for
    // vae_c) or idwt2 of y_1 for the wavelet kinds.
    Tensor image_from_latent(const Tensor& z);

    // Negative ELBO for a batch with one posterior sample per datum.
    ElboBreakdown loss(const Tensor& x, Rng& rng, Mode mode = Mode::train);

    // Evaluation helpers; run without recording and in eval mode.
    Tensor generate(Rng& rng, std::int64_t n);
    Tensor reconstruct_input(const Tensor& x, Rng& rng);
    Tensor traverse_latent(const Tensor& base, std::int64_t dim, float lo, float hi, int steps);
    Tensor latent_traversal(const Tensor& x, std::int64_t dim, float lo = -3.0f, float hi = 3.0f, int steps = 10);

private:
    ModelConfig cfg_;
    ParamStore store_;
    Encoder encoder_;
    std::optional<ImageDecoder> image_decoder_;
    std::optional<WaveletDecoder> wavelet_decoder_;
};

}  // namespace wvae
