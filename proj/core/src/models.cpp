#include "wavevae/models.hpp"

#include <cmath>

#include "wavevae/error.hpp"

namespace wvae {

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::vae: return "vae";
        case ModelKind::vae_c: return "vae_c";
        case ModelKind::wavelet_vae: return "wavelet_vae";
        case ModelKind::wavelet_vae_mr: return "wavelet_vae_mr";
    }
    return "?";
}

ModelKind parse_model_kind(const std::string& s) {
    if (s == "vae") return ModelKind::vae;
    if (s == "vae_c") return ModelKind::vae_c;
    if (s == "wavelet_vae") return ModelKind::wavelet_vae;
    if (s == "wavelet_vae_mr") return ModelKind::wavelet_vae_mr;
    throw ConfigError("unknown model kind '" + s + "'");
}

bool is_wavelet(ModelKind k) { return k == ModelKind::wavelet_vae || k == ModelKind::wavelet_vae_mr; }

int ModelConfig::blocks() const {
    int n = 0;
    for (std::int64_t e = extent; e > 4; e /= 2) ++n;
    return n;
}

int ModelConfig::levels() const {
    switch (kind) {
        case ModelKind::wavelet_vae: return 1;
        case ModelKind::wavelet_vae_mr: return mr_levels;
        default: return 0;
    }
}

float ModelConfig::level_weight(int level) const {
    if (level_weights.empty()) return 1.0f;
    return level_weights.at(static_cast<std::size_t>(level - 1));
}

void ModelConfig::validate() const {
    if (extent < 8 || (extent & (extent - 1)) != 0) {
        throw ConfigError("extent must be a power of two >= 8, got " + std::to_string(extent));
    }
    if (channels < 1) throw ConfigError("channels must be positive");
    if (latent < 1) throw ConfigError("latent dimension must be positive");
    if (width < 1) throw ConfigError("width must be positive");
    if (beta < 0.0f || !std::isfinite(beta)) throw ConfigError("beta must be a finite non-negative number");
    if (kind == ModelKind::wavelet_vae_mr && (mr_levels < 1 || mr_levels > blocks())) {
        throw ConfigError("mr_levels must lie in [1, " + std::to_string(blocks()) + "] for extent " + std::to_string(extent));
    }
    if (!mr_independent_heads) {
        throw ConfigError("shared multi-resolution heads are not supported: per-level feature widths differ");
    }
    if (!level_weights.empty() && static_cast<int>(level_weights.size()) != levels()) {
        throw ConfigError("level_weights needs one entry per supervised level");
    }
    for (float w : level_weights) {
        if (!(w >= 0.0f) || !std::isfinite(w)) throw ConfigError("level weights must be finite and non-negative");
    }
}

// ---------------------------------------------------------------------------

Tensor kl_to_standard_normal(const GaussianPosterior& q) {
    if (q.mean.shape() != q.logvar.shape() || q.mean.rank() != 2) {
        throw ShapeError("posterior mean/logvar must both be [B,d]");
    }
    const auto batch = static_cast<float>(q.mean.dim(0));
    Tensor terms = square(q.mean) + exp(q.logvar) - q.logvar - 1.0f;
    return mul(sum(terms), 0.5f / batch);
}

Tensor gaussian_nll(const Tensor& x, const Tensor& x_hat) {
    if (x.shape() != x_hat.shape()) throw ShapeError("gaussian_nll: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(x_hat.shape()));
    const auto batch = static_cast<float>(x.dim(0));
    return mul(sum(square(x - x_hat)), 0.5f / batch);
}

Tensor laplacian_nll(const Tensor& w, const Tensor& w_hat) {
    if (w.shape() != w_hat.shape()) throw ShapeError("laplacian_nll: shape mismatch " + shape_str(w.shape()) + " vs " + shape_str(w_hat.shape()));
    const auto batch = static_cast<float>(w.dim(0));
    return mul(sum(abs(w - w_hat)), 1.0f / batch);
}

Tensor cross_entropy_with_logits(const Tensor& target, const Tensor& logits) {
    if (target.shape() != logits.shape()) throw ShapeError("cross_entropy: shape mismatch");
    const auto batch = static_cast<float>(target.dim(0));
    // -[t log s(l) + (1-t) log(1-s(l))] = softplus(l) - t*l
    return mul(sum(softplus(logits) - target * logits), 1.0f / batch);
}

double generalized_laplacian_density(double y, double s, double p) {
    if (!(s > 0.0) || !(p > 0.0)) throw DomainError("generalized Laplacian needs s > 0 and p > 0");
    const double z = 2.0 * s / p * std::tgamma(1.0 / p);
    return std::exp(-std::pow(std::fabs(y / s), p)) / z;
}

Tensor reparameterize(const GaussianPosterior& q, const Tensor& eps) {
    if (eps.shape() != q.mean.shape()) throw ShapeError("reparameterize: noise shape mismatch");
    return q.mean + exp(mul(q.logvar, 0.5f)) * eps;
}

Tensor reparameterize(const GaussianPosterior& q, Rng& rng) { return reparameterize(q, sample_normal(rng, q.mean.shape())); }

ElboBreakdown wavelet_elbo(const Tensor& x, const WaveletPrediction& prediction, const GaussianPosterior& q, float beta,
                           const std::vector<float>& level_weights) {
    const int levels = static_cast<int>(prediction.levels.size());
    if (levels == 0) throw ShapeError("wavelet_elbo: prediction has no levels");
    if (!level_weights.empty() && static_cast<int>(level_weights.size()) != levels) {
        throw ShapeError("wavelet_elbo: one weight per level required");
    }
    std::vector<Tensor> targets;
    {
        NoGradGuard ng;
        const WaveletPyramid pyr = decompose(x.detach(), levels);
        for (const auto& lvl : pyr.levels) targets.push_back(stack_channels(lvl));
    }
    ElboBreakdown out;
    out.beta = beta;
    Tensor recon;
    for (int j = 0; j < levels; ++j) {
        const Tensor& t = targets[static_cast<std::size_t>(j)];
        const Tensor& p = prediction.levels[static_cast<std::size_t>(j)];
        if (t.shape() != p.shape()) {
            throw ShapeError("wavelet_elbo: level " + std::to_string(j + 1) + " prediction " + shape_str(p.shape()) +
                             " does not match target " + shape_str(t.shape()));
        }
        const std::int64_t c = t.dim(1) / 4;
        Tensor g = gaussian_nll(narrow(t, 1, 0, c), narrow(p, 1, 0, c));
        Tensor l = laplacian_nll(narrow(t, 1, c, 3 * c), narrow(p, 1, c, 3 * c));
        const float w = level_weights.empty() ? 1.0f : level_weights[static_cast<std::size_t>(j)];
        out.ll_recon += static_cast<double>(w) * g.item();
        out.detail_recon += static_cast<double>(w) * l.item();
        Tensor term = mul(g + mul(l, beta), w);
        recon = recon.defined() ? recon + term : term;
    }
    Tensor kl = kl_to_standard_normal(q);
    out.kl = kl.item();
    out.total = recon + kl;
    return out;
}

// ---------------------------------------------------------------------------

Encoder::Encoder(const ModelConfig& cfg, ParamStore& store, Rng& rng)
    : latent_(cfg.latent), input_{cfg.channels, cfg.extent, cfg.extent} {
    std::vector<LayerSpec> specs;
    std::int64_t in = cfg.channels;
    const int n = cfg.blocks();
    for (int i = 0; i < n; ++i) {
        const std::int64_t out = cfg.width << i;
        specs.push_back(LayerSpec::conv(in, out, 4, 2, 1));
        if (i > 0 && cfg.batchnorm) specs.push_back(LayerSpec::batchnorm(out));
        specs.push_back(LayerSpec::activation(Activation::leaky_relu));
        in = out;
    }
    specs.push_back(LayerSpec::flatten());
    specs.push_back(LayerSpec::dense(in * 16, 2 * cfg.latent));
    net_ = Network("encoder", std::move(specs), store, rng);
}

GaussianPosterior Encoder::forward(const Tensor& x, Mode mode) {
    if (x.rank() != 4 || x.dim(1) != input_[0] || x.dim(2) != input_[1] || x.dim(3) != input_[2]) {
        throw ShapeError("encoder expects [B," + std::to_string(input_[0]) + "," + std::to_string(input_[1]) + "," +
                         std::to_string(input_[2]) + "], got " + shape_str(x.shape()));
    }
    Tensor h = net_.forward(x, mode);
    return GaussianPosterior{narrow(h, 1, 0, latent_), narrow(h, 1, latent_, latent_)};
}

DecoderTrunk::DecoderTrunk(const ModelConfig& cfg, int trunk_blocks, const std::string& prefix, ParamStore& store,
                           Rng& rng)
    : top_channels_(cfg.width << (cfg.blocks() - 1)) {
    stem_ = Network(prefix + ".stem",
                    {LayerSpec::dense(cfg.latent, top_channels_ * 16), LayerSpec::activation(Activation::relu),
                     LayerSpec::unflatten(top_channels_, 4, 4)},
                    store, rng);
    for (int b = 0; b < trunk_blocks; ++b) {
        blocks_.emplace_back(prefix + ".block" + std::to_string(b),
                             std::vector<LayerSpec>{LayerSpec::conv_transpose(channels_at(b), channels_at(b + 1), 4, 2, 1),
                                                    LayerSpec::activation(Activation::relu)},
                             store, rng);
    }
}

std::int64_t DecoderTrunk::channels_at(int b) const { return top_channels_ >> b; }

std::vector<Tensor> DecoderTrunk::forward(const Tensor& z, int needed_blocks) {
    std::vector<Tensor> features;
    features.push_back(stem_.forward(z, Mode::train));
    for (int b = 0; b < needed_blocks; ++b) {
        features.push_back(blocks_.at(static_cast<std::size_t>(b)).forward(features.back(), Mode::train));
    }
    return features;
}

ImageDecoder::ImageDecoder(const ModelConfig& cfg, ParamStore& store, Rng& rng) : blocks_(cfg.blocks()) {
    trunk_ = DecoderTrunk(cfg, blocks_ - 1, "decoder", store, rng);
    final_ = Network("decoder.final", {LayerSpec::conv_transpose(cfg.width, cfg.channels, 4, 2, 1)}, store, rng);
}

Tensor ImageDecoder::forward(const Tensor& z) {
    auto features = trunk_.forward(z, blocks_ - 1);
    return final_.forward(features.back(), Mode::train);
}

WaveletDecoder::WaveletDecoder(const ModelConfig& cfg, int levels, ParamStore& store, Rng& rng, const std::string& prefix)
    : blocks_(cfg.blocks()) {
    if (levels < 1 || levels > blocks_) throw ConfigError("wavelet decoder level count out of range");
    trunk_ = DecoderTrunk(cfg, blocks_ - 1, prefix, store, rng);
    for (int j = 1; j <= levels; ++j) {
        heads_.emplace_back(prefix + ".head" + std::to_string(j),
                            std::vector<LayerSpec>{LayerSpec::pointwise(trunk_.channels_at(blocks_ - j), 4 * cfg.channels)},
                            store, rng);
    }
}

WaveletPrediction WaveletDecoder::forward(const Tensor& z, int levels) {
    if (levels < 0) levels = this->levels();
    if (levels < 1 || levels > this->levels()) {
        throw ConfigError("requested " + std::to_string(levels) + " levels from a decoder with " +
                          std::to_string(this->levels()));
    }
    auto features = trunk_.forward(z, blocks_ - 1);
    WaveletPrediction p;
    for (int j = 1; j <= levels; ++j) {
        p.levels.push_back(heads_[static_cast<std::size_t>(j - 1)].forward(features[static_cast<std::size_t>(blocks_ - j)], Mode::train));
    }
    return p;
}

Tensor image_from_prediction(const WaveletPrediction& p) {
    if (p.levels.empty()) throw ShapeError("image_from_prediction: empty prediction");
    return idwt2(unstack_channels(p.levels.front()));
}

// ---------------------------------------------------------------------------

VaeModel::VaeModel(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    encoder_ = Encoder(cfg_, store_, rng);
    if (is_wavelet(cfg_.kind)) {
        wavelet_decoder_.emplace(cfg_, cfg_.levels(), store_, rng);
    } else {
        image_decoder_.emplace(cfg_, store_, rng);
    }
}

GaussianPosterior VaeModel::encode(const Tensor& x, Mode mode) { return encoder_.forward(x, mode); }

Tensor VaeModel::decode_image(const Tensor& z) {
    if (!image_decoder_) throw ConfigError(to_string(cfg_.kind) + " has no image-space decoder");
    return image_decoder_->forward(z);
}

WaveletPrediction VaeModel::decode_wavelets(const Tensor& z, int levels) {
    if (!wavelet_decoder_) throw ConfigError(to_string(cfg_.kind) + " has no wavelet decoder");
    return wavelet_decoder_->forward(z, levels);
}

Tensor VaeModel::image_from_latent(const Tensor& z) {
    switch (cfg_.kind) {
        case ModelKind::vae: return decode_image(z);
        case ModelKind::vae_c: return sigmoid(decode_image(z));
        default: return image_from_prediction(decode_wavelets(z, 1));
    }
}

ElboBreakdown VaeModel::loss(const Tensor& x, Rng& rng, Mode mode) {
    GaussianPosterior q = encode(x, mode);
    Tensor z = reparameterize(q, rng);
    if (is_wavelet(cfg_.kind)) {
        return wavelet_elbo(x, decode_wavelets(z), q, cfg_.beta, cfg_.level_weights);
    }
    ElboBreakdown out;
    Tensor recon = cfg_.kind == ModelKind::vae ? gaussian_nll(x, decode_image(z))
                                               : cross_entropy_with_logits(x, decode_image(z));
    Tensor kl = kl_to_standard_normal(q);
    out.ll_recon = recon.item();
    out.kl = kl.item();
    out.total = recon + kl;
    return out;
}

Tensor VaeModel::generate(Rng& rng, std::int64_t n) {
    if (n < 1) throw ConfigError("generate: sample count must be positive");
    NoGradGuard ng;
    return image_from_latent(sample_normal(rng, {n, cfg_.latent}));
}

Tensor VaeModel::reconstruct_input(const Tensor& x, Rng& rng) {
    NoGradGuard ng;
    GaussianPosterior q = encode(x, Mode::eval);
    return image_from_latent(reparameterize(q, rng));
}

Tensor VaeModel::traverse_latent(const Tensor& base, std::int64_t dim, float lo, float hi, int steps) {
    if (base.numel() != cfg_.latent) throw ShapeError("traverse_latent: base code must hold one latent vector");
    if (dim < 0 || dim >= cfg_.latent) throw ConfigError("traverse_latent: dimension out of range");
    if (steps < 1) throw ConfigError("traverse_latent: steps must be positive");
    NoGradGuard ng;
    Tensor z(Shape{steps, cfg_.latent});
    auto zv = z.mutable_values();
    const auto bv = base.values();
    for (int s = 0; s < steps; ++s) {
        std::copy(bv.begin(), bv.end(), zv.begin() + static_cast<std::ptrdiff_t>(s) * cfg_.latent);
        const float t = steps == 1 ? 0.0f : static_cast<float>(s) / static_cast<float>(steps - 1);
        zv[static_cast<std::size_t>(s * cfg_.latent + dim)] = lo + (hi - lo) * t;
    }
    return image_from_latent(z);
}

Tensor VaeModel::latent_traversal(const Tensor& x, std::int64_t dim, float lo, float hi, int steps) {
    if (x.rank() != 4 || x.dim(0) != 1) throw ShapeError("latent_traversal expects a single image [1,C,H,W]");
    Tensor mean;
    {
        NoGradGuard ng;
        mean = encode(x, Mode::eval).mean;
    }
    return traverse_latent(mean, dim, lo, hi, steps);
}

}  // namespace wvae
