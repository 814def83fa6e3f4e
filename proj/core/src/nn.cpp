#include "wavevae/nn.hpp"

#include <cmath>

#include "wavevae/error.hpp"

namespace wvae {

LayerSpec LayerSpec::conv(std::int64_t in, std::int64_t out, int kernel, int stride, int pad) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.in = in;
    s.out = out;
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad;
    return s;
}

LayerSpec LayerSpec::conv_transpose(std::int64_t in, std::int64_t out, int kernel, int stride, int pad) {
    LayerSpec s = conv(in, out, kernel, stride, pad);
    s.kind = LayerKind::conv_transpose;
    return s;
}

LayerSpec LayerSpec::dense(std::int64_t in, std::int64_t out) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in = in;
    s.out = out;
    return s;
}

LayerSpec LayerSpec::pointwise(std::int64_t in, std::int64_t out) {
    LayerSpec s = conv(in, out, 1, 1, 0);
    s.kind = LayerKind::pointwise_conv;
    return s;
}

LayerSpec LayerSpec::activation(Activation a) {
    LayerSpec s;
    s.kind = LayerKind::activation;
    s.act = a;
    return s;
}

LayerSpec LayerSpec::batchnorm(std::int64_t channels) {
    LayerSpec s;
    s.kind = LayerKind::batchnorm;
    s.in = s.out = channels;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

LayerSpec LayerSpec::unflatten(std::int64_t c, std::int64_t h, std::int64_t w) {
    LayerSpec s;
    s.kind = LayerKind::unflatten;
    s.target = {c, h, w};
    s.in = s.out = c * h * w;
    return s;
}

std::string to_string(LayerKind k) {
    switch (k) {
        case LayerKind::conv: return "conv";
        case LayerKind::conv_transpose: return "conv_transpose";
        case LayerKind::dense: return "dense";
        case LayerKind::pointwise_conv: return "pointwise_conv";
        case LayerKind::activation: return "activation";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::flatten: return "flatten";
        case LayerKind::unflatten: return "unflatten";
    }
    return "?";
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::none: return "none";
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

namespace {

[[noreturn]] void reject(const LayerSpec& s, const Shape& input) {
    throw ShapeError(to_string(s.kind) + " layer (in=" + std::to_string(s.in) + ") cannot take input " + shape_str(input));
}

std::int64_t strided_extent(std::int64_t in, int k, int s, int p) {
    const std::int64_t span = in + 2 * p - k;
    if (span < 0 || span % s != 0) return -1;
    return span / s + 1;
}

}  // namespace

Shape LayerSpec::output_shape(const Shape& input) const {
    switch (kind) {
        case LayerKind::conv:
        case LayerKind::pointwise_conv: {
            if (input.size() != 4 || input[1] != in) reject(*this, input);
            const auto h = strided_extent(input[2], kernel, stride, pad);
            const auto w = strided_extent(input[3], kernel, stride, pad);
            if (h <= 0 || w <= 0) reject(*this, input);
            return {input[0], out, h, w};
        }
        case LayerKind::conv_transpose: {
            if (input.size() != 4 || input[1] != in) reject(*this, input);
            const auto h = (input[2] - 1) * stride - 2 * pad + kernel;
            const auto w = (input[3] - 1) * stride - 2 * pad + kernel;
            if (h <= 0 || w <= 0) reject(*this, input);
            return {input[0], out, h, w};
        }
        case LayerKind::dense:
            if (input.size() != 2 || input[1] != in) reject(*this, input);
            return {input[0], out};
        case LayerKind::activation:
            return input;
        case LayerKind::batchnorm:
            if ((input.size() != 2 && input.size() != 4) || input[1] != in) reject(*this, input);
            return input;
        case LayerKind::flatten: {
            if (input.empty()) reject(*this, input);
            std::int64_t n = 1;
            for (std::size_t i = 1; i < input.size(); ++i) n *= input[i];
            return {input[0], n};
        }
        case LayerKind::unflatten:
            if (input.size() != 2 || input[1] != in) reject(*this, input);
            return {input[0], target[0], target[1], target[2]};
    }
    reject(*this, input);
}

LayerParams init_params(const LayerSpec& spec, Rng& rng) {
    LayerParams p;
    auto he_uniform = [&](Shape shape, std::int64_t fan_in) {
        const float bound = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in)));
        return sample_uniform(rng, std::move(shape), -bound, bound);
    };
    const std::int64_t k2 = static_cast<std::int64_t>(spec.kernel) * spec.kernel;
    switch (spec.kind) {
        case LayerKind::conv:
        case LayerKind::pointwise_conv:
            p.weight = he_uniform({spec.out, spec.in, spec.kernel, spec.kernel}, spec.in * k2);
            p.bias = Tensor::zeros({spec.out});
            break;
        case LayerKind::conv_transpose:
            // Fan-in counted as for the equivalent forward convolution.
            p.weight = he_uniform({spec.in, spec.out, spec.kernel, spec.kernel}, spec.in * k2);
            p.bias = Tensor::zeros({spec.out});
            break;
        case LayerKind::dense:
            p.weight = he_uniform({spec.in, spec.out}, spec.in);
            p.bias = Tensor::zeros({spec.out});
            break;
        case LayerKind::batchnorm:
            p.gamma = Tensor::ones({spec.in});
            p.beta = Tensor::zeros({spec.in});
            p.running_mean = Tensor::zeros({spec.in});
            p.running_var = Tensor::ones({spec.in});
            break;
        default:
            break;
    }
    return p;
}

// ---------------------------------------------------------------------------

void ParamStore::add(const std::string& name, const Tensor& t, bool trainable) {
    if (contains(name)) throw StateError("duplicate parameter name " + name);
    Tensor handle = t;
    if (trainable) handle.requires_grad_(true);
    entries_.push_back(Entry{name, handle, trainable});
}

bool ParamStore::contains(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return true;
    }
    return false;
}

const Tensor& ParamStore::get(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return e.tensor;
    }
    throw StateError("unknown parameter " + name);
}

std::vector<std::pair<std::string, Tensor>> ParamStore::trainable() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& e : entries_) {
        if (e.trainable) out.emplace_back(e.name, e.tensor);
    }
    return out;
}

std::int64_t ParamStore::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) {
        if (e.trainable) n += e.tensor.numel();
    }
    return n;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

// ---------------------------------------------------------------------------

Network::Network(const std::string& prefix, std::vector<LayerSpec> specs, ParamStore& store, Rng& rng)
    : specs_(std::move(specs)) {
    params_.reserve(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        LayerParams p = init_params(specs_[i], rng);
        const std::string base = prefix + "." + std::to_string(i) + ".";
        if (p.weight.defined()) store.add(base + "weight", p.weight);
        if (p.bias.defined()) store.add(base + "bias", p.bias);
        if (p.gamma.defined()) {
            store.add(base + "gamma", p.gamma);
            store.add(base + "beta", p.beta);
            store.add(base + "running_mean", p.running_mean, false);
            store.add(base + "running_var", p.running_var, false);
        }
        params_.push_back(p);
    }
}

Shape Network::output_shape(const Shape& input) const {
    Shape s = input;
    for (const auto& spec : specs_) s = spec.output_shape(s);
    return s;
}

Tensor Network::forward(const Tensor& x, Mode mode) {
    Tensor h = x;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        const LayerSpec& s = specs_[i];
        LayerParams& p = params_[i];
        const Shape expected = s.output_shape(h.shape());
        switch (s.kind) {
            case LayerKind::conv:
            case LayerKind::pointwise_conv:
                h = add(conv2d(h, p.weight, s.stride, s.pad), reshape(p.bias, {1, s.out, 1, 1}));
                break;
            case LayerKind::conv_transpose:
                h = add(conv_transpose2d(h, p.weight, s.stride, s.pad), reshape(p.bias, {1, s.out, 1, 1}));
                break;
            case LayerKind::dense:
                h = add(matmul(h, p.weight), p.bias);
                break;
            case LayerKind::batchnorm:
                h = batch_norm(h, p.gamma, p.beta, p.running_mean, p.running_var, mode == Mode::train);
                break;
            case LayerKind::flatten:
            case LayerKind::unflatten:
                h = reshape(h, expected);
                break;
            case LayerKind::activation:
                switch (s.act) {
                    case Activation::none: break;
                    case Activation::relu: h = relu(h); break;
                    case Activation::leaky_relu: h = leaky_relu(h, 0.2f); break;
                    case Activation::sigmoid: h = sigmoid(h); break;
                    case Activation::tanh: h = tanh(h); break;
                }
                break;
        }
    }
    return h;
}

// ---------------------------------------------------------------------------

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig config)
    : config_(config), params_(std::move(params)) {
    for (const auto& [name, t] : params_) {
        m_.push_back(Tensor::zeros(t.shape()));
        v_.push_back(Tensor::zeros(t.shape()));
    }
}

void Adam::step() {
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor& p = params_[k].second;
        if (!p.has_grad()) continue;
        auto theta = p.mutable_values();
        auto g = p.grad();
        auto m = m_[k].mutable_values();
        auto v = v_[k].mutable_values();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = g[i];
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double update = config_.lr * (mi / c1) / (std::sqrt(vi / c2) + config_.eps);
            theta[i] = static_cast<float>(theta[i] - update);
        }
        p.zero_grad();
    }
}

std::vector<std::pair<std::string, Tensor>> Adam::state_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        out.emplace_back(params_[k].first + ".m", m_[k]);
        out.emplace_back(params_[k].first + ".v", v_[k]);
    }
    return out;
}

float LrSchedule::rate(int epoch) const {
    if (halving_period <= 0) return initial;
    return initial * std::ldexp(1.0f, -(epoch / halving_period));
}

}  // namespace wvae
