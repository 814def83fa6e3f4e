#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wavevae/rng.hpp"
#include "wavevae/tensor.hpp"

namespace wvae {

enum class LayerKind { conv, conv_transpose, dense, pointwise_conv, activation, batchnorm, flatten, unflatten };
enum class Activation { none, relu, leaky_relu, sigmoid, tanh };

struct LayerSpec {
    LayerKind kind = LayerKind::activation;
    std::int64_t in = 0;   // channels, or features for dense
    std::int64_t out = 0;
    int kernel = 1;
    int stride = 1;
    int pad = 0;
    Activation act = Activation::none;
    Shape target;  // unflatten: [C,H,W]

    static LayerSpec conv(std::int64_t in, std::int64_t out, int kernel, int stride, int pad);
    static LayerSpec conv_transpose(std::int64_t in, std::int64_t out, int kernel, int stride, int pad);
    static LayerSpec dense(std::int64_t in, std::int64_t out);
    static LayerSpec pointwise(std::int64_t in, std::int64_t out);
    static LayerSpec activation(Activation a);
    static LayerSpec batchnorm(std::int64_t channels);
    static LayerSpec flatten();
    static LayerSpec unflatten(std::int64_t c, std::int64_t h, std::int64_t w);

    // Throws ShapeError when `input` (including the batch dimension) is not
    // accepted by the layer.
    Shape output_shape(const Shape& input) const;
};

std::string to_string(LayerKind k);
std::string to_string(Activation a);

// Tensors owned by one layer. Unused members stay undefined.
struct LayerParams {
    Tensor weight, bias;
    Tensor gamma, beta, running_mean, running_var;
};

// He-uniform fan-in initialization of weights, zero biases, unit BN scale.
LayerParams init_params(const LayerSpec& spec, Rng& rng);

// Ordered set of named tensors. Trainable entries are optimized; the others
// (batch-norm running statistics) are only persisted.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
        bool trainable;
    };

    void add(const std::string& name, const Tensor& t, bool trainable = true);
    bool contains(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<std::pair<std::string, Tensor>> trainable() const;
    std::int64_t parameter_count() const;
    void zero_grad();

private:
    std::vector<Entry> entries_;
};

enum class Mode { train, eval };

// Ordered layer stack whose parameters are registered in a ParamStore under
// "<prefix>.<index>.<role>".
class Network {
public:
    Network() = default;
    Network(const std::string& prefix, std::vector<LayerSpec> specs, ParamStore& store, Rng& rng);

    Tensor forward(const Tensor& x, Mode mode);
    Shape output_shape(const Shape& input) const;
    const std::vector<LayerSpec>& specs() const { return specs_; }
    LayerParams& params(std::size_t layer) { return params_.at(layer); }
    std::size_t size() const { return specs_.size(); }

private:
    std::vector<LayerSpec> specs_;
    std::vector<LayerParams> params_;
};

struct AdamConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// Bias-corrected Adam over a fixed list of named parameters.
class Adam {
public:
    Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig config = {});

    // Applies one update from the accumulated gradients, then clears them.
    // Parameters without a gradient are left untouched.
    void step();
    void set_lr(float lr) { config_.lr = lr; }
    float lr() const { return config_.lr; }
    std::int64_t step_count() const { return t_; }
    void set_step_count(std::int64_t t) { t_ = t; }

    // Moment buffers as named tensors ("<param>.m", "<param>.v"), sharing
    // storage with the optimizer so a checkpoint can read and restore them.
    std::vector<std::pair<std::string, Tensor>> state_tensors() const;

private:
    AdamConfig config_;
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<Tensor> m_, v_;
    std::int64_t t_ = 0;
};

struct LrSchedule {
    float initial = 1e-4f;
    int halving_period = 300;  // epochs

    float rate(int epoch) const;
};

}  // namespace wvae
