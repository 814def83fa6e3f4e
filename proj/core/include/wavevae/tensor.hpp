#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wvae {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl;
}

// Dense row-major float32 array. Copies are shallow: two Tensor values may
// refer to the same storage, which is how parameters are shared between a
// network and its optimizer or checkpoint.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0f); }
    static Tensor full(Shape shape, float v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(float v) { return Tensor(Shape{}, v); }
    static Tensor vector(std::vector<float> v);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int rank() const;
    std::int64_t dim(int axis) const;  // negative axes count from the back
    std::int64_t numel() const;

    std::span<const float> values() const;
    // Direct write access. Intended for leaves (parameters, buffers, inputs);
    // writing into a tensor that an unfinished graph saved is undefined.
    std::span<float> mutable_values();
    float item() const;
    float at(std::initializer_list<std::int64_t> index) const;

    bool requires_grad() const;
    Tensor& requires_grad_(bool on = true);
    bool has_grad() const;
    std::span<const float> grad() const;
    std::span<float> mutable_grad();  // allocates a zero buffer if absent
    void zero_grad();

    Tensor detach() const;  // fresh leaf with copied values
    Tensor clone() const { return detach(); }
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    detail::TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
    friend Tensor make_from_impl(std::shared_ptr<detail::TensorImpl>);
};

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

// Backward rule for a recorded op. grad_inputs[i] is empty when input i does
// not need a gradient; rules accumulate (+=) into the non-empty spans.
using BackwardFn = std::function<void(std::span<const float> grad_out,
                                      std::span<const std::span<float>> grad_inputs)>;

// Builds the result of an op. Raises NumericError if `data` holds a non-finite
// value. The op is appended to the thread's tape when grad mode is on and at
// least one input requires a gradient.
Tensor record_op(std::string_view name, Shape shape, std::vector<float> data,
                 std::vector<Tensor> inputs, BackwardFn backward);

bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Reverse pass from a scalar loss over the current tape, then consumes the
// tape. Leaf gradients accumulate across calls until zero_grad.
void backward(const Tensor& loss);

std::size_t tape_size();
void clear_tape();

// ---------------------------------------------------------------------------
// Elementwise (trailing-dimension broadcasting)
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, float b);
Tensor mul(const Tensor& a, float b);

Tensor neg(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor pow(const Tensor& x, float exponent);
Tensor clamp(const Tensor& x, float lo, float hi);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, float slope = 0.2f);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softplus(const Tensor& x);  // log(1 + e^x), overflow-safe

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, float b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, float b) { return add(a, -b); }
inline Tensor operator*(const Tensor& a, float b) { return mul(a, b); }
inline Tensor operator*(float a, const Tensor& b) { return mul(b, a); }
inline Tensor operator-(const Tensor& x) { return neg(x); }

// ---------------------------------------------------------------------------
// Reductions (64-bit accumulation)
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::vector<int> axes, bool keepdim = false);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::vector<int> axes, bool keepdim = false);
Tensor max(const Tensor& x, std::vector<int> axes, bool keepdim = false);

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor narrow(const Tensor& x, int axis, std::int64_t start, std::int64_t length);
Tensor concat(const std::vector<Tensor>& parts, int axis);

// ---------------------------------------------------------------------------
// Linear algebra and convolution
// ---------------------------------------------------------------------------

// Worker threads used by the convolution kernels. Results do not depend on it.
void set_kernel_threads(int threads);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);  // 2-D

// Cross-correlation. x: [B,Cin,H,W], k: [Cout,Cin,kh,kw].
Tensor conv2d(const Tensor& x, const Tensor& k, int stride = 1, int pad = 0);
// Adjoint of conv2d with the same kernel. x: [B,Cin,H,W], k: [Cin,Cout,kh,kw],
// output extent (H-1)*stride - 2*pad + kh.
Tensor conv_transpose2d(const Tensor& x, const Tensor& k, int stride = 1, int pad = 0);
// Non-overlapping mean pooling with window = stride = kernel.
Tensor avg_pool2d(const Tensor& x, int kernel);

// Per-channel normalization of [B,C] or [B,C,H,W]. In training mode batch
// statistics are used and the running buffers are updated in place.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, bool training,
                  float momentum = 0.1f, float eps = 1e-5f);

}  // namespace wvae
