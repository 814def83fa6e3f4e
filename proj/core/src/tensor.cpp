#include "wavevae/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>

#include "tensor_impl.hpp"
#include "wavevae/error.hpp"

namespace wvae {

using detail::TensorImpl;

std::int64_t numel_of(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

void check_finite(std::string_view op, const std::vector<float>& data) {
    // An all-ones exponent marks Inf and NaN; the integer form vectorizes.
    constexpr std::uint32_t exponent = 0x7f800000u;
    std::uint32_t bad = 0;
    for (float v : data) bad |= static_cast<std::uint32_t>((std::bit_cast<std::uint32_t>(v) & exponent) == exponent);
    if (bad != 0) throw NumericError(std::string(op) + ": non-finite output");
}

}  // namespace detail

namespace {

void validate_shape(const Shape& shape) {
    for (auto e : shape) {
        if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
}

TensorImpl& checked(const Tensor& t) {
    if (!t.defined()) throw StateError("use of an undefined tensor");
    return *t.impl();
}

}  // namespace

Tensor make_from_impl(std::shared_ptr<TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

Tensor::Tensor(Shape shape, float fill) : impl_(std::make_shared<TensorImpl>()) {
    validate_shape(shape);
    impl_->data.assign(static_cast<std::size_t>(numel_of(shape)), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : impl_(std::make_shared<TensorImpl>()) {
    validate_shape(shape);
    if (static_cast<std::int64_t>(values.size()) != numel_of(shape)) {
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
}

Tensor Tensor::vector(std::vector<float> v) {
    Shape s{static_cast<std::int64_t>(v.size())};
    return Tensor(std::move(s), std::move(v));
}

const Shape& Tensor::shape() const { return checked(*this).shape; }
int Tensor::rank() const { return static_cast<int>(checked(*this).shape.size()); }

std::int64_t Tensor::dim(int axis) const {
    const auto& s = checked(*this).shape;
    const int r = static_cast<int>(s.size());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) throw ShapeError("axis out of range for shape " + shape_str(s));
    return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(checked(*this).data.size()); }
std::span<const float> Tensor::values() const { return checked(*this).data; }
std::span<float> Tensor::mutable_values() { return checked(*this).data; }

float Tensor::item() const {
    const auto& impl = checked(*this);
    if (impl.data.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(impl.shape));
    return impl.data[0];
}

float Tensor::at(std::initializer_list<std::int64_t> index) const {
    const auto& impl = checked(*this);
    if (index.size() != impl.shape.size()) throw ShapeError("index rank mismatch");
    std::int64_t off = 0;
    std::size_t d = 0;
    for (auto i : index) {
        if (i < 0 || i >= impl.shape[d]) throw ShapeError("index out of range");
        off = off * impl.shape[d] + i;
        ++d;
    }
    return impl.data[static_cast<std::size_t>(off)];
}

bool Tensor::requires_grad() const { return checked(*this).requires_grad; }

Tensor& Tensor::requires_grad_(bool on) {
    checked(*this).requires_grad = on;
    return *this;
}

bool Tensor::has_grad() const { return !checked(*this).grad.empty(); }
std::span<const float> Tensor::grad() const { return checked(*this).grad; }

std::span<float> Tensor::mutable_grad() {
    auto& impl = checked(*this);
    if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0f);
    return impl.grad;
}

void Tensor::zero_grad() { checked(*this).grad.clear(); }

Tensor Tensor::detach() const {
    const auto& impl = checked(*this);
    return Tensor(impl.shape, impl.data);
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

namespace {

struct TapeEntry {
    std::string name;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
};

struct Tape {
    std::vector<TapeEntry> entries;
    std::uint64_t generation = 1;
};

thread_local Tape g_tape;
thread_local bool g_grad_enabled = true;

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::size_t tape_size() { return g_tape.entries.size(); }

void clear_tape() {
    g_tape.entries.clear();
    ++g_tape.generation;
}

Tensor record_op(std::string_view name, Shape shape, std::vector<float> data,
                 std::vector<Tensor> inputs, BackwardFn backward) {
    if (static_cast<std::int64_t>(data.size()) != numel_of(shape)) {
        throw ShapeError(std::string(name) + ": internal size mismatch");
    }
    detail::check_finite(name, data);
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);

    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& in : inputs) needs = needs || checked(in).requires_grad;
    }
    if (needs) {
        TapeEntry entry;
        entry.name = std::string(name);
        entry.inputs.reserve(inputs.size());
        for (const auto& in : inputs) entry.inputs.push_back(in.impl_ptr());
        entry.output = impl;
        entry.backward = std::move(backward);
        impl->requires_grad = true;
        impl->tape_index = static_cast<std::int64_t>(g_tape.entries.size());
        impl->tape_generation = g_tape.generation;
        g_tape.entries.push_back(std::move(entry));
    }
    return make_from_impl(std::move(impl));
}

void backward(const Tensor& loss) {
    auto& root = checked(loss);
    if (root.data.size() != 1) {
        throw ShapeError("backward requires a scalar loss, got shape " + shape_str(root.shape));
    }
    if (root.tape_index < 0 || !root.requires_grad) {
        throw StateError("backward: loss is detached from any recorded graph");
    }
    if (root.tape_generation != g_tape.generation ||
        root.tape_index >= static_cast<std::int64_t>(g_tape.entries.size())) {
        throw StateError("backward: the tape holding this graph was already consumed");
    }

    root.grad.assign(1, 1.0f);
    std::vector<std::span<float>> spans;
    for (std::int64_t idx = root.tape_index; idx >= 0; --idx) {
        auto& entry = g_tape.entries[static_cast<std::size_t>(idx)];
        auto& out = *entry.output;
        if (out.grad.empty()) continue;
        spans.clear();
        for (auto& in : entry.inputs) {
            if (in->requires_grad) {
                if (in->grad.empty()) in->grad.assign(in->data.size(), 0.0f);
                spans.emplace_back(in->grad);
            } else {
                spans.emplace_back();
            }
        }
        entry.backward(out.grad, spans);
        // Intermediate gradients are not retained once propagated.
        std::vector<float>().swap(out.grad);
    }

    for (auto& entry : g_tape.entries) {
        for (auto& in : entry.inputs) {
            if (in->tape_index < 0 && !in->grad.empty()) detail::check_finite("backward", in->grad);
        }
    }
    clear_tape();
}

// ---------------------------------------------------------------------------
// Broadcasting machinery
// ---------------------------------------------------------------------------

namespace {

std::vector<std::int64_t> contiguous_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (int d = static_cast<int>(s.size()) - 2; d >= 0; --d) {
        st[static_cast<std::size_t>(d)] =
            st[static_cast<std::size_t>(d) + 1] * s[static_cast<std::size_t>(d) + 1];
    }
    return st;
}

// Iteration plan over `out`, with per-dimension strides into two operands
// (stride 0 on broadcast dimensions).
struct Plan {
    Shape out;
    std::vector<std::int64_t> sa;
    std::vector<std::int64_t> sb;
};

Plan broadcast_plan(const Shape& a, const Shape& b, std::string_view op) {
    const std::size_t r = std::max(a.size(), b.size());
    Plan p;
    p.out.assign(r, 1);
    p.sa.assign(r, 0);
    p.sb.assign(r, 0);
    auto sta = contiguous_strides(a);
    auto stb = contiguous_strides(b);
    for (std::size_t i = 0; i < r; ++i) {
        const std::int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
        const std::int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (da != db && da != 1 && db != 1) {
            throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcast-compatible");
        }
        const std::size_t o = r - 1 - i;
        p.out[o] = std::max(da, db);
        if (i < a.size() && da != 1) p.sa[o] = sta[a.size() - 1 - i];
        if (i < b.size() && db != 1) p.sb[o] = stb[b.size() - 1 - i];
    }
    return p;
}

// Calls run(out_offset, a_offset, b_offset, length, a_step, b_step) for each
// contiguous run of the innermost output dimension, in row-major order.
template <class F>
void for_each_run(const Plan& p, F&& run) {
    const std::size_t r = p.out.size();
    if (r == 0) {
        run(std::int64_t{0}, std::int64_t{0}, std::int64_t{0}, std::int64_t{1}, std::int64_t{0}, std::int64_t{0});
        return;
    }
    const std::int64_t inner = p.out[r - 1];
    const std::int64_t ia_step = p.sa[r - 1];
    const std::int64_t ib_step = p.sb[r - 1];
    std::vector<std::int64_t> idx(r, 0);
    std::int64_t o = 0, ia = 0, ib = 0;
    const std::int64_t total = numel_of(p.out);
    while (o < total) {
        run(o, ia, ib, inner, ia_step, ib_step);
        o += inner;
        int d = static_cast<int>(r) - 2;
        for (; d >= 0; --d) {
            const auto du = static_cast<std::size_t>(d);
            ++idx[du];
            ia += p.sa[du];
            ib += p.sb[du];
            if (idx[du] < p.out[du]) break;
            ia -= p.sa[du] * p.out[du];
            ib -= p.sb[du] * p.out[du];
            idx[du] = 0;
        }
        if (d < 0) break;
    }
}

// Calls f(out_offset, a_offset, b_offset) for every element of p.out.
template <class F>
void for_each(const Plan& p, F&& f) {
    for_each_run(p, [&](std::int64_t o, std::int64_t a, std::int64_t b, std::int64_t n, std::int64_t sa, std::int64_t sb) {
        for (std::int64_t j = 0; j < n; ++j, ++o, a += sa, b += sb) f(o, a, b);
    });
}

// Accumulates g * d(x, y) into acc at the a-side (Side = 0) or b-side offsets.
// Runs where that side is broadcast collapse into a single sum.
template <int Side, class D>
void accumulate_broadcast(const Plan& p, const float* g, const float* x, const float* y, D d, std::vector<double>& acc) {
    for_each_run(p, [&](std::int64_t o, std::int64_t a, std::int64_t b, std::int64_t n, std::int64_t sa, std::int64_t sb) {
        const std::int64_t own_step = Side == 0 ? sa : sb;
        std::int64_t& own = Side == 0 ? a : b;
        if (own_step == 0) {
            const std::int64_t target = own;
            double s = 0.0;
            for (std::int64_t j = 0; j < n; ++j, ++o, a += sa, b += sb) s += static_cast<double>(g[o]) * d(x[a], y[b]);
            acc[static_cast<std::size_t>(target)] += s;
        } else {
            for (std::int64_t j = 0; j < n; ++j, ++o, a += sa, b += sb) {
                acc[static_cast<std::size_t>(own)] += static_cast<double>(g[o]) * d(x[a], y[b]);
            }
        }
    });
}

template <class Fwd, class DA, class DB>
Tensor binary(std::string_view name, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
    const auto& av = checked(a).data;
    const auto& bv = checked(b).data;
    if (a.shape() == b.shape()) {
        std::vector<float> out(av.size());
        for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
        return record_op(name, a.shape(), std::move(out), {a, b},
                         [a, b, da, db](std::span<const float> g, std::span<const std::span<float>> gi) {
                             const float* x = a.impl()->data.data();
                             const float* y = b.impl()->data.data();
                             const float* gp = g.data();
                             const std::size_t n = g.size();
                             if (!gi[0].empty()) {
                                 float* out = gi[0].data();
                                 for (std::size_t i = 0; i < n; ++i) out[i] += gp[i] * da(x[i], y[i]);
                             }
                             if (!gi[1].empty()) {
                                 float* out = gi[1].data();
                                 for (std::size_t i = 0; i < n; ++i) out[i] += gp[i] * db(x[i], y[i]);
                             }
                         });
    }
    Plan p = broadcast_plan(a.shape(), b.shape(), name);
    std::vector<float> out(static_cast<std::size_t>(numel_of(p.out)));
    for_each(p, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
        out[static_cast<std::size_t>(o)] = fwd(av[static_cast<std::size_t>(ia)], bv[static_cast<std::size_t>(ib)]);
    });
    Shape out_shape = p.out;
    return record_op(
        name, std::move(out_shape), std::move(out), {a, b},
        [a, b, p, da, db](std::span<const float> g, std::span<const std::span<float>> gi) {
            const auto& x = a.impl()->data;
            const auto& y = b.impl()->data;
            if (!gi[0].empty()) {
                std::vector<double> acc(x.size(), 0.0);
                accumulate_broadcast<0>(p, g.data(), x.data(), y.data(), da, acc);
                for (std::size_t i = 0; i < acc.size(); ++i) gi[0][i] += static_cast<float>(acc[i]);
            }
            if (!gi[1].empty()) {
                std::vector<double> acc(y.size(), 0.0);
                accumulate_broadcast<1>(p, g.data(), x.data(), y.data(), db, acc);
                for (std::size_t i = 0; i < acc.size(); ++i) gi[1][i] += static_cast<float>(acc[i]);
            }
        });
}

template <class Fwd, class D>
Tensor unary(std::string_view name, const Tensor& x, Fwd fwd, D deriv) {
    const auto& xv = checked(x).data;
    std::vector<float> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    return record_op(name, x.shape(), std::move(out), {x},
                     [x, deriv](std::span<const float> g, std::span<const std::span<float>> gi) {
                         const float* v = x.impl()->data.data();
                         const float* gp = g.data();
                         float* out = gi[0].data();
                         const std::size_t n = g.size();
                         for (std::size_t i = 0; i < n; ++i) out[i] += gp[i] * deriv(v[i]);
                     });
}

float stable_sigmoid(float v) {
    if (v >= 0) return 1.0f / (1.0f + std::exp(-v));
    const float e = std::exp(v);
    return e / (1.0f + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary("add", a, b, [](float x, float y) { return x + y; },
                  [](float, float) { return 1.0f; }, [](float, float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary("sub", a, b, [](float x, float y) { return x - y; },
                  [](float, float) { return 1.0f; }, [](float, float) { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary("mul", a, b, [](float x, float y) { return x * y; },
                  [](float, float y) { return y; }, [](float x, float) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    for (float v : checked(b).data) {
        if (v == 0.0f) throw DomainError("div: division by zero");
    }
    return binary("div", a, b, [](float x, float y) { return x / y; },
                  [](float, float y) { return 1.0f / y; }, [](float x, float y) { return -x / (y * y); });
}

Tensor add(const Tensor& a, float b) {
    return unary("add_scalar", a, [b](float x) { return x + b; }, [](float) { return 1.0f; });
}

Tensor mul(const Tensor& a, float b) {
    return unary("mul_scalar", a, [b](float x) { return x * b; }, [b](float) { return b; });
}

Tensor neg(const Tensor& x) { return mul(x, -1.0f); }

Tensor abs(const Tensor& x) {
    return unary("abs", x, [](float v) { return std::fabs(v); },
                 [](float v) { return v > 0 ? 1.0f : (v < 0 ? -1.0f : 0.0f); });
}

Tensor exp(const Tensor& x) {
    return unary("exp", x, [](float v) { return std::exp(v); }, [](float v) { return std::exp(v); });
}

Tensor log(const Tensor& x) {
    for (float v : checked(x).data) {
        if (!(v > 0.0f)) throw DomainError("log: argument must be positive");
    }
    return unary("log", x, [](float v) { return std::log(v); }, [](float v) { return 1.0f / v; });
}

Tensor sqrt(const Tensor& x) {
    for (float v : checked(x).data) {
        if (v < 0.0f) throw DomainError("sqrt: argument must be non-negative");
    }
    return unary("sqrt", x, [](float v) { return std::sqrt(v); },
                 [](float v) { return 0.5f / std::sqrt(v); });
}

Tensor square(const Tensor& x) {
    return unary("square", x, [](float v) { return v * v; }, [](float v) { return 2.0f * v; });
}

Tensor pow(const Tensor& x, float e) {
    const bool integral = std::floor(e) == e;
    for (float v : checked(x).data) {
        if (v < 0.0f && !integral) throw DomainError("pow: negative base with non-integer exponent");
        if (v == 0.0f && e < 0.0f) throw DomainError("pow: zero base with negative exponent");
    }
    return unary("pow", x, [e](float v) { return std::pow(v, e); },
                 [e](float v) { return e == 0.0f ? 0.0f : e * std::pow(v, e - 1.0f); });
}

Tensor clamp(const Tensor& x, float lo, float hi) {
    if (lo > hi) throw DomainError("clamp: lo > hi");
    return unary("clamp", x, [lo, hi](float v) { return std::clamp(v, lo, hi); },
                 [lo, hi](float v) { return (v >= lo && v <= hi) ? 1.0f : 0.0f; });
}

Tensor relu(const Tensor& x) {
    return unary("relu", x, [](float v) { return v > 0 ? v : 0.0f; },
                 [](float v) { return v > 0 ? 1.0f : 0.0f; });
}

Tensor leaky_relu(const Tensor& x, float slope) {
    return unary("leaky_relu", x, [slope](float v) { return v > 0 ? v : slope * v; },
                 [slope](float v) { return v > 0 ? 1.0f : slope; });
}

Tensor sigmoid(const Tensor& x) {
    return unary("sigmoid", x, stable_sigmoid, [](float v) {
        const float s = stable_sigmoid(v);
        return s * (1.0f - s);
    });
}

Tensor tanh(const Tensor& x) {
    return unary("tanh", x, [](float v) { return std::tanh(v); }, [](float v) {
        const float t = std::tanh(v);
        return 1.0f - t * t;
    });
}

Tensor softplus(const Tensor& x) {
    return unary("softplus", x,
                 [](float v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
                 stable_sigmoid);
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace {

struct AxisReduce {
    Plan plan;  // out = input shape, sa = input strides, sb = output strides
    Shape out_shape;
};

AxisReduce axis_plan(const Shape& in, std::vector<int> axes, bool keepdim) {
    const int r = static_cast<int>(in.size());
    for (auto& a : axes) {
        if (a < 0) a += r;
        if (a < 0 || a >= r) throw ShapeError("reduction axis out of range for shape " + shape_str(in));
    }
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
    Shape keep = in;
    for (int a : axes) keep[static_cast<std::size_t>(a)] = 1;
    AxisReduce ar;
    ar.plan.out = in;
    ar.plan.sa = contiguous_strides(in);
    ar.plan.sb = contiguous_strides(keep);
    for (int a : axes) ar.plan.sb[static_cast<std::size_t>(a)] = 0;
    if (keepdim) {
        ar.out_shape = keep;
    } else {
        for (int d = 0; d < r; ++d) {
            if (!std::binary_search(axes.begin(), axes.end(), d)) ar.out_shape.push_back(in[static_cast<std::size_t>(d)]);
        }
    }
    return ar;
}

Tensor scaled_sum_axes(std::string_view name, const Tensor& x, std::vector<int> axes, bool keepdim,
                       bool average) {
    AxisReduce ar = axis_plan(x.shape(), std::move(axes), keepdim);
    const auto& xv = x.values();
    const std::int64_t out_n = numel_of(ar.out_shape);
    const double scale = average ? static_cast<double>(out_n) / static_cast<double>(xv.size()) : 1.0;
    std::vector<double> acc(static_cast<std::size_t>(out_n), 0.0);
    for_each(ar.plan, [&](std::int64_t, std::int64_t i, std::int64_t o) {
        acc[static_cast<std::size_t>(o)] += xv[static_cast<std::size_t>(i)];
    });
    std::vector<float> out(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] * scale);
    Plan p = ar.plan;
    return record_op(name, ar.out_shape, std::move(out), {x},
                     [p, scale](std::span<const float> g, std::span<const std::span<float>> gi) {
                         const auto s = static_cast<float>(scale);
                         for_each(p, [&](std::int64_t, std::int64_t i, std::int64_t o) {
                             gi[0][static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(o)] * s;
                         });
                     });
}

Tensor scaled_sum_all(std::string_view name, const Tensor& x, bool average) {
    const auto& xv = checked(x).data;
    double acc = 0.0;
    for (float v : xv) acc += v;
    const double scale = average ? 1.0 / static_cast<double>(xv.size()) : 1.0;
    std::vector<float> out{static_cast<float>(acc * scale)};
    return record_op(name, Shape{}, std::move(out), {x},
                     [scale](std::span<const float> g, std::span<const std::span<float>> gi) {
                         const auto s = static_cast<float>(g[0] * scale);
                         for (auto& v : gi[0]) v += s;
                     });
}

}  // namespace

Tensor sum(const Tensor& x) { return scaled_sum_all("sum", x, false); }
Tensor mean(const Tensor& x) { return scaled_sum_all("mean", x, true); }

Tensor sum(const Tensor& x, std::vector<int> axes, bool keepdim) {
    return scaled_sum_axes("sum", x, std::move(axes), keepdim, false);
}

Tensor mean(const Tensor& x, std::vector<int> axes, bool keepdim) {
    return scaled_sum_axes("mean", x, std::move(axes), keepdim, true);
}

Tensor max(const Tensor& x, std::vector<int> axes, bool keepdim) {
    AxisReduce ar = axis_plan(x.shape(), std::move(axes), keepdim);
    const auto& xv = x.values();
    const std::int64_t out_n = numel_of(ar.out_shape);
    std::vector<float> out(static_cast<std::size_t>(out_n), 0.0f);
    std::vector<std::int64_t> arg(static_cast<std::size_t>(out_n), -1);
    for_each(ar.plan, [&](std::int64_t, std::int64_t i, std::int64_t o) {
        const auto ou = static_cast<std::size_t>(o);
        const float v = xv[static_cast<std::size_t>(i)];
        if (arg[ou] < 0 || v > out[ou]) {
            out[ou] = v;
            arg[ou] = i;
        }
    });
    return record_op("max", ar.out_shape, std::move(out), {x},
                     [arg](std::span<const float> g, std::span<const std::span<float>> gi) {
                         for (std::size_t o = 0; o < arg.size(); ++o) gi[0][static_cast<std::size_t>(arg[o])] += g[o];
                     });
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
    std::int64_t known = 1;
    int infer = -1;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) {
            if (infer >= 0) throw ShapeError("reshape: more than one inferred extent");
            infer = static_cast<int>(i);
        } else {
            known *= shape[i];
        }
    }
    if (infer >= 0 && known > 0 && x.numel() % known == 0) shape[static_cast<std::size_t>(infer)] = x.numel() / known;
    if (numel_of(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    validate_shape(shape);
    std::vector<float> out(x.values().begin(), x.values().end());
    return record_op("reshape", std::move(shape), std::move(out), {x},
                     [](std::span<const float> g, std::span<const std::span<float>> gi) {
                         for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
                     });
}

namespace {

struct Split {
    std::int64_t outer = 1, extent = 1, inner = 1;
};

Split split_at(const Shape& s, int axis) {
    Split sp;
    for (int d = 0; d < axis; ++d) sp.outer *= s[static_cast<std::size_t>(d)];
    sp.extent = s[static_cast<std::size_t>(axis)];
    for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < s.size(); ++d) sp.inner *= s[d];
    return sp;
}

int normalize_axis(int axis, int rank) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw ShapeError("axis out of range");
    return axis;
}

}  // namespace

Tensor narrow(const Tensor& x, int axis, std::int64_t start, std::int64_t length) {
    axis = normalize_axis(axis, x.rank());
    const Split sp = split_at(x.shape(), axis);
    if (start < 0 || length <= 0 || start + length > sp.extent) {
        throw ShapeError("narrow: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") outside extent " + std::to_string(sp.extent));
    }
    Shape shape = x.shape();
    shape[static_cast<std::size_t>(axis)] = length;
    const auto& xv = x.values();
    std::vector<float> out(static_cast<std::size_t>(sp.outer * length * sp.inner));
    const std::int64_t block = length * sp.inner;
    for (std::int64_t o = 0; o < sp.outer; ++o) {
        std::copy_n(xv.begin() + (o * sp.extent + start) * sp.inner, block, out.begin() + o * block);
    }
    return record_op("narrow", std::move(shape), std::move(out), {x},
                     [sp, start, block](std::span<const float> g, std::span<const std::span<float>> gi) {
                         for (std::int64_t o = 0; o < sp.outer; ++o) {
                             float* dst = gi[0].data() + (o * sp.extent + start) * sp.inner;
                             const float* src = g.data() + o * block;
                             for (std::int64_t i = 0; i < block; ++i) dst[i] += src[i];
                         }
                     });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    axis = normalize_axis(axis, parts[0].rank());
    Shape shape = parts[0].shape();
    std::int64_t total = 0;
    std::vector<std::int64_t> extents;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != shape.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d) {
            if (static_cast<int>(d) != axis && s[d] != shape[d]) {
                throw ShapeError("concat: shapes " + shape_str(s) + " and " + shape_str(shape) + " differ off-axis");
            }
        }
        extents.push_back(s[static_cast<std::size_t>(axis)]);
        total += extents.back();
    }
    shape[static_cast<std::size_t>(axis)] = total;
    const Split sp = split_at(shape, axis);
    std::vector<float> out(static_cast<std::size_t>(numel_of(shape)));
    std::int64_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& pv = parts[k].values();
        const std::int64_t block = extents[k] * sp.inner;
        for (std::int64_t o = 0; o < sp.outer; ++o) {
            std::copy_n(pv.begin() + o * block, block, out.begin() + (o * total + offset) * sp.inner);
        }
        offset += extents[k];
    }
    return record_op("concat", shape, std::move(out), parts,
                     [sp, total, extents](std::span<const float> g, std::span<const std::span<float>> gi) {
                         std::int64_t off = 0;
                         for (std::size_t k = 0; k < extents.size(); ++k) {
                             const std::int64_t block = extents[k] * sp.inner;
                             if (!gi[k].empty()) {
                                 for (std::int64_t o = 0; o < sp.outer; ++o) {
                                     const float* src = g.data() + (o * total + off) * sp.inner;
                                     float* dst = gi[k].data() + o * block;
                                     for (std::int64_t i = 0; i < block; ++i) dst[i] += src[i];
                                 }
                             }
                             off += extents[k];
                         }
                     });
}

}  // namespace wvae
