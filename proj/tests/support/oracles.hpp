#pragma once

// Independent reference implementations shared by the unit and acceptance
// tests. Nothing here calls into the library's kernels.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "wavevae/models.hpp"
#include "wavevae/rng.hpp"
#include "wavevae/tensor.hpp"
#include "wavevae/wavelet.hpp"

namespace oracle {

using wvae::Rng;
using wvae::Shape;
using wvae::Tensor;

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (float& v : t.mutable_values()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// Uniform in [lo, hi] with magnitude at least `gap`, keeping kinks at 0 out of
// reach of the finite-difference step.
inline Tensor away_from_zero(Rng& rng, Shape shape, double gap = 0.1, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (float& v : t.mutable_values()) {
        const double m = rng.uniform(gap, hi);
        v = static_cast<float>(rng.uniform() < 0.5 ? -m : m);
    }
    return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    auto x = a.values();
    auto y = b.values();
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::fabs(static_cast<double>(x[i]) - y[i]));
    return m;
}

inline double energy(const Tensor& t) {
    double e = 0.0;
    for (float v : t.values()) e += static_cast<double>(v) * v;
    return e;
}

// ---- central finite differences ---------------------------------------------

struct GradCheckOptions {
    float step = 1e-3f;
    std::size_t max_coords = 64;  // per input; larger inputs are sampled
    std::uint64_t seed = 7;
    // Networks with relu or |.| are not differentiable everywhere. When set, a
    // coordinate whose left and right difference quotients over kink_step
    // disagree by more than this fraction is taken to have a kink nearby and
    // is left out. The decision never looks at the analytic gradient.
    double kink_tolerance = 0.0;
    float kink_step = 1e-3f;  // probe width for the kink test
    std::size_t* skipped = nullptr;
    std::size_t* checked = nullptr;
};

// `f` builds a scalar loss from the current values of `inputs` (which it may
// ignore in favour of tensors sharing their storage). Returns the norm-wise
// relative error ||g_a - g_n|| / max(||g_a||, ||g_n||, 1e-6) over the checked
// coordinates of all inputs.
inline double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                         const GradCheckOptions& opt = {}) {
    for (auto& t : inputs) {
        t.requires_grad_(true);
        t.zero_grad();
    }
    wvae::backward(f());
    std::vector<std::vector<float>> analytic;
    for (auto& t : inputs) {
        analytic.emplace_back(t.grad().begin(), t.grad().end());
        t.zero_grad();
    }
    Rng pick(opt.seed);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    wvae::NoGradGuard no_grad;
    const double base = opt.kink_tolerance > 0.0 ? f().item() : 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto values = inputs[k].mutable_values();
        std::vector<std::size_t> coords(values.size());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        if (coords.size() > opt.max_coords) {
            for (std::size_t i = 0; i < opt.max_coords; ++i) {
                std::swap(coords[i], coords[i + pick.below(coords.size() - i)]);
            }
            coords.resize(opt.max_coords);
        }
        for (std::size_t i : coords) {
            const float saved = values[i];
            values[i] = saved + opt.step;
            const double up = f().item();
            values[i] = saved - opt.step;
            const double down = f().item();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * static_cast<double>(opt.step));
            if (opt.checked) ++*opt.checked;
            if (opt.kink_tolerance > 0.0) {
                // Left and right one-sided slopes agree up to curvature on a
                // smooth stretch and differ by the jump across a kink.
                const double w = opt.kink_step;
                values[i] = saved + opt.kink_step;
                const double right = (f().item() - base) / w;
                values[i] = saved - opt.kink_step;
                const double left = (base - f().item()) / w;
                values[i] = saved;
                if (std::fabs(right - left) > opt.kink_tolerance * std::max({std::fabs(right), std::fabs(left), 1e-2})) {
                    if (opt.skipped) ++*opt.skipped;
                    continue;
                }
            }
            const double a = analytic[k][i];
            diff2 += (a - numeric) * (a - numeric);
            a2 += a * a;
            n2 += numeric * numeric;
        }
    }
    return std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-6});
}

// Contracts an op output against fixed random weights so every output
// element reaches the scalar loss with a distinct coefficient.
inline Tensor contract(const Tensor& y, const Tensor& weights) { return wvae::sum(wvae::mul(y, weights)); }

// ---- naive kernels ----------------------------------------------------------

// Direct summation over [B,Cin,H,W] * [Cout,Cin,kh,kw].
inline std::vector<double> naive_conv2d(const Tensor& x, const Tensor& k, int stride, int pad, Shape* out_shape) {
    const auto B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const auto O = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    const auto Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
    *out_shape = {B, O, Ho, Wo};
    std::vector<double> y(static_cast<std::size_t>(B * O * Ho * Wo), 0.0);
    auto xv = x.values();
    auto kv = k.values();
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t o = 0; o < O; ++o)
            for (std::int64_t i = 0; i < Ho; ++i)
                for (std::int64_t j = 0; j < Wo; ++j) {
                    double acc = 0.0;
                    for (std::int64_t c = 0; c < C; ++c)
                        for (std::int64_t u = 0; u < kh; ++u)
                            for (std::int64_t v = 0; v < kw; ++v) {
                                const auto yy = i * stride - pad + u, xx = j * stride - pad + v;
                                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                                acc += static_cast<double>(xv[static_cast<std::size_t>(((b * C + c) * H + yy) * W + xx)]) *
                                       kv[static_cast<std::size_t>(((o * C + c) * kh + u) * kw + v)];
                            }
                    y[static_cast<std::size_t>(((b * O + o) * Ho + i) * Wo + j)] = acc;
                }
    return y;
}

// O(n^4) DFT of a real n*n grid.
inline std::vector<std::complex<double>> naive_dft2(const std::vector<double>& g, std::int64_t n) {
    std::vector<std::complex<double>> out(static_cast<std::size_t>(n * n));
    for (std::int64_t u = 0; u < n; ++u)
        for (std::int64_t v = 0; v < n; ++v) {
            std::complex<double> acc = 0.0;
            for (std::int64_t y = 0; y < n; ++y)
                for (std::int64_t x = 0; x < n; ++x) {
                    const double ang = -2.0 * std::numbers::pi * static_cast<double>(u * y + v * x) / static_cast<double>(n);
                    acc += g[static_cast<std::size_t>(y * n + x)] * std::polar(1.0, ang);
                }
            out[static_cast<std::size_t>(u * n + v)] = acc;
        }
    return out;
}

// Haar analysis of one 2x2 block by the filter-bank definition.
inline std::array<double, 4> haar_block(double a, double b, double c, double d) {
    return {(a + b + c + d) / 2, (a + b - c - d) / 2, (a - b + c - d) / 2, (a - b - c + d) / 2};
}

// Separable Gaussian blur with reflected borders, per image and channel.
inline Tensor gaussian_blur(const Tensor& images, double sigma) {
    if (sigma <= 0) return images.clone();
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> w(static_cast<std::size_t>(2 * r + 1));
    double total = 0.0;
    for (int i = -r; i <= r; ++i) total += w[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& v : w) v /= total;
    const auto planes = images.dim(0) * images.dim(1), H = images.dim(2), W = images.dim(3);
    auto reflect = [](std::int64_t i, std::int64_t n) {
        while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
        return i;
    };
    Tensor out(images.shape());
    auto src = images.values();
    auto dst = out.mutable_values();
    std::vector<double> tmp(static_cast<std::size_t>(H * W));
    for (std::int64_t p = 0; p < planes; ++p) {
        const float* s = src.data() + p * H * W;
        float* d = dst.data() + p * H * W;
        for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i) acc += w[static_cast<std::size_t>(i + r)] * s[y * W + reflect(x + i, W)];
                tmp[static_cast<std::size_t>(y * W + x)] = acc;
            }
        for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i) acc += w[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(reflect(y + i, H) * W + x)];
                d[y * W + x] = static_cast<float>(acc);
            }
    }
    return out;
}

// Sample std of all values.
inline double pixel_std(const Tensor& t) {
    double m = 0.0;
    for (float v : t.values()) m += v;
    m /= static_cast<double>(t.numel());
    double s = 0.0;
    for (float v : t.values()) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(t.numel()));
}

// ---- differentiable-op catalogue ----------------------------------------------

// One randomized gradient check per call; returns the relative error.
struct OpCase {
    std::string name;
    std::function<double(Rng&)> check;
};

inline std::vector<OpCase> op_cases() {
    using namespace wvae;
    std::vector<OpCase> cases;
    auto dims = [](Rng& rng, std::int64_t lo, std::int64_t hi) { return lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); };
    auto unary = [&](std::string name, std::function<Tensor(const Tensor&)> op, double lo, double hi, bool kink = false) {
        cases.push_back({name, [=](Rng& rng) {
                             Shape s{dims(rng, 1, 3), dims(rng, 2, 5)};
                             Tensor x = kink ? away_from_zero(rng, s, 0.05, hi) : random_tensor(rng, s, lo, hi);
                             Tensor w = random_tensor(rng, s);
                             return grad_check([=] { return contract(op(x), w); }, {x});
                         }});
    };
    auto binary = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op, double lo_b, double hi_b) {
        cases.push_back({name, [=](Rng& rng) {
                             const auto r = dims(rng, 1, 3), c = dims(rng, 2, 4);
                             // Alternate between equal shapes and a broadcast row.
                             const bool bcast = rng.uniform() < 0.5;
                             Tensor a = random_tensor(rng, {r, c});
                             Tensor b = random_tensor(rng, bcast ? Shape{c} : Shape{r, c}, lo_b, hi_b);
                             Tensor w = random_tensor(rng, {r, c});
                             return grad_check([=] { return contract(op(a, b), w); }, {a, b});
                         }});
    };
    binary("add", [](const Tensor& a, const Tensor& b) { return add(a, b); }, -1, 1);
    binary("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }, -1, 1);
    binary("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }, -1, 1);
    binary("div", [](const Tensor& a, const Tensor& b) { return div(a, b); }, 0.5, 2.0);
    unary("add_scalar", [](const Tensor& x) { return add(x, 0.7f); }, -1, 1);
    unary("mul_scalar", [](const Tensor& x) { return mul(x, -1.3f); }, -1, 1);
    unary("neg", [](const Tensor& x) { return neg(x); }, -1, 1);
    unary("abs", [](const Tensor& x) { return abs(x); }, -1, 1, true);
    unary("exp", [](const Tensor& x) { return exp(x); }, -1, 1);
    unary("log", [](const Tensor& x) { return log(x); }, 0.5, 2.0);
    unary("sqrt", [](const Tensor& x) { return sqrt(x); }, 0.5, 2.0);
    unary("square", [](const Tensor& x) { return square(x); }, -1, 1);
    unary("pow", [](const Tensor& x) { return pow(x, 2.5f); }, 0.5, 1.5);
    cases.push_back({"clamp", [=](Rng& rng) {
                         // Inputs stay 0.05 away from the bounds at +-0.5.
                         Tensor x({dims(rng, 1, 3), dims(rng, 2, 5)});
                         for (float& v : x.mutable_values()) {
                             const double m = rng.uniform(0.0, 0.85);
                             v = static_cast<float>(m < 0.45 ? m : m + 0.1) * (rng.uniform() < 0.5 ? -1.0f : 1.0f);
                         }
                         Tensor w = random_tensor(rng, x.shape());
                         return grad_check([=] { return contract(clamp(x, -0.5f, 0.5f), w); }, {x});
                     }});
    unary("relu", [](const Tensor& x) { return relu(x); }, -1, 1, true);
    unary("leaky_relu", [](const Tensor& x) { return leaky_relu(x, 0.2f); }, -1, 1, true);
    unary("sigmoid", [](const Tensor& x) { return sigmoid(x); }, -2, 2);
    unary("tanh", [](const Tensor& x) { return tanh(x); }, -2, 2);
    unary("softplus", [](const Tensor& x) { return softplus(x); }, -3, 3);

    cases.push_back({"sum", [](Rng& rng) {
                         Tensor x = random_tensor(rng, {3, 4});
                         return grad_check([=] { return mul(sum(x), 0.5f); }, {x});
                     }});
    cases.push_back({"sum_axes", [=](Rng& rng) {
                         Tensor x = random_tensor(rng, {2, dims(rng, 2, 4), 3});
                         const int axis = static_cast<int>(rng.below(3));
                         Tensor y = sum(x, {axis}, true);
                         Tensor w = random_tensor(rng, y.shape());
                         return grad_check([=] { return contract(sum(x, {axis}, true), w); }, {x});
                     }});
    cases.push_back({"mean", [](Rng& rng) {
                         Tensor x = random_tensor(rng, {3, 5});
                         return grad_check([=] { return mean(square(x)); }, {x});
                     }});
    cases.push_back({"mean_axes", [](Rng& rng) {
                         Tensor x = random_tensor(rng, {2, 3, 4});
                         Tensor w = random_tensor(rng, {2, 4});
                         return grad_check([=] { return contract(mean(x, {1}), w); }, {x});
                     }});
    cases.push_back({"max_axes", [](Rng& rng) {
                         // Distinct values spaced far beyond the step keep the argmax fixed.
                         Tensor x({3, 4});
                         auto v = x.mutable_values();
                         for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1f * static_cast<float>(i);
                         for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
                         Tensor w = random_tensor(rng, {3});
                         return grad_check([=] { return contract(max(x, {1}), w); }, {x});
                     }});
    cases.push_back({"reshape", [](Rng& rng) {
                         Tensor x = random_tensor(rng, {2, 6});
                         Tensor w = random_tensor(rng, {3, 4});
                         return grad_check([=] { return contract(reshape(x, {3, 4}), w); }, {x});
                     }});
    cases.push_back({"narrow", [=](Rng& rng) {
                         Tensor x = random_tensor(rng, {2, 6, 3});
                         const auto start = dims(rng, 0, 3);
                         Tensor w = random_tensor(rng, {2, 3, 3});
                         return grad_check([=] { return contract(narrow(x, 1, start, 3), w); }, {x});
                     }});
    cases.push_back({"concat", [](Rng& rng) {
                         Tensor a = random_tensor(rng, {2, 2, 3});
                         Tensor b = random_tensor(rng, {2, 1, 3});
                         Tensor w = random_tensor(rng, {2, 3, 3});
                         return grad_check([=] { return contract(concat({a, b}, 1), w); }, {a, b});
                     }});
    cases.push_back({"matmul", [=](Rng& rng) {
                         const auto m = dims(rng, 2, 5), k = dims(rng, 2, 5), n = dims(rng, 2, 4);
                         Tensor a = random_tensor(rng, {m, k});
                         Tensor b = random_tensor(rng, {k, n});
                         Tensor w = random_tensor(rng, {m, n});
                         return grad_check([=] { return contract(matmul(a, b), w); }, {a, b});
                     }});
    cases.push_back({"transpose", [](Rng& rng) {
                         Tensor a = random_tensor(rng, {3, 4});
                         Tensor w = random_tensor(rng, {4, 3});
                         return grad_check([=] { return contract(transpose(a), w); }, {a});
                     }});
    cases.push_back({"conv2d", [=](Rng& rng) {
                         const int stride = 1 + static_cast<int>(rng.below(2));
                         const int pad = static_cast<int>(rng.below(2));
                         const int kk = 2 + static_cast<int>(rng.below(2));
                         const std::int64_t extent = kk - 2 * pad + 3 * stride;
                         Tensor x = random_tensor(rng, {2, dims(rng, 1, 2), extent, extent});
                         Tensor k = random_tensor(rng, {dims(rng, 1, 3), x.dim(1), kk, kk});
                         Tensor w = random_tensor(rng, conv2d(x, k, stride, pad).shape());
                         return grad_check([=] { return contract(conv2d(x, k, stride, pad), w); }, {x, k});
                     }});
    cases.push_back({"conv_transpose2d", [=](Rng& rng) {
                         const int stride = 1 + static_cast<int>(rng.below(2));
                         const int pad = static_cast<int>(rng.below(2));
                         Tensor x = random_tensor(rng, {2, dims(rng, 1, 3), 3, 3});
                         Tensor k = random_tensor(rng, {x.dim(1), dims(rng, 1, 2), 4, 4});
                         Tensor w = random_tensor(rng, conv_transpose2d(x, k, stride, pad).shape());
                         return grad_check([=] { return contract(conv_transpose2d(x, k, stride, pad), w); }, {x, k});
                     }});
    cases.push_back({"avg_pool2d", [](Rng& rng) {
                         Tensor x = random_tensor(rng, {2, 2, 4, 4});
                         Tensor w = random_tensor(rng, {2, 2, 2, 2});
                         return grad_check([=] { return contract(avg_pool2d(x, 2), w); }, {x});
                     }});
    cases.push_back({"batch_norm", [](Rng& rng) {
                         const bool spatial = rng.uniform() < 0.5;
                         const Shape s = spatial ? Shape{4, 3, 2, 2} : Shape{6, 3};
                         Tensor x = random_tensor(rng, s);
                         Tensor g = random_tensor(rng, {3}, 0.5, 1.5);
                         Tensor b = random_tensor(rng, {3});
                         Tensor w = random_tensor(rng, s);
                         return grad_check(
                             [=] {
                                 Tensor rm = Tensor::zeros({3}), rv = Tensor::ones({3});
                                 return contract(batch_norm(x, g, b, rm, rv, true), w);
                             },
                             {x, g, b});
                     }});
    cases.push_back({"dwt2", [](Rng& rng) {
                         Tensor x = random_tensor(rng, {2, 2, 4, 4});
                         Tensor w = random_tensor(rng, {2, 8, 2, 2});
                         return grad_check([=] { return contract(stack_channels(dwt2(x)), w); }, {x});
                     }});
    cases.push_back({"idwt2", [](Rng& rng) {
                         Tensor y = random_tensor(rng, {2, 8, 2, 2});
                         Tensor w = random_tensor(rng, {2, 2, 4, 4});
                         return grad_check([=] { return contract(idwt2(unstack_channels(y)), w); }, {y});
                     }});
    cases.push_back({"kl_to_standard_normal", [](Rng& rng) {
                         Tensor m = random_tensor(rng, {3, 4});
                         Tensor lv = random_tensor(rng, {3, 4});
                         return grad_check([=] { return kl_to_standard_normal({m, lv}); }, {m, lv});
                     }});
    cases.push_back({"gaussian_nll", [](Rng& rng) {
                         Tensor x = random_tensor(rng, {2, 5});
                         Tensor xh = random_tensor(rng, {2, 5});
                         return grad_check([=] { return gaussian_nll(x, xh); }, {xh});
                     }});
    cases.push_back({"laplacian_nll", [](Rng& rng) {
                         Tensor w = random_tensor(rng, {2, 5});
                         Tensor r = away_from_zero(rng, {2, 5}, 0.05);
                         Tensor wh = wvae::add(w, r).detach();
                         return grad_check([=] { return laplacian_nll(w, wh); }, {wh});
                     }});
    cases.push_back({"cross_entropy_with_logits", [](Rng& rng) {
                         Tensor t = random_tensor(rng, {2, 5}, 0, 1);
                         Tensor l = random_tensor(rng, {2, 5}, -2, 2);
                         return grad_check([=] { return cross_entropy_with_logits(t, l); }, {l});
                     }});
    cases.push_back({"reparameterize", [](Rng& rng) {
                         Tensor m = random_tensor(rng, {3, 2});
                         Tensor lv = random_tensor(rng, {3, 2});
                         Tensor eps = random_tensor(rng, {3, 2});
                         Tensor w = random_tensor(rng, {3, 2});
                         return grad_check([=] { return contract(reparameterize({m, lv}, eps), w); }, {m, lv});
                     }});
    return cases;
}

// Gradient check of the whole negative ELBO of a small wavelet VAE with the
// posterior noise held fixed, over every parameter tensor (sampled).
struct ElboCheck {
    double error = 0.0;
    double skipped_fraction = 0.0;
};

// Central differences (h = 1e-3) over a few coordinates of every trainable
// tensor of a small wavelet VAE on a 2-image batch, with eps held fixed.
inline ElboCheck elbo_grad_check(Rng& rng, bool multi_resolution, float beta, double kink_tolerance = 0.1, float step = 1e-4f) {
    using namespace wvae;
    ModelConfig cfg;
    cfg.kind = multi_resolution ? ModelKind::wavelet_vae_mr : ModelKind::wavelet_vae;
    cfg.channels = 1 + 2 * static_cast<std::int64_t>(rng.below(2));
    cfg.extent = 16;
    cfg.latent = 3;
    cfg.width = 2;
    cfg.mr_levels = 2;
    cfg.beta = beta;
    auto model = std::make_shared<VaeModel>(cfg, rng.next_u64());
    // Zero biases put relu inputs exactly on the kink wherever an upstream
    // unit is dead; move them to a generic point.
    for (auto& p : model->params().trainable()) {
        if (p.first.ends_with(".bias") || p.first.ends_with(".beta"))
            for (float& v : p.second.mutable_values()) v = static_cast<float>(rng.uniform(-0.1, 0.1));
    }
    Tensor x = random_tensor(rng, {2, cfg.channels, 16, 16}, 0, 1);
    Tensor eps = sample_normal(rng, {2, cfg.latent});
    std::vector<Tensor> params;
    for (auto& p : model->params().trainable()) params.push_back(p.second);
    std::size_t skipped = 0, checked = 0;
    GradCheckOptions opt;
    opt.step = step;
    opt.max_coords = 6;
    opt.seed = rng.next_u64();
    opt.kink_tolerance = kink_tolerance;
    opt.skipped = &skipped;
    opt.checked = &checked;
    ElboCheck out;
    out.error = grad_check(
        [=] {
            auto q = model->encode(x, Mode::train);
            Tensor z = reparameterize(q, eps);
            return wavelet_elbo(x, model->decode_wavelets(z), q, beta).total;
        },
        params, opt);
    out.skipped_fraction = static_cast<double>(skipped) / static_cast<double>(std::max<std::size_t>(checked, 1));
    return out;
}

}  // namespace oracle
