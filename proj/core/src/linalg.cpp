#include <algorithm>
#include <cmath>

#include <cblas.h>

#include "tensor_impl.hpp"
#include "wavevae/error.hpp"
#include "wavevae/tensor.hpp"

namespace wvae {

namespace detail {

namespace {
// The kernels default to one thread; set_kernel_threads raises it on request.
const bool g_single_thread = [] {
    openblas_set_num_threads(1);
    return true;
}();
}  // namespace

void gemm(bool trans_a, bool trans_b, std::int64_t M, std::int64_t N, std::int64_t K, const float* A, const float* B,
          float beta, float* C) {
    const auto lda = static_cast<blasint>(trans_a ? M : K);
    const auto ldb = static_cast<blasint>(trans_b ? K : N);
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
                static_cast<blasint>(M), static_cast<blasint>(N), static_cast<blasint>(K), 1.0f, A, lda, B, ldb, beta, C,
                static_cast<blasint>(N));
}

}  // namespace detail

void set_kernel_threads(int threads) { openblas_set_num_threads(threads < 1 ? 1 : threads); }

using detail::gemm;

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

namespace {

void require_rank(const Tensor& t, int r, const char* op) {
    if (t.rank() != r) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " + shape_str(t.shape()));
    }
}

// out[m,n] = sum_p a[m,p] b[p,n] with double accumulators.
std::vector<float> matmul_raw(const float* a, const float* b, std::int64_t m, std::int64_t k, std::int64_t n) {
    std::vector<float> out(static_cast<std::size_t>(m * n));
    std::vector<double> row(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < m; ++i) {
        std::fill(row.begin(), row.end(), 0.0);
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            const float* br = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] += av * br[j];
        }
        for (std::int64_t j = 0; j < n; ++j) out[static_cast<std::size_t>(i * n + j)] = static_cast<float>(row[static_cast<std::size_t>(j)]);
    }
    return out;
}

std::vector<float> transpose_raw(const float* a, std::int64_t rows, std::int64_t cols) {
    std::vector<float> t(static_cast<std::size_t>(rows * cols));
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) t[static_cast<std::size_t>(j * rows + i)] = a[i * cols + j];
    }
    return t;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    auto out = matmul_raw(a.values().data(), b.values().data(), m, k, n);
    return record_op("matmul", Shape{m, n}, std::move(out), {a, b},
                     [a, b, m, k, n](std::span<const float> g, std::span<const std::span<float>> gi) {
                         const float* av = a.values().data();
                         const float* bv = b.values().data();
                         if (!gi[0].empty()) {
                             // dA = G * B^T
                             auto bt = transpose_raw(bv, k, n);
                             auto dA = matmul_raw(g.data(), bt.data(), m, n, k);
                             for (std::size_t i = 0; i < dA.size(); ++i) gi[0][i] += dA[i];
                         }
                         if (!gi[1].empty()) {
                             // dB = A^T * G
                             auto at = transpose_raw(av, m, k);
                             auto db = matmul_raw(at.data(), g.data(), k, m, n);
                             for (std::size_t i = 0; i < db.size(); ++i) gi[1][i] += db[i];
                         }
                     });
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const std::int64_t r = a.dim(0), c = a.dim(1);
    auto out = transpose_raw(a.values().data(), r, c);
    return record_op("transpose", Shape{c, r}, std::move(out), {a},
                     [r, c](std::span<const float> g, std::span<const std::span<float>> gi) {
                         for (std::int64_t i = 0; i < r; ++i) {
                             for (std::int64_t j = 0; j < c; ++j) gi[0][static_cast<std::size_t>(i * c + j)] += g[static_cast<std::size_t>(j * r + i)];
                         }
                     });
}

// ---------------------------------------------------------------------------
// Convolution via whole-batch im2col
// ---------------------------------------------------------------------------

namespace {

// Geometry of a cross-correlation from an image of extent (h, w) to (oh, ow).
struct ConvGeom {
    std::int64_t batch, channels, h, w, kh, kw, oh, ow;
    int stride, pad;
    std::int64_t rows() const { return channels * kh * kw; }
    std::int64_t cols() const { return batch * oh * ow; }
};

std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, int stride, int pad, const char* op) {
    const std::int64_t span = in + 2 * pad - k;
    if (stride <= 0 || pad < 0) throw ShapeError(std::string(op) + ": stride must be positive and pad non-negative");
    if (span < 0 || span % stride != 0) {
        throw ShapeError(std::string(op) + ": output extent (" + std::to_string(in) + "+2*" + std::to_string(pad) + "-" +
                         std::to_string(k) + ")/" + std::to_string(stride) + "+1 is not integral");
    }
    return span / stride + 1;
}

// Output columns ox whose input column ox*s-p+kx lies inside [0, w).
std::pair<std::int64_t, std::int64_t> valid_columns(const ConvGeom& g, std::int64_t kx) {
    std::int64_t lo = 0;
    while (lo < g.ow && lo * g.stride - g.pad + kx < 0) ++lo;
    std::int64_t hi = g.ow;
    while (hi > lo && (hi - 1) * g.stride - g.pad + kx >= g.w) --hi;
    return {lo, hi};
}

// cols[(c*kh+ky)*kw+kx, (b*oh+oy)*ow+ox] = img[b,c,oy*s-p+ky,ox*s-p+kx]
std::vector<float> im2col(const float* img, const ConvGeom& g) {
    std::vector<float> cols(static_cast<std::size_t>(g.rows() * g.cols()), 0.0f);
    const std::int64_t ncols = g.cols();
    const std::int64_t plane = g.oh * g.ow;
    for (std::int64_t c = 0; c < g.channels; ++c) {
        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
            for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                const auto [x0, x1] = valid_columns(g, kx);
                float* row = cols.data() + ((c * g.kh + ky) * g.kw + kx) * ncols;
                for (std::int64_t b = 0; b < g.batch; ++b) {
                    const float* src = img + (b * g.channels + c) * g.h * g.w;
                    float* dst = row + b * plane;
                    for (std::int64_t oy = 0; oy < g.oh; ++oy) {
                        const std::int64_t iy = oy * g.stride - g.pad + ky;
                        if (iy < 0 || iy >= g.h) continue;
                        const float* s = src + iy * g.w - g.pad + kx;
                        float* d = dst + oy * g.ow;
                        for (std::int64_t ox = x0; ox < x1; ++ox) d[ox] = s[ox * g.stride];
                    }
                }
            }
        }
    }
    return cols;
}

// Adjoint of im2col: accumulates cols back into img.
void col2im(const float* cols, const ConvGeom& g, float* img) {
    const std::int64_t ncols = g.cols();
    const std::int64_t plane = g.oh * g.ow;
    for (std::int64_t c = 0; c < g.channels; ++c) {
        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
            for (std::int64_t kx = 0; kx < g.kw; ++kx) {
                const auto [x0, x1] = valid_columns(g, kx);
                const float* row = cols + ((c * g.kh + ky) * g.kw + kx) * ncols;
                for (std::int64_t b = 0; b < g.batch; ++b) {
                    float* dst = img + (b * g.channels + c) * g.h * g.w;
                    const float* src = row + b * plane;
                    for (std::int64_t oy = 0; oy < g.oh; ++oy) {
                        const std::int64_t iy = oy * g.stride - g.pad + ky;
                        if (iy < 0 || iy >= g.h) continue;
                        float* d = dst + iy * g.w - g.pad + kx;
                        const float* s = src + oy * g.ow;
                        for (std::int64_t ox = x0; ox < x1; ++ox) d[ox * g.stride] += s[ox];
                    }
                }
            }
        }
    }
}

// [B,C,P] <-> [C,B*P]
std::vector<float> to_channel_major(const float* x, std::int64_t B, std::int64_t C, std::int64_t P) {
    std::vector<float> out(static_cast<std::size_t>(B * C * P));
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t c = 0; c < C; ++c) std::copy_n(x + (b * C + c) * P, P, out.data() + (c * B + b) * P);
    }
    return out;
}

std::vector<float> from_channel_major(const float* x, std::int64_t B, std::int64_t C, std::int64_t P) {
    std::vector<float> out(static_cast<std::size_t>(B * C * P));
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t c = 0; c < C; ++c) std::copy_n(x + (c * B + b) * P, P, out.data() + (b * C + c) * P);
    }
    return out;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int pad) {
    require_rank(x, 4, "conv2d");
    require_rank(k, 4, "conv2d");
    if (k.dim(1) != x.dim(1)) {
        throw ShapeError("conv2d: kernel " + shape_str(k.shape()) + " does not match input channels of " + shape_str(x.shape()));
    }
    ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(2), k.dim(3), 0, 0, stride, pad};
    g.oh = conv_out_extent(g.h, g.kh, stride, pad, "conv2d");
    g.ow = conv_out_extent(g.w, g.kw, stride, pad, "conv2d");
    const std::int64_t cout = k.dim(0);
    auto cols = std::make_shared<std::vector<float>>(im2col(x.values().data(), g));
    std::vector<float> y(static_cast<std::size_t>(cout * g.cols()));
    gemm(false, false, cout, g.cols(), g.rows(), k.values().data(), cols->data(), 0.0f, y.data());
    auto out = from_channel_major(y.data(), g.batch, cout, g.oh * g.ow);
    return record_op("conv2d", Shape{g.batch, cout, g.oh, g.ow}, std::move(out), {x, k},
                     [k, g, cout, cols](std::span<const float> grad, std::span<const std::span<float>> gi) {
                         auto gy = to_channel_major(grad.data(), g.batch, cout, g.oh * g.ow);
                         if (!gi[1].empty()) gemm(false, true, cout, g.rows(), g.cols(), gy.data(), cols->data(), 1.0f, gi[1].data());
                         if (!gi[0].empty()) {
                             std::vector<float> dcols(static_cast<std::size_t>(g.rows() * g.cols()));
                             gemm(true, false, g.rows(), g.cols(), cout, k.values().data(), gy.data(), 0.0f, dcols.data());
                             col2im(dcols.data(), g, gi[0].data());
                         }
                     });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& k, int stride, int pad) {
    require_rank(x, 4, "conv_transpose2d");
    require_rank(k, 4, "conv_transpose2d");
    if (k.dim(0) != x.dim(1)) {
        throw ShapeError("conv_transpose2d: kernel " + shape_str(k.shape()) + " does not match input channels of " +
                         shape_str(x.shape()));
    }
    if (stride <= 0 || pad < 0) throw ShapeError("conv_transpose2d: stride must be positive and pad non-negative");
    const std::int64_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t cout = k.dim(1), kh = k.dim(2), kw = k.dim(3);
    const std::int64_t oh = (h - 1) * stride - 2 * pad + kh;
    const std::int64_t ow = (w - 1) * stride - 2 * pad + kw;
    if (oh <= 0 || ow <= 0) throw ShapeError("conv_transpose2d: non-positive output extent");
    // Geometry of the forward conv that maps the output back onto x.
    ConvGeom g{batch, cout, oh, ow, kh, kw, h, w, stride, pad};
    auto xc = std::make_shared<std::vector<float>>(to_channel_major(x.values().data(), batch, cin, h * w));
    std::vector<float> cols(static_cast<std::size_t>(g.rows() * g.cols()));
    gemm(true, false, g.rows(), g.cols(), cin, k.values().data(), xc->data(), 0.0f, cols.data());
    std::vector<float> out(static_cast<std::size_t>(batch * cout * oh * ow), 0.0f);
    col2im(cols.data(), g, out.data());
    return record_op("conv_transpose2d", Shape{batch, cout, oh, ow}, std::move(out), {x, k},
                     [k, g, cin, xc](std::span<const float> grad, std::span<const std::span<float>> gi) {
                         auto gcols = im2col(grad.data(), g);
                         if (!gi[1].empty()) gemm(false, true, cin, g.rows(), g.cols(), xc->data(), gcols.data(), 1.0f, gi[1].data());
                         if (!gi[0].empty()) {
                             std::vector<float> dx(static_cast<std::size_t>(cin * g.cols()));
                             gemm(false, false, cin, g.cols(), g.rows(), k.values().data(), gcols.data(), 0.0f, dx.data());
                             auto back = from_channel_major(dx.data(), g.batch, cin, g.oh * g.ow);
                             for (std::size_t i = 0; i < back.size(); ++i) gi[0][i] += back[i];
                         }
                     });
}

Tensor avg_pool2d(const Tensor& x, int kernel) {
    require_rank(x, 4, "avg_pool2d");
    if (kernel <= 0 || x.dim(2) % kernel != 0 || x.dim(3) % kernel != 0) {
        throw ShapeError("avg_pool2d: extent " + shape_str(x.shape()) + " not divisible by " + std::to_string(kernel));
    }
    const std::int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t oh = h / kernel, ow = w / kernel;
    const float inv = 1.0f / static_cast<float>(kernel * kernel);
    const auto& xv = x.values();
    std::vector<float> out(static_cast<std::size_t>(planes * oh * ow), 0.0f);
    for (std::int64_t p = 0; p < planes; ++p) {
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t xx = 0; xx < w; ++xx) {
                out[static_cast<std::size_t>((p * oh + y / kernel) * ow + xx / kernel)] += xv[static_cast<std::size_t>((p * h + y) * w + xx)];
            }
        }
    }
    for (auto& v : out) v *= inv;
    return record_op("avg_pool2d", Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                     [planes, h, w, oh, ow, kernel, inv](std::span<const float> g, std::span<const std::span<float>> gi) {
                         for (std::int64_t p = 0; p < planes; ++p) {
                             for (std::int64_t y = 0; y < h; ++y) {
                                 for (std::int64_t xx = 0; xx < w; ++xx) {
                                     gi[0][static_cast<std::size_t>((p * h + y) * w + xx)] +=
                                         g[static_cast<std::size_t>((p * oh + y / kernel) * ow + xx / kernel)] * inv;
                                 }
                             }
                         }
                     });
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, float momentum, float eps) {
    if (x.rank() != 2 && x.rank() != 4) throw ShapeError("batch_norm: expected [B,C] or [B,C,H,W]");
    const std::int64_t B = x.dim(0), C = x.dim(1);
    const std::int64_t P = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
    if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C || running_var.numel() != C) {
        throw ShapeError("batch_norm: parameter extent does not match channel count");
    }
    const std::int64_t N = B * P;
    if (training && N < 2) throw ShapeError("batch_norm: training mode needs more than one value per channel");
    const auto& xv = x.values();
    std::vector<float> mu(static_cast<std::size_t>(C)), invstd(static_cast<std::size_t>(C));
    if (training) {
        auto rm = running_mean.mutable_values();
        auto rv = running_var.mutable_values();
        for (std::int64_t c = 0; c < C; ++c) {
            double s = 0.0, s2 = 0.0;
            for (std::int64_t b = 0; b < B; ++b) {
                const float* p = xv.data() + (b * C + c) * P;
                for (std::int64_t i = 0; i < P; ++i) s += p[i];
            }
            const double m = s / static_cast<double>(N);
            for (std::int64_t b = 0; b < B; ++b) {
                const float* p = xv.data() + (b * C + c) * P;
                for (std::int64_t i = 0; i < P; ++i) s2 += (p[i] - m) * (p[i] - m);
            }
            const double var = s2 / static_cast<double>(N);
            mu[static_cast<std::size_t>(c)] = static_cast<float>(m);
            invstd[static_cast<std::size_t>(c)] = static_cast<float>(1.0 / std::sqrt(var + eps));
            const auto cu = static_cast<std::size_t>(c);
            rm[cu] = static_cast<float>((1.0 - momentum) * rm[cu] + momentum * m);
            rv[cu] = static_cast<float>((1.0 - momentum) * rv[cu] + momentum * var * static_cast<double>(N) / static_cast<double>(N - 1));
        }
    } else {
        const auto& rm = running_mean.values();
        const auto& rv = running_var.values();
        for (std::int64_t c = 0; c < C; ++c) {
            mu[static_cast<std::size_t>(c)] = rm[static_cast<std::size_t>(c)];
            invstd[static_cast<std::size_t>(c)] = 1.0f / std::sqrt(rv[static_cast<std::size_t>(c)] + eps);
        }
    }
    const auto& gv = gamma.values();
    const auto& bv = beta.values();
    std::vector<float> xhat(xv.size()), out(xv.size());
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t c = 0; c < C; ++c) {
            const auto cu = static_cast<std::size_t>(c);
            const std::int64_t base = (b * C + c) * P;
            for (std::int64_t i = 0; i < P; ++i) {
                const auto k = static_cast<std::size_t>(base + i);
                xhat[k] = (xv[k] - mu[cu]) * invstd[cu];
                out[k] = gv[cu] * xhat[k] + bv[cu];
            }
        }
    }
    auto saved = std::make_shared<std::vector<float>>(std::move(xhat));
    return record_op(
        "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
        [saved, invstd, gamma, B, C, P, N, training](std::span<const float> g, std::span<const std::span<float>> gi) {
            const auto& xh = *saved;
            const auto& gv = gamma.values();
            for (std::int64_t c = 0; c < C; ++c) {
                const auto cu = static_cast<std::size_t>(c);
                double sg = 0.0, sgx = 0.0;
                for (std::int64_t b = 0; b < B; ++b) {
                    const std::int64_t base = (b * C + c) * P;
                    for (std::int64_t i = 0; i < P; ++i) {
                        const auto k = static_cast<std::size_t>(base + i);
                        sg += g[k];
                        sgx += static_cast<double>(g[k]) * xh[k];
                    }
                }
                if (!gi[1].empty()) gi[1][cu] += static_cast<float>(sgx);
                if (!gi[2].empty()) gi[2][cu] += static_cast<float>(sg);
                if (gi[0].empty()) continue;
                const double scale = static_cast<double>(gv[cu]) * invstd[cu];
                const double mg = sg / static_cast<double>(N), mgx = sgx / static_cast<double>(N);
                for (std::int64_t b = 0; b < B; ++b) {
                    const std::int64_t base = (b * C + c) * P;
                    for (std::int64_t i = 0; i < P; ++i) {
                        const auto k = static_cast<std::size_t>(base + i);
                        const double d = training ? (g[k] - mg - xh[k] * mgx) : g[k];
                        gi[0][k] += static_cast<float>(scale * d);
                    }
                }
            }
        });
}

}  // namespace wvae
