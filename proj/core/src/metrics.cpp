#include "wavevae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <fftw3.h>

#include "wavevae/error.hpp"
#include "wavevae/log.hpp"
#include "wavevae/models.hpp"
#include "wavevae/rng.hpp"

namespace wvae {

namespace {

bool power_of_two(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

using MatrixX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

MatrixX as_matrix(const std::vector<double>& a, std::int64_t d) {
    if (static_cast<std::int64_t>(a.size()) != d * d) throw ShapeError("matrix: expected " + std::to_string(d * d) + " values");
    return Eigen::Map<const MatrixX>(a.data(), d, d);
}

std::vector<double> as_vector(const MatrixX& m) { return {m.data(), m.data() + m.size()}; }

MatrixX sqrt_psd(const MatrixX& a) {
    Eigen::SelfAdjointEigenSolver<MatrixX> eig(a);
    if (eig.info() != Eigen::Success) throw NumericError("matrix_sqrt_psd: eigendecomposition failed");
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

constexpr std::int64_t kChunk = 64;

}  // namespace

ComplexGrid fft2(const std::vector<double>& grid, std::int64_t n) {
    if (!power_of_two(n)) throw ShapeError("fft2: extent " + std::to_string(n) + " is not a power of two");
    if (static_cast<std::int64_t>(grid.size()) != n * n) throw ShapeError("fft2: grid holds " + std::to_string(grid.size()) + " values, expected n*n");
    const auto count = static_cast<std::size_t>(n * n);
    auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * count));
    for (std::size_t i = 0; i < count; ++i) {
        buf[i][0] = grid[i];
        buf[i][1] = 0.0;
    }
    fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(n), static_cast<int>(n), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    ComplexGrid out;
    out.n = n;
    out.re.resize(count);
    out.im.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.re[i] = buf[i][0];
        out.im[i] = buf[i][1];
    }
    fftw_free(buf);
    return out;
}

ComplexGrid fftshift(const ComplexGrid& g) {
    ComplexGrid out = g;
    const std::int64_t n = g.n, h = n / 2;
    for (std::int64_t y = 0; y < n; ++y) {
        for (std::int64_t x = 0; x < n; ++x) {
            const auto dst = static_cast<std::size_t>(((y + h) % n) * n + (x + h) % n);
            const auto src = static_cast<std::size_t>(y * n + x);
            out.re[dst] = g.re[src];
            out.im[dst] = g.im[src];
        }
    }
    return out;
}

double iqm_single(const std::vector<double>& gray, std::int64_t n, double divisor) {
    if (!(divisor > 0)) throw DomainError("iqm: threshold divisor must be positive");
    const ComplexGrid f = fftshift(fft2(gray, n));
    std::vector<double> mag(f.re.size());
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::hypot(f.re[i], f.im[i]);
    const double m = *std::max_element(mag.begin(), mag.end());
    const double threshold = m / divisor;
    const auto above = std::count_if(mag.begin(), mag.end(), [threshold](double v) { return v > threshold; });
    return static_cast<double>(above) / static_cast<double>(n * n);
}

std::vector<std::vector<double>> luminance_grids(const Tensor& images, std::int64_t* extent) {
    if (images.rank() != 4) throw ShapeError("iqm: expected [B,C,H,W], got " + shape_str(images.shape()));
    const std::int64_t b = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
    if (c != 1 && c != 3) throw ShapeError("iqm: expected 1 or 3 channels, got " + std::to_string(c));
    std::int64_t n = 1;
    while (n * 2 <= std::min(h, w)) n *= 2;
    const std::int64_t oy = (h - n) / 2, ox = (w - n) / 2;
    const double weights[3] = {0.299, 0.587, 0.114};
    const auto v = images.values();
    std::vector<std::vector<double>> grids(static_cast<std::size_t>(b), std::vector<double>(static_cast<std::size_t>(n * n), 0.0));
    for (std::int64_t i = 0; i < b; ++i) {
        auto& g = grids[static_cast<std::size_t>(i)];
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const double wgt = c == 1 ? 1.0 : weights[ch];
            const float* plane = v.data() + (i * c + ch) * h * w;
            for (std::int64_t y = 0; y < n; ++y) {
                for (std::int64_t x = 0; x < n; ++x) g[static_cast<std::size_t>(y * n + x)] += wgt * plane[(y + oy) * w + x + ox];
            }
        }
    }
    if (extent) *extent = n;
    return grids;
}

double iqm(const Tensor& images, double divisor) {
    std::int64_t n = 0;
    const auto grids = luminance_grids(images, &n);
    if (grids.empty()) throw ShapeError("iqm: empty image set");
    double total = 0.0;
    for (const auto& g : grids) total += iqm_single(g, n, divisor);
    return total / static_cast<double>(grids.size());
}

GaussianStats gaussian_stats(const std::vector<double>& features, std::int64_t n, std::int64_t d) {
    if (n < 2) throw DomainError("gaussian_stats: need at least 2 samples, got " + std::to_string(n));
    if (static_cast<std::int64_t>(features.size()) != n * d) throw ShapeError("gaussian_stats: feature count does not match n*d");
    Eigen::Map<const MatrixX> f(features.data(), n, d);
    const Eigen::RowVectorXd mu = f.colwise().mean();
    const MatrixX centered = f.rowwise() - mu;
    MatrixX cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    cov = 0.5 * (cov + cov.transpose()).eval();
    GaussianStats s;
    s.dim = d;
    s.count = n;
    s.mean.assign(mu.data(), mu.data() + d);
    s.cov = as_vector(cov);
    return s;
}

std::vector<double> matrix_sqrt_psd(const std::vector<double>& a, std::int64_t d) {
    const MatrixX m = as_matrix(a, d);
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) throw DomainError("matrix_sqrt_psd: matrix is not symmetric");
    return as_vector(sqrt_psd(m));
}

double frechet_distance(const GaussianStats& r, const GaussianStats& g) {
    if (r.dim != g.dim) throw ShapeError("frechet_distance: dimensions " + std::to_string(r.dim) + " and " + std::to_string(g.dim) + " differ");
    const std::int64_t d = r.dim;
    const MatrixX sr = as_matrix(r.cov, d);
    const MatrixX sg = as_matrix(g.cov, d);
    const MatrixX root_r = sqrt_psd(sr);
    MatrixX inner = root_r * sg * root_r;
    inner = 0.5 * (inner + inner.transpose()).eval();
    const MatrixX cross = sqrt_psd(inner);
    double diff = 0.0;
    for (std::int64_t i = 0; i < d; ++i) {
        const double delta = r.mean[static_cast<std::size_t>(i)] - g.mean[static_cast<std::size_t>(i)];
        diff += delta * delta;
    }
    const double value = diff + sr.trace() + sg.trace() - 2.0 * cross.trace();
    if (value < 0.0) {
        warn("frechet_distance: negative value " + std::to_string(value) + " clamped to 0");
        return 0.0;
    }
    return value;
}

RandomConvExtractor::RandomConvExtractor(std::int64_t channels, std::uint64_t seed) : channels_(channels), seed_(seed) {
    Rng rng(seed);
    k1_ = sample_normal(rng, {8, channels, 3, 3});
    k2_ = sample_normal(rng, {16, 8, 4, 4});
    auto scale = [](Tensor& k, double fan_in) {
        const auto s = static_cast<float>(std::sqrt(2.0 / fan_in));
        for (float& v : k.mutable_values()) v *= s;
    };
    scale(k1_, static_cast<double>(channels * 9));
    scale(k2_, 8.0 * 16.0);
}

std::string RandomConvExtractor::id() const { return "randconv-s" + std::to_string(seed_) + "-d256"; }

std::vector<double> RandomConvExtractor::extract(const Tensor& images) const {
    if (images.rank() != 4 || images.dim(1) != channels_ || images.dim(2) != images.dim(3) || images.dim(2) % 8 != 0) {
        throw ShapeError("randconv extractor: expected [B," + std::to_string(channels_) + ",H,H] with H a multiple of 8, got " +
                         shape_str(images.shape()));
    }
    NoGradGuard no_grad;
    const std::int64_t b = images.dim(0);
    const int pool = static_cast<int>(images.dim(2) / 8);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(b * dim()));
    for (std::int64_t s = 0; s < b; s += kChunk) {
        const Tensor x = narrow(images, 0, s, std::min(kChunk, b - s));
        const Tensor h = relu(conv2d(relu(conv2d(x, k1_, 1, 1)), k2_, 2, 1));
        const Tensor f = avg_pool2d(h, pool);
        for (float v : f.values()) out.push_back(v);
    }
    return out;
}

std::vector<double> DownsampleExtractor::extract(const Tensor& images) const {
    if (images.rank() != 4 || images.dim(1) != channels_ || images.dim(2) != images.dim(3) || images.dim(2) % 8 != 0) {
        throw ShapeError("pixels8 extractor: expected [B," + std::to_string(channels_) + ",H,H] with H a multiple of 8, got " +
                         shape_str(images.shape()));
    }
    NoGradGuard no_grad;
    const Tensor f = avg_pool2d(images, static_cast<int>(images.dim(2) / 8));
    return {f.values().begin(), f.values().end()};
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& id, std::int64_t channels) {
    if (id == "randconv" || id.rfind("randconv-", 0) == 0) return std::make_unique<RandomConvExtractor>(channels);
    if (id == "pixels8") return std::make_unique<DownsampleExtractor>(channels);
    throw ConfigError("unknown feature extractor '" + id + "' (expected randconv or pixels8)");
}

std::string MetricReport::tsv_header() const {
    return "metric\tvalue\tstddev\ttrials\tcount_real\tcount_generated\textractor\tconfig_hash";
}

std::string MetricReport::to_tsv() const {
    std::ostringstream os;
    os << std::setprecision(10) << metric << '\t' << value << '\t' << stddev << '\t' << trials << '\t' << count_real << '\t'
       << count_generated << '\t' << (extractor.empty() ? "-" : extractor) << '\t' << (config_hash.empty() ? "-" : config_hash);
    return os.str();
}

std::string MetricReport::to_text() const {
    std::ostringstream os;
    os << std::setprecision(10) << "metric: " << metric << "\nvalue: " << value << "\nstddev: " << stddev << "\ntrials: " << trials
       << "\ncount_real: " << count_real << "\ncount_generated: " << count_generated << "\nextractor: " << (extractor.empty() ? "-" : extractor)
       << "\nconfig_hash: " << (config_hash.empty() ? "-" : config_hash) << '\n';
    return os.str();
}

MetricReport fid(const Tensor& real, const Tensor& generated, const FeatureExtractor& extractor) {
    const std::int64_t nr = real.rank() > 0 ? real.dim(0) : 0;
    const std::int64_t ng = generated.rank() > 0 ? generated.dim(0) : 0;
    if (nr < 2 || ng < 2) throw DomainError("fid: each set needs at least 2 images");
    const std::int64_t d = extractor.dim();
    if (std::min(nr, ng) < d / 4) {
        warn("fid: " + std::to_string(std::min(nr, ng)) + " samples for " + std::to_string(d) + " features, covariance is ill-conditioned");
    }
    const GaussianStats r = gaussian_stats(extractor.extract(real), nr, d);
    const GaussianStats g = gaussian_stats(extractor.extract(generated), ng, d);
    MetricReport report;
    report.metric = "fid";
    report.value = frechet_distance(r, g);
    report.count_real = nr;
    report.count_generated = ng;
    report.extractor = extractor.id();
    return report;
}

double index_code_mi(const Tensor& mean, const Tensor& logvar, const Tensor& z) {
    if (mean.rank() != 2 || mean.shape() != logvar.shape() || mean.shape() != z.shape()) {
        throw ShapeError("index_code_mi: mean, logvar and z must share an [n,d] shape");
    }
    const std::int64_t n = mean.dim(0), d = mean.dim(1);
    if (n == 0) throw DomainError("index_code_mi: empty dataset");
    const auto mu = mean.values(), lv = logvar.values(), zv = z.values();
    // Per-datum precisions and normalizers, reused for every z_i.
    std::vector<double> inv_var(mu.size());
    std::vector<double> norm(static_cast<std::size_t>(n), 0.0);
    const double log2pi = std::log(2.0 * M_PI);
    for (std::int64_t j = 0; j < n; ++j) {
        double c = 0.0;
        for (std::int64_t k = 0; k < d; ++k) {
            const auto i = static_cast<std::size_t>(j * d + k);
            inv_var[i] = std::exp(-static_cast<double>(lv[i]));
            c += log2pi + lv[i];
        }
        norm[static_cast<std::size_t>(j)] = -0.5 * c;
    }
    std::vector<double> logq(static_cast<std::size_t>(n));
    double total = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const float* zi = zv.data() + i * d;
        for (std::int64_t j = 0; j < n; ++j) {
            double q = 0.0;
            for (std::int64_t k = 0; k < d; ++k) {
                const auto jk = static_cast<std::size_t>(j * d + k);
                const double delta = static_cast<double>(zi[k]) - mu[jk];
                q += delta * delta * inv_var[jk];
            }
            logq[static_cast<std::size_t>(j)] = norm[static_cast<std::size_t>(j)] - 0.5 * q;
        }
        const double m = *std::max_element(logq.begin(), logq.end());
        double s = 0.0;
        for (double v : logq) s += std::exp(v - m);
        const double log_marginal = m + std::log(s) - std::log(static_cast<double>(n));
        total += logq[static_cast<std::size_t>(i)] - log_marginal;
    }
    return total / static_cast<double>(n);
}

double index_code_mi(VaeModel& model, const Tensor& data, Rng& rng, std::int64_t max_items) {
    if (data.rank() != 4 || data.dim(0) == 0) throw DomainError("index_code_mi: empty dataset");
    Tensor items = data;
    if (max_items > 0 && data.dim(0) > max_items) {
        std::vector<std::int64_t> order(static_cast<std::size_t>(data.dim(0)));
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
        order.resize(static_cast<std::size_t>(max_items));
        std::sort(order.begin(), order.end());
        std::vector<Tensor> picked;
        for (auto i : order) picked.push_back(narrow(data, 0, i, 1));
        items = concat(picked, 0);
    }
    NoGradGuard no_grad;
    const std::int64_t n = items.dim(0);
    std::vector<Tensor> means, logvars;
    for (std::int64_t s = 0; s < n; s += 100) {
        const auto q = model.encode(narrow(items, 0, s, std::min<std::int64_t>(100, n - s)), Mode::eval);
        means.push_back(q.mean);
        logvars.push_back(q.logvar);
    }
    GaussianPosterior q{concat(means, 0), concat(logvars, 0)};
    const Tensor z = reparameterize(q, rng);
    return index_code_mi(q.mean, q.logvar, z);
}

}  // namespace wvae
