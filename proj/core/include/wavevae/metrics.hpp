#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "wavevae/tensor.hpp"

namespace wvae {

class Rng;
class VaeModel;

// ---- spectrum ----------------------------------------------------------------

struct ComplexGrid {
    std::int64_t n = 0;
    std::vector<double> re;  // row-major n*n
    std::vector<double> im;

    std::complex<double> at(std::int64_t y, std::int64_t x) const {
        const auto i = static_cast<std::size_t>(y * n + x);
        return {re[i], im[i]};
    }
};

// Unnormalized forward DFT of a real n*n row-major grid. n must be a power of two.
ComplexGrid fft2(const std::vector<double>& grid, std::int64_t n);
// Moves the zero frequency to (n/2, n/2).
ComplexGrid fftshift(const ComplexGrid& g);

// ---- IQM -----------------------------------------------------------------------

// Fraction of spectral magnitudes strictly above max/divisor for one square
// grayscale grid.
double iqm_single(const std::vector<double>& gray, std::int64_t n, double divisor = 100.0);

// Grayscale grids from a [B,C,H,W] batch in [0,1]: luminance for 3 channels,
// center-cropped to the largest power-of-two square.
std::vector<std::vector<double>> luminance_grids(const Tensor& images, std::int64_t* extent);

// Mean per-image IQM of a [B,C,H,W] batch.
double iqm(const Tensor& images, double divisor = 100.0);

// ---- Frechet distance ---------------------------------------------------------

struct GaussianStats {
    std::int64_t dim = 0;
    std::int64_t count = 0;
    std::vector<double> mean;  // dim
    std::vector<double> cov;   // dim*dim, unbiased
};

// features: n rows of d values, row-major.
GaussianStats gaussian_stats(const std::vector<double>& features, std::int64_t n, std::int64_t d);

// Principal square root of a symmetric positive semidefinite d*d matrix.
// Negative eigenvalues from rounding are clamped to zero.
std::vector<double> matrix_sqrt_psd(const std::vector<double>& a, std::int64_t d);

double frechet_distance(const GaussianStats& r, const GaussianStats& g);

// Maps a [B,C,H,W] batch to B feature rows of dim() values.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::string id() const = 0;
    virtual std::int64_t dim() const = 0;
    virtual std::vector<double> extract(const Tensor& images) const = 0;
};

// Untrained two-layer convolutional projection with weights fixed by `seed`:
// conv3x3 C->8, relu, conv4x4/2 8->16, relu, mean pooled to 4x4 (D = 256).
class RandomConvExtractor : public FeatureExtractor {
public:
    explicit RandomConvExtractor(std::int64_t channels, std::uint64_t seed = 20240229);
    std::string id() const override;
    std::int64_t dim() const override { return 256; }
    std::vector<double> extract(const Tensor& images) const override;

private:
    std::int64_t channels_;
    std::uint64_t seed_;
    Tensor k1_, k2_;
};

// Raw pixels mean pooled to 8x8 per channel.
class DownsampleExtractor : public FeatureExtractor {
public:
    explicit DownsampleExtractor(std::int64_t channels) : channels_(channels) {}
    std::string id() const override { return "pixels8"; }
    std::int64_t dim() const override { return 64 * channels_; }
    std::vector<double> extract(const Tensor& images) const override;

private:
    std::int64_t channels_;
};

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& id, std::int64_t channels);

struct MetricReport {
    std::string metric;
    double value = 0.0;
    double stddev = 0.0;  // over trials, 0 for a single trial
    int trials = 1;
    std::int64_t count_real = 0;
    std::int64_t count_generated = 0;
    std::string extractor;
    std::string config_hash;

    std::string tsv_header() const;
    std::string to_tsv() const;
    std::string to_text() const;
};

MetricReport fid(const Tensor& real, const Tensor& generated, const FeatureExtractor& extractor);

// ---- index-code mutual information ---------------------------------------------

// Estimate from per-datum posteriors (mean, logvar: [n,d]) and one sample
// z_i ~ q(.|x_i) per datum ([n,d]).
double index_code_mi(const Tensor& mean, const Tensor& logvar, const Tensor& z);
// Encodes `data` in eval mode, draws z_i and evaluates the estimator. When
// max_items > 0 and the set is larger, a random subset of that size is used.
double index_code_mi(VaeModel& model, const Tensor& data, Rng& rng, std::int64_t max_items = 0);

}  // namespace wvae
