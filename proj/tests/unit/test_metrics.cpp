#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "wavevae/data.hpp"
#include "wavevae/error.hpp"
#include "wavevae/log.hpp"
#include "wavevae/metrics.hpp"

using namespace wvae;

TEST_CASE("fft2 of a constant and an impulse") {
    std::vector<double> c(64, 0.7);
    auto g = fft2(c, 8);
    CHECK(g.at(0, 0).real() == doctest::Approx(0.7 * 64));
    for (std::int64_t i = 1; i < 64; ++i) CHECK(std::abs(g.at(i / 8, i % 8)) < 1e-9);
    std::vector<double> imp(64, 0.0);
    imp[0] = 1.0;
    auto h = fft2(imp, 8);
    for (std::int64_t i = 0; i < 64; ++i) CHECK(std::abs(h.at(i / 8, i % 8)) == 1.0);
    CHECK_THROWS_AS(fft2(std::vector<double>(36, 0.0), 6), ShapeError);
}

TEST_CASE("fft2 matches the direct DFT") {
    Rng rng(1);
    for (std::int64_t n : {2, 4, 8, 16}) {
        std::vector<double> g(static_cast<std::size_t>(n * n));
        for (double& v : g) v = rng.uniform(-1, 1);
        auto ref = oracle::naive_dft2(g, n);
        auto got = fft2(g, n);
        double err = 0.0;
        for (std::int64_t i = 0; i < n * n; ++i) err = std::max(err, std::abs(ref[static_cast<std::size_t>(i)] - got.at(i / n, i % n)));
        CHECK(err < 1e-8);
    }
}

TEST_CASE("fftshift centers dc") {
    std::vector<double> c(16, 1.0);
    auto s = fftshift(fft2(c, 4));
    CHECK(s.at(2, 2).real() == 16.0);
}

TEST_CASE("iqm exact values") {
    CHECK(iqm_single(std::vector<double>(64 * 64, 0.4), 64) == 1.0 / 4096.0);
    std::vector<double> imp(64 * 64, 0.0);
    imp[100] = 1.0;
    CHECK(iqm_single(imp, 64) == 1.0);
}

TEST_CASE("batch iqm is the mean of per-image values") {
    Tensor two = Tensor::zeros({2, 1, 16, 16});
    auto v = two.mutable_values();
    for (int i = 0; i < 256; ++i) v[static_cast<std::size_t>(i)] = 0.5f;
    v[256 + 17] = 1.0f;
    const double a = 1.0 / 256.0, b = 1.0;
    CHECK(iqm(two) == doctest::Approx((a + b) / 2));
}

TEST_CASE("adding a high-frequency sinusoid raises iqm") {
    const int n = 32;
    std::vector<double> smooth(n * n), sharp(n * n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            smooth[static_cast<std::size_t>(y * n + x)] = 0.2 + 0.6 * x / (n - 1.0);
            sharp[static_cast<std::size_t>(y * n + x)] =
                smooth[static_cast<std::size_t>(y * n + x)] + 0.1 * std::sin(2 * std::numbers::pi * 11 * (x + 2 * y) / n);
        }
    CHECK(iqm_single(sharp, n) > iqm_single(smooth, n));
}

TEST_CASE("luminance and cropping") {
    Tensor rgb = Tensor::zeros({1, 3, 6, 10});
    auto v = rgb.mutable_values();
    for (std::size_t i = 0; i < 60; ++i) v[i] = 1.0f;  // red plane
    std::int64_t extent = 0;
    auto grids = luminance_grids(rgb, &extent);
    CHECK(extent == 4);
    CHECK(grids[0][0] == doctest::Approx(0.299));
    CHECK_THROWS_AS(luminance_grids(Tensor::zeros({1, 2, 4, 4}), &extent), ShapeError);
}

TEST_CASE("gaussian stats") {
    auto s = gaussian_stats({0.0, 2.0}, 2, 1);
    CHECK(s.mean[0] == 1.0);
    CHECK(s.cov[0] == 2.0);
    auto z = gaussian_stats({1, 2, 1, 2, 1, 2}, 3, 2);
    for (double c : z.cov) CHECK(c == 0.0);
    Rng rng(2);
    std::vector<double> f(40 * 3);
    for (double& v : f) v = rng.normal();
    auto r = gaussian_stats(f, 40, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(r.cov[static_cast<std::size_t>(i * 3 + j)] == r.cov[static_cast<std::size_t>(j * 3 + i)]);
}

TEST_CASE("matrix square root") {
    auto id = matrix_sqrt_psd({1, 0, 0, 1}, 2);
    CHECK(id[0] == doctest::Approx(1));
    CHECK(id[1] == doctest::Approx(0));
    auto d = matrix_sqrt_psd({4, 0, 0, 9}, 2);
    CHECK(d[0] == doctest::Approx(2));
    CHECK(d[3] == doctest::Approx(3));

    Rng rng(3);
    const int n = 6;
    std::vector<double> m(n * n), a(n * n, 0.0);
    for (double& v : m) v = rng.normal();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) a[static_cast<std::size_t>(i * n + j)] += m[static_cast<std::size_t>(i * n + k)] * m[static_cast<std::size_t>(j * n + k)];
    auto x = matrix_sqrt_psd(a, n);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double xx = 0.0;
            for (int k = 0; k < n; ++k) xx += x[static_cast<std::size_t>(i * n + k)] * x[static_cast<std::size_t>(k * n + j)];
            const double r = xx - a[static_cast<std::size_t>(i * n + j)];
            num += r * r;
            den += a[static_cast<std::size_t>(i * n + j)] * a[static_cast<std::size_t>(i * n + j)];
        }
    CHECK(std::sqrt(num / den) < 1e-8);
    CHECK_THROWS_AS(matrix_sqrt_psd({1, 2, 0, 1}, 2), DomainError);
}

TEST_CASE("frechet distance closed forms") {
    auto stats = [](double mu, double var) {
        GaussianStats s;
        s.dim = 1;
        s.count = 10;
        s.mean = {mu};
        s.cov = {var};
        return s;
    };
    CHECK(frechet_distance(stats(0, 1), stats(0, 1)) == doctest::Approx(0.0));
    CHECK(frechet_distance(stats(0, 1), stats(1, 1)) == doctest::Approx(1.0));
    CHECK(frechet_distance(stats(0, 1), stats(0, 4)) == doctest::Approx(1.0));
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        const double m1 = rng.normal(), m2 = rng.normal(), s1 = rng.uniform(0.1, 3), s2 = rng.uniform(0.1, 3);
        const double expect = (m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2);
        CHECK(std::fabs(frechet_distance(stats(m1, s1 * s1), stats(m2, s2 * s2)) - expect) < 1e-9);
    }
}

TEST_CASE("fid properties") {
    std::vector<std::string> warnings;
    auto prev = set_warning_handler([&](const std::string& w) { warnings.push_back(w); });
    auto ds = synth(parse_synth_spec("count=96,extent=16,seed=4"));
    RandomConvExtractor ex(1);
    CHECK(ex.id() == "randconv-s20240229-d256");
    CHECK(fid(ds.images, ds.images, ex).value < 1e-6);
    CHECK(fid(Tensor::zeros({16, 1, 16, 16}), Tensor::ones({16, 1, 16, 16}), ex).value > 0.0);

    Rng rng(5);
    double last = -1.0;
    for (float sigma : {0.02f, 0.08f, 0.2f}) {
        Tensor noisy = clamp(ds.images + mul(sample_normal(rng, ds.images.shape()), sigma), 0.0f, 1.0f);
        const double v = fid(ds.images, noisy, ex).value;
        CHECK(v > last);
        last = v;
    }
    CHECK_THROWS_AS(fid(ds.images, narrow(ds.images, 0, 0, 1), ex), DomainError);
    set_warning_handler(prev);
    CHECK_FALSE(warnings.empty());  // 96 items for 256 features
}

TEST_CASE("extractors") {
    auto a = make_extractor("randconv", 3);
    CHECK(a->dim() == 256);
    auto b = make_extractor("pixels8", 3);
    CHECK(b->dim() == 192);
    Rng rng(6);
    Tensor x = oracle::random_tensor(rng, {3, 3, 16, 16}, 0, 1);
    CHECK(a->extract(x) == a->extract(x));
    CHECK(b->extract(x).size() == 3 * 192);
    CHECK_THROWS_AS(make_extractor("inception", 3), ConfigError);
}

TEST_CASE("index-code mutual information constructions") {
    Rng rng(7);
    const int n = 50, d = 3;
    // Collapsed: every posterior is the same.
    Tensor mean = Tensor::zeros({n, d}), logvar = Tensor::zeros({n, d});
    Tensor z = sample_normal(rng, {n, d});
    CHECK(std::fabs(index_code_mi(mean, logvar, z)) < 1e-6);

    // Near-delta posteriors at +-10 for two data points.
    Tensor m2({2, 1}, {10, -10});
    Tensor lv2 = Tensor::full({2, 1}, std::log(1e-4f));
    Tensor z2({2, 1}, {10.005f, -9.99f});
    CHECK(index_code_mi(m2, lv2, z2) == doctest::Approx(std::log(2.0)).epsilon(0.01 / std::log(2.0)));

    // Bound log n holds for random posteriors, including extreme ones.
    for (int t = 0; t < 10; ++t) {
        Tensor m = mul(sample_normal(rng, {n, d}), 20.0f);
        Tensor lv = oracle::random_tensor(rng, {n, d}, -12, 2);
        Tensor zz = m + exp(mul(lv, 0.5f)) * sample_normal(rng, {n, d});
        CHECK(index_code_mi(m, lv, zz) <= std::log(static_cast<double>(n)) + 1e-6);
    }
}

TEST_CASE("metric report formatting") {
    MetricReport r;
    r.metric = "fid_generated";
    r.value = 1.5;
    r.trials = 5;
    r.stddev = 0.25;
    CHECK(r.to_tsv().find("fid_generated") == 0);
    CHECK(r.tsv_header().find("stddev") != std::string::npos);
    CHECK(r.to_text().find("0.25") != std::string::npos);
}
