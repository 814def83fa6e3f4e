#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "wavevae/data.hpp"
#include "wavevae/error.hpp"
#include "wavevae/metrics.hpp"

using namespace wvae;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("wavevae_data_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream os(p, std::ios::binary);
    os << bytes;
}
}  // namespace

TEST_CASE("P5 decoding with comments") {
    auto dir = scratch("p5");
    write_bytes(dir / "a.pgm", std::string("P5\n# made by hand\n2 1\n255\n") + '\xff' + '\x00');
    Tensor t = read_pnm(dir / "a.pgm");
    CHECK(t.shape() == Shape{1, 1, 2});
    CHECK(t.values()[0] == 1.0f);
    CHECK(t.values()[1] == 0.0f);
}

TEST_CASE("malformed files") {
    auto dir = scratch("bad");
    write_bytes(dir / "maxval.pgm", "P5 1 1 65535\n\x01\x01");
    CHECK_THROWS_AS(read_pnm(dir / "maxval.pgm"), FormatError);
    write_bytes(dir / "short.pgm", "P5 4 4 255\nab");
    CHECK_THROWS_AS(read_pnm(dir / "short.pgm"), FormatError);
    write_bytes(dir / "ascii.pgm", "P2 1 1 255\n7");
    CHECK_THROWS_AS(read_pnm(dir / "ascii.pgm"), FormatError);
}

TEST_CASE("P6 round trip through a folder is exact") {
    auto dir = scratch("p6");
    Tensor imgs({2, 3, 4, 5});
    auto v = imgs.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>((i * 37) % 256) / 255.0f;
    ImageDataset ds{imgs, "mem"};
    auto paths = save_folder(ds, dir);
    CHECK(paths.size() == 2);
    CHECK(paths[0].extension() == ".ppm");
    auto back = load_folder(dir);
    CHECK(oracle::max_abs_diff(back.images, imgs) == 0.0);
}

TEST_CASE("folder errors") {
    CHECK_THROWS_AS(load_folder(scratch("empty")), FormatError);
    auto dir = scratch("mixed");
    write_pnm(dir / "a.pgm", Tensor::zeros({1, 4, 4}));
    write_pnm(dir / "b.pgm", Tensor::zeros({1, 8, 8}));
    CHECK_THROWS_AS(load_folder(dir), ShapeError);
}

TEST_CASE("folder order is lexicographic") {
    auto dir = scratch("order");
    write_pnm(dir / "b.pgm", Tensor::ones({1, 2, 2}));
    write_pnm(dir / "a.pgm", Tensor::zeros({1, 2, 2}));
    auto ds = load_folder(dir);
    CHECK(ds.images.values()[0] == 0.0f);
    CHECK(ds.images.values()[4] == 1.0f);
}

TEST_CASE("packed datasets verify their manifest") {
    auto dir = scratch("packed");
    auto ds = synth(parse_synth_spec("count=8,extent=8,seed=1"));
    save_packed(ds, dir / "d.wgt");
    auto back = load_packed(dir / "d.wgt");
    CHECK(fingerprint(back.images) == fingerprint(ds.images));
    CHECK(oracle::max_abs_diff(load_dataset((dir / "d.wgt").string()).images, ds.images) == 0.0);
    {
        std::fstream f(dir / "d.wgt", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-2, std::ios::end);
        f.put('\x3e');
    }
    CHECK_THROWS_AS(load_packed(dir / "d.wgt"), FormatError);
}

TEST_CASE("fingerprint is sensitive to shape and values") {
    CHECK(fingerprint(Tensor::zeros({2, 3})) != fingerprint(Tensor::zeros({3, 2})));
    CHECK(fingerprint(Tensor::zeros({4})) != fingerprint(Tensor::vector({0, 0, 0, 1e-7f})));
    CHECK(fingerprint(Tensor::ones({4})).size() == 16);
}

TEST_CASE("synth recipes") {
    auto dc = synth(parse_synth_spec("count=6,extent=16,gratings=0,blobs=0,mosaics=0,dc=1"));
    for (std::int64_t i = 0; i < 6; ++i) {
        const float first = dc.images.at({i, 0, 0, 0});
        for (std::int64_t p = 0; p < 256; ++p) CHECK(dc.images.values()[static_cast<std::size_t>(i * 256 + p)] == first);
    }
    auto a = synth(parse_synth_spec("count=16,extent=32,seed=4"));
    auto b = synth(parse_synth_spec("count=16,extent=32,seed=4"));
    CHECK(fingerprint(a.images) == fingerprint(b.images));
    for (float v : a.images.values()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    auto rgb = synth(parse_synth_spec("count=2,extent=16,channels=3"));
    CHECK(rgb.images.shape() == Shape{2, 3, 16, 16});
}

TEST_CASE("higher grating frequency gives higher iqm") {
    auto grating = [](double f) {
        SynthSpec s = parse_synth_spec("count=64,extent=32,gratings=1,blobs=0,mosaics=0,seed=5");
        s.frequency = f;
        return iqm(synth(s).images);
    };
    CHECK(grating(0.25) > grating(1.0 / 16));
}

TEST_CASE("synth spec parsing") {
    auto s = parse_synth_spec("count=10,noise=0.1,seed=7");
    CHECK(s.count == 10);
    CHECK(s.noise == doctest::Approx(0.1));
    CHECK(parse_synth_spec(to_string(s)).seed == 7);
    CHECK_THROWS_AS(parse_synth_spec("colour=3"), ConfigError);
    CHECK_THROWS_AS(parse_synth_spec("extent=30"), ConfigError);
}

TEST_CASE("batching") {
    auto ds = synth(parse_synth_spec("count=512,extent=8"));
    Rng rng(1);
    Batches it(ds, 100, false, rng);
    CHECK(it.size() == 5);
    Tensor b;
    int n = 0;
    while (it.next(b)) {
        CHECK(b.shape() == Shape{100, 1, 8, 8});
        ++n;
    }
    CHECK(n == 5);
    for (std::int64_t i = 0; i < 512; ++i) CHECK(it.order()[static_cast<std::size_t>(i)] == i);

    Rng r1(9), r2(9);
    Batches s1(ds, 100, true, r1), s2(ds, 100, true, r2);
    CHECK(s1.order() == s2.order());
    auto sorted = s1.order();
    std::sort(sorted.begin(), sorted.end());
    for (std::int64_t i = 0; i < 512; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
    CHECK_THROWS_AS(Batches(ds, 1000, false, rng), ConfigError);
}

TEST_CASE("grid layout") {
    Tensor g = make_grid(Tensor::zeros({5, 1, 4, 4}), 3);
    CHECK(g.shape() == Shape{1, 9, 14});
    CHECK(g.at({0, 4, 0}) == 1.0f);  // padding row
}
