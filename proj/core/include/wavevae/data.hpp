#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wavevae/rng.hpp"
#include "wavevae/tensor.hpp"

namespace wvae {

// N images of identical shape, values in [0,1].
struct ImageDataset {
    Tensor images;       // [N,C,H,W]
    std::string source;  // folder, packed file or synth spec it came from

    std::int64_t count() const { return images.defined() ? images.dim(0) : 0; }
    std::int64_t channels() const { return images.dim(1); }
    std::int64_t extent() const { return images.dim(2); }
    Shape item_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }
};

// ---- PGM / PPM (binary, maxval 255) ----------------------------------------

// [C,H,W] in [0,1]; C = 1 for P5, 3 for P6.
Tensor read_pnm(const std::filesystem::path& path);
// Values are clamped to [0,1] and rounded to 8 bits.
void write_pnm(const std::filesystem::path& path, const Tensor& image);

// Every .pgm/.ppm file in lexicographic filename order.
ImageDataset load_folder(const std::filesystem::path& dir);
// Writes <stem>_00000.pgm (or .ppm) ...; returns the paths written.
std::vector<std::filesystem::path> save_folder(const ImageDataset& ds, const std::filesystem::path& dir,
                                               const std::string& stem = "img");

// Packed form: one WGT1 tensor plus "<file>.manifest" (count, shape, hash).
void save_packed(const ImageDataset& ds, const std::filesystem::path& file);
ImageDataset load_packed(const std::filesystem::path& file);

// Content hash of shape and values; 16 hex digits, byte-order independent.
std::string fingerprint(const Tensor& t);

// ---- synthetic corpus ----------------------------------------------------------

struct SynthSpec {
    std::int64_t count = 512;
    std::int64_t extent = 32;
    std::int64_t channels = 1;
    // Relative frequency of each recipe; each image draws one recipe.
    double gratings = 1.0;
    double blobs = 1.0;
    double mosaics = 1.0;
    double dc = 0.0;
    // Grating frequency as a fraction of Nyquist, with multiplicative jitter.
    double frequency = 0.25;
    double frequency_jitter = 0.5;
    double orientation = -1.0;  // radians; negative draws a random orientation per component
    int components = 4;         // sinusoids summed per grating image
    double noise = 0.0;         // std of additive Gaussian noise before clamping
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

// "count=512,extent=32,gratings=1,..." (any subset of fields).
SynthSpec parse_synth_spec(const std::string& text);
std::string to_string(const SynthSpec& spec);

ImageDataset synth(const SynthSpec& spec);

// Folder, packed file, or "synth:<spec>".
ImageDataset load_dataset(const std::string& ref);

// ---- batching -----------------------------------------------------------------

// One epoch of [B,C,H,W] batches. Every item appears at most once; the short
// tail batch is dropped so batch statistics always see B items.
class Batches {
public:
    Batches(const ImageDataset& ds, std::int64_t batch_size, bool shuffle, Rng& rng, bool hflip = false);

    std::int64_t size() const { return static_cast<std::int64_t>(order_.size()) / batch_; }
    bool next(Tensor& out);
    const std::vector<std::int64_t>& order() const { return order_; }

private:
    const ImageDataset* ds_;
    std::int64_t batch_;
    std::int64_t cursor_ = 0;
    std::vector<std::int64_t> order_;
    std::vector<bool> flip_;
};

// Tiles [N,C,H,W] into a [C, rows*(H+pad)-pad, cols*(W+pad)-pad] image.
Tensor make_grid(const Tensor& images, std::int64_t cols, std::int64_t pad = 1, float fill = 1.0f);

}  // namespace wvae
