#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wavevae/gan.hpp"
#include "wavevae/metrics.hpp"
#include "wavevae/models.hpp"
#include "wavevae_cli/checkpoint.hpp"
#include "wavevae_cli/config.hpp"

namespace wvae::cli {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// Progress messages; commands stay silent when it is empty.
using Logger = std::function<void(const std::string&)>;

// Exclusive marker file in an output directory, removed on destruction.
class OutputLock {
public:
    explicit OutputLock(const std::filesystem::path& dir);
    ~OutputLock();
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    std::filesystem::path path_;
};

// A trained model rebuilt from a checkpoint, VAE or GAN.
struct LoadedModel {
    RunConfig config;
    std::string config_hash;
    int epoch = 0;
    std::int64_t channels = 0;
    std::int64_t extent = 0;
    std::unique_ptr<VaeModel> vae;
    std::unique_ptr<GanModel> gan;

    bool has_encoder() const { return vae != nullptr; }
    std::int64_t latent() const { return config.latent; }
    // Image-space decode of a latent batch without recording.
    Tensor decode(const Tensor& z);
    Tensor generate(Rng& rng, std::int64_t n);
    Tensor reconstruct(const Tensor& x, Rng& rng);
    ParamStore& params();
};

LoadedModel load_model(const std::filesystem::path& checkpoint);

// ---- train ----------------------------------------------------------------------

struct TrainOptions {
    RunConfig config;
    std::string resume;  // checkpoint to continue from
    bool force = false;  // accept a config-hash mismatch on resume
    Logger log;
};

struct TrainSummary {
    int first_epoch = 1;
    int last_epoch = 0;
    std::filesystem::path checkpoint;
    std::filesystem::path loss_log;
    std::vector<double> epoch_loss;  // total negative ELBO (or discriminator loss) per epoch run
};

// Writes <out>/config.txt, <out>/loss_log.tsv and <out>/checkpoint.wgc. A
// non-finite loss raises NumericError and leaves the last checkpoint intact.
TrainSummary cmd_train(const TrainOptions& options);

// ---- generate / reconstruct / traverse -------------------------------------------

struct GenerateOptions {
    std::filesystem::path checkpoint;
    std::int64_t n = 64;
    std::uint64_t seed = 0;
    std::filesystem::path out = "samples";
};
// n PGM/PPM files plus grid.pgm/ppm; returns every path written.
std::vector<std::filesystem::path> cmd_generate(const GenerateOptions& options);

struct ReconstructOptions {
    std::filesystem::path checkpoint;
    std::string dataset;  // empty = the checkpoint's dataset
    std::int64_t n = 16;
    std::uint64_t seed = 0;
    std::filesystem::path out = "reconstructions";
};
std::vector<std::filesystem::path> cmd_reconstruct(const ReconstructOptions& options);

struct TraverseOptions {
    std::filesystem::path checkpoint;
    std::filesystem::path image;  // empty = traverse around a prior sample
    std::string dims = "all";     // "all" or comma-separated indices
    float lo = -3.0f;
    float hi = 3.0f;
    int steps = 10;
    std::uint64_t seed = 0;
    std::filesystem::path out = "traversal.pgm";
    Logger log;
};
// One grid row per dimension, `steps` columns. Returns the grid tensor [C,H',W'].
Tensor cmd_traverse(const TraverseOptions& options);

// ---- eval -----------------------------------------------------------------------

struct EvalOptions {
    std::filesystem::path checkpoint;
    std::string dataset;  // empty = the checkpoint's dataset
    std::vector<std::string> metrics = {"iqm", "fid"};  // iqm, fid, mi
    int trials = 1;
    std::int64_t n = 256;
    std::int64_t mi_items = 2048;  // subsample bound for mi
    std::string extractor;         // empty = the checkpoint's extractor
    double iqm_divisor = 100.0;
    std::uint64_t seed = 0;
    std::filesystem::path out;  // report.tsv / report.txt when set
};

// Trials re-sample generated and reconstructed sets from the same model;
// the model is not retrained.
std::vector<MetricReport> cmd_eval(const EvalOptions& options);

// ---- wavelet / synth ------------------------------------------------------------

struct WaveletOptions {
    std::filesystem::path input;  // image (forward) or pyramid manifest (inverse)
    int levels = 3;
    bool inverse = false;
    std::filesystem::path out = "wavelet";
};
// Forward: <stem>_layout image plus the pyramid files. Inverse: the
// reconstructed image as PGM/PPM and WGT1. Returns the paths written.
std::vector<std::filesystem::path> cmd_wavelet(const WaveletOptions& options);

struct SynthOptions {
    std::string spec;
    std::optional<std::uint64_t> spec_seed;
    std::filesystem::path out = "synth.wgt";  // *.wgt = packed, otherwise a folder
};
ImageDataset cmd_synth(const SynthOptions& options);

// ---- process plumbing -------------------------------------------------------------

// Runs `body` and maps library errors onto exit codes, printing the message.
int run_guarded(const std::function<void()>& body);

// Keeps freed training buffers in the heap instead of returning them to the OS.
void tune_allocator();

}  // namespace wvae::cli
