#include "wavevae_cli/commands.hpp"

#include <fcntl.h>
#include <malloc.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "wavevae/data.hpp"
#include "wavevae/error.hpp"
#include "wavevae/log.hpp"
#include "wavevae/tensor_io.hpp"
#include "wavevae/wavelet.hpp"

namespace wvae::cli {

namespace fs = std::filesystem;

namespace {

void say(const Logger& log, const std::string& m) {
    if (log) log(m);
}

std::string pnm_ext(std::int64_t channels) { return channels == 1 ? ".pgm" : ".ppm"; }

std::string numbered(const std::string& stem, std::int64_t i, const std::string& ext) {
    std::ostringstream os;
    os << stem << '_' << std::setw(5) << std::setfill('0') << i << ext;
    return os.str();
}

Tensor clamp01(const Tensor& x) {
    std::vector<float> v(x.values().begin(), x.values().end());
    for (float& p : v) p = std::clamp(p, 0.0f, 1.0f);
    return Tensor(x.shape(), std::move(v));
}

Tensor item(const Tensor& batch, std::int64_t i) {
    return reshape(narrow(batch, 0, i, 1), {batch.dim(1), batch.dim(2), batch.dim(3)});
}

std::int64_t grid_cols(std::int64_t n) {
    auto c = static_cast<std::int64_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    return std::max<std::int64_t>(c, 1);
}

// Runs f over chunks of at most 100 rows and concatenates the results.
template <class F>
Tensor chunked(std::int64_t n, F&& f) {
    std::vector<Tensor> parts;
    for (std::int64_t s = 0; s < n; s += 100) parts.push_back(f(s, std::min<std::int64_t>(100, n - s)));
    return parts.size() == 1 ? parts.front() : concat(parts, 0);
}

std::string fixed(double v) {
    std::ostringstream os;
    os << std::setprecision(8) << v;
    return os.str();
}

constexpr std::uint64_t kStreamSalt = 0x9e3779b97f4a7c15ull;

Checkpoint base_checkpoint(const RunConfig& cfg, const ImageDataset& ds, int epoch, std::int64_t step, const Rng& rng) {
    Checkpoint c;
    c.config_text = cfg.to_text(false);
    c.config_hash = cfg.hash();
    c.epoch = epoch;
    c.step = step;
    c.rng_state = rng.state();
    c.counters.emplace_back("data.channels", ds.channels());
    c.counters.emplace_back("data.extent", ds.extent());
    return c;
}

Checkpoint checked_resume(const std::string& path, const RunConfig& cfg, bool force, const Logger& log) {
    Checkpoint c = load_checkpoint(path);
    if (c.config_hash != cfg.hash()) {
        if (!force) {
            throw ConfigError("checkpoint " + path + " was written by a different configuration (hash " + c.config_hash + " vs " +
                              cfg.hash() + "); pass --force to resume anyway");
        }
        warn("resuming " + path + " under a different configuration hash");
    }
    say(log, "resuming from epoch " + std::to_string(c.epoch));
    return c;
}

// Keeps the header and the rows of epochs <= last_epoch.
void truncate_log(const fs::path& path, int last_epoch) {
    std::ifstream is(path);
    if (!is) return;
    std::string line, kept;
    bool header = true;
    while (std::getline(is, line)) {
        if (header || std::stoi(line.substr(0, line.find('\t'))) <= last_epoch) kept += line + '\n';
        header = false;
    }
    is.close();
    std::ofstream(path, std::ios::trunc) << kept;
}

struct RunFiles {
    fs::path dir, config, log, checkpoint;
};

RunFiles prepare_run(const RunConfig& cfg, bool resuming, const std::string& header) {
    RunFiles f{cfg.out, fs::path(cfg.out) / "config.txt", fs::path(cfg.out) / "loss_log.tsv", fs::path(cfg.out) / "checkpoint.wgc"};
    fs::create_directories(f.dir);
    std::ofstream(f.config, std::ios::trunc) << cfg.to_text();
    if (!resuming || !fs::exists(f.log)) std::ofstream(f.log, std::ios::trunc) << header << '\n';
    return f;
}

void append_row(const fs::path& log, const std::string& row) {
    std::ofstream os(log, std::ios::app);
    os << row << '\n';
    if (!os) throw FormatError("cannot append to " + log.string());
}

TrainSummary train_vae(const TrainOptions& o, const ImageDataset& ds) {
    const RunConfig& cfg = o.config;
    VaeModel model(cfg.model_config(ds.channels(), ds.extent()), cfg.seed);
    Adam adam(model.params().trainable(), AdamConfig{cfg.lr});
    Rng rng(cfg.seed ^ kStreamSalt);
    int start = 1;
    std::int64_t step = 0;
    if (!o.resume.empty()) {
        const Checkpoint c = checked_resume(o.resume, cfg, o.force, o.log);
        restore(c, model.params());
        restore(c, adam, "adam");
        rng.restore(c.rng_state);
        start = c.epoch + 1;
        step = c.step;
    }
    const RunFiles files = prepare_run(cfg, !o.resume.empty(), "epoch\tlr\ttotal\tll_recon\tdetail_recon\tkl");
    if (!o.resume.empty()) truncate_log(files.log, start - 1);
    TrainSummary summary{start, start - 1, files.checkpoint, files.log, {}};
    const LrSchedule schedule{cfg.lr, cfg.lr_halving};
    for (int epoch = start; epoch <= cfg.epochs; ++epoch) {
        adam.set_lr(schedule.rate(epoch - 1));
        Batches batches(ds, cfg.batch_size, cfg.shuffle, rng, cfg.hflip);
        double total = 0, ll = 0, detail = 0, kl = 0;
        std::int64_t count = 0;
        Tensor x;
        try {
            while (batches.next(x)) {
                const ElboBreakdown e = model.loss(x, rng);
                backward(e.total);
                adam.step();
                total += e.total_value();
                ll += e.ll_recon;
                detail += e.detail_recon;
                kl += e.kl;
                ++count;
                ++step;
            }
        } catch (const NumericError& err) {
            clear_tape();
            throw NumericError("epoch " + std::to_string(epoch) + ": " + err.what() + "; last good checkpoint: " +
                               (fs::exists(files.checkpoint) ? files.checkpoint.string() : "none"));
        }
        const double n = static_cast<double>(count);
        append_row(files.log, std::to_string(epoch) + '\t' + fixed(adam.lr()) + '\t' + fixed(total / n) + '\t' + fixed(ll / n) + '\t' +
                                  fixed(detail / n) + '\t' + fixed(kl / n));
        summary.epoch_loss.push_back(total / n);
        summary.last_epoch = epoch;
        say(o.log, "epoch " + std::to_string(epoch) + " loss " + fixed(total / n));
        if (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs) {
            Checkpoint c = base_checkpoint(cfg, ds, epoch, step, rng);
            capture(c, model.params());
            capture(c, adam, "adam");
            save_checkpoint(files.checkpoint, c);
        }
    }
    return summary;
}

// Checks that need the dataset, run before anything is written.
void check_fits(const RunConfig& cfg, const ImageDataset& ds) {
    if (cfg.batch_size > ds.count()) {
        throw ConfigError("batch_size " + std::to_string(cfg.batch_size) + " exceeds the dataset's " + std::to_string(ds.count()) + " images");
    }
    if (!cfg.is_gan()) return;
    const int critic = cfg.gan_config().effective_critic_steps();
    const std::int64_t per_epoch = ds.count() / cfg.batch_size;
    if (per_epoch < critic) {
        throw ConfigError("gan: " + std::to_string(per_epoch) + " batches per epoch is fewer than the " + std::to_string(critic) +
                          " critic steps of one generator step; lower batch_size");
    }
}

TrainSummary train_gan_run(const TrainOptions& o, const ImageDataset& ds) {
    const RunConfig& cfg = o.config;
    GanModel model(cfg.model_config(ds.channels(), ds.extent()), cfg.gan_config(), cfg.seed);
    GanTrainer trainer(model);
    Rng rng(cfg.seed ^ kStreamSalt);
    int start = 1;
    std::int64_t step = 0;
    if (!o.resume.empty()) {
        const Checkpoint c = checked_resume(o.resume, cfg, o.force, o.log);
        restore(c, model.params());
        restore(c, trainer.generator_optimizer(), "adam_g");
        restore(c, trainer.discriminator_optimizer(), "adam_d");
        rng.restore(c.rng_state);
        start = c.epoch + 1;
        step = c.step;
        trainer.set_steps_done(step);
    }
    const RunFiles files = prepare_run(cfg, !o.resume.empty(), "epoch\tlr\td_loss\tg_loss\tfid");
    if (!o.resume.empty()) truncate_log(files.log, start - 1);
    TrainSummary summary{start, start - 1, files.checkpoint, files.log, {}};
    const LrSchedule g_schedule{cfg.lr, cfg.lr_halving};
    const LrSchedule d_schedule{cfg.lr_discriminator, cfg.lr_halving};
    const auto extractor = make_extractor(cfg.extractor, ds.channels());
    const std::int64_t eval_n = std::min<std::int64_t>(256, ds.count());
    const int critic = cfg.gan_config().effective_critic_steps();
    for (int epoch = start; epoch <= cfg.epochs; ++epoch) {
        trainer.generator_optimizer().set_lr(g_schedule.rate(epoch - 1));
        trainer.discriminator_optimizer().set_lr(d_schedule.rate(epoch - 1));
        Batches batches(ds, cfg.batch_size, cfg.shuffle, rng, cfg.hflip);
        Tensor x;
        auto next_real = [&]() -> Tensor {
            batches.next(x);
            return x;
        };
        double d_sum = 0, g_sum = 0;
        std::int64_t count = 0;
        try {
            for (std::int64_t left = batches.size(); left >= critic; left -= critic) {
                const GanStepStats s = trainer.step(next_real, rng);
                d_sum += s.d_loss;
                g_sum += s.g_loss;
                ++count;
            }
        } catch (const NumericError& err) {
            throw NumericError("epoch " + std::to_string(epoch) + ": " + err.what() + "; last good checkpoint: " +
                               (fs::exists(files.checkpoint) ? files.checkpoint.string() : "none"));
        }
        step = trainer.steps_done();
        std::string fid_cell = "-";
        if (cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
            Rng eval_rng(cfg.seed + static_cast<std::uint64_t>(epoch));
            const Tensor fake = chunked(eval_n, [&](std::int64_t, std::int64_t len) { return model.sample(eval_rng, len); });
            fid_cell = fixed(fid(narrow(ds.images, 0, 0, eval_n), fake, *extractor).value);
            std::ostringstream name;
            name << "samples_e" << std::setw(4) << std::setfill('0') << epoch << pnm_ext(ds.channels());
            write_pnm(files.dir / name.str(), make_grid(clamp01(narrow(fake, 0, 0, std::min<std::int64_t>(64, eval_n))), 8));
        }
        const double n = static_cast<double>(count);
        append_row(files.log, std::to_string(epoch) + '\t' + fixed(trainer.generator_optimizer().lr()) + '\t' + fixed(d_sum / n) + '\t' +
                                  fixed(g_sum / n) + '\t' + fid_cell);
        summary.epoch_loss.push_back(d_sum / n);
        summary.last_epoch = epoch;
        say(o.log, "epoch " + std::to_string(epoch) + " d " + fixed(d_sum / n) + " g " + fixed(g_sum / n));
        if (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs) {
            Checkpoint c = base_checkpoint(cfg, ds, epoch, step, rng);
            capture(c, model.params());
            capture(c, trainer.generator_optimizer(), "adam_g");
            capture(c, trainer.discriminator_optimizer(), "adam_d");
            save_checkpoint(files.checkpoint, c);
        }
    }
    return summary;
}

std::vector<std::int64_t> parse_dims(const std::string& text, std::int64_t latent) {
    std::vector<std::int64_t> dims;
    if (text == "all") {
        for (std::int64_t i = 0; i < latent; ++i) dims.push_back(i);
        return dims;
    }
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::int64_t d = -1;
        try {
            d = std::stoll(tok);
        } catch (const std::logic_error&) {
            throw ConfigError("traverse: bad dimension '" + tok + "'");
        }
        if (d < 0 || d >= latent) throw ConfigError("traverse: dimension " + tok + " outside [0, " + std::to_string(latent) + ")");
        dims.push_back(d);
    }
    if (dims.empty()) throw ConfigError("traverse: no dimensions given");
    return dims;
}

MetricReport summarize(const std::string& name, const std::vector<double>& values, std::int64_t nr, std::int64_t ng,
                       const std::string& extractor, const std::string& hash) {
    MetricReport r;
    r.metric = name;
    r.trials = static_cast<int>(values.size());
    double mean = 0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0;
    for (double v : values) var += (v - mean) * (v - mean);
    r.value = mean;
    r.stddev = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
    r.count_real = nr;
    r.count_generated = ng;
    r.extractor = extractor;
    r.config_hash = hash;
    return r;
}

}  // namespace

// ---- OutputLock ------------------------------------------------------------------

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        throw ConfigError("output directory " + dir.string() + " is locked by another run (remove " + path_.string() +
                          " if no run is active)");
    }
    const std::string pid = std::to_string(::getpid()) + '\n';
    [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

OutputLock::~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

// ---- LoadedModel -------------------------------------------------------------------

Tensor LoadedModel::decode(const Tensor& z) {
    NoGradGuard no_grad;
    return vae ? vae->image_from_latent(z) : gan->generator_forward(z);
}

Tensor LoadedModel::generate(Rng& rng, std::int64_t n) {
    if (n < 1) throw ConfigError("generate: sample count must be positive");
    return chunked(n, [&](std::int64_t, std::int64_t len) { return decode(sample_normal(rng, {len, latent()})); });
}

Tensor LoadedModel::reconstruct(const Tensor& x, Rng& rng) {
    if (!vae) throw ConfigError("reconstruct: GAN checkpoints have no encoder");
    return chunked(x.dim(0), [&](std::int64_t s, std::int64_t len) { return vae->reconstruct_input(narrow(x, 0, s, len), rng); });
}

ParamStore& LoadedModel::params() { return vae ? vae->params() : gan->params(); }

LoadedModel load_model(const fs::path& path) {
    const Checkpoint c = load_checkpoint(path);
    LoadedModel m;
    m.config = parse_config(c.config_text);
    m.config_hash = c.config_hash;
    m.epoch = c.epoch;
    m.channels = c.counter("data.channels");
    m.extent = c.counter("data.extent");
    if (m.channels <= 0 || m.extent <= 0) throw FormatError(path.string() + ": checkpoint lacks the data shape");
    const ModelConfig mc = m.config.model_config(m.channels, m.extent);
    if (m.config.is_gan()) {
        m.gan = std::make_unique<GanModel>(mc, m.config.gan_config(), m.config.seed);
    } else {
        m.vae = std::make_unique<VaeModel>(mc, m.config.seed);
    }
    restore(c, m.params());
    return m;
}

// ---- commands ----------------------------------------------------------------------

TrainSummary cmd_train(const TrainOptions& o) {
    o.config.validate();
    const ImageDataset ds = load_dataset(o.config.dataset);
    check_fits(o.config, ds);
    OutputLock lock(o.config.out);
    say(o.log, "dataset " + std::to_string(ds.count()) + " x " + shape_str(ds.item_shape()) + " fingerprint " + fingerprint(ds.images));
    return o.config.is_gan() ? train_gan_run(o, ds) : train_vae(o, ds);
}

std::vector<fs::path> cmd_generate(const GenerateOptions& o) {
    LoadedModel m = load_model(o.checkpoint);
    Rng rng(o.seed);
    const Tensor images = clamp01(m.generate(rng, o.n));
    fs::create_directories(o.out);
    const std::string ext = pnm_ext(m.channels);
    std::vector<fs::path> written;
    for (std::int64_t i = 0; i < o.n; ++i) {
        written.push_back(o.out / numbered("sample", i, ext));
        write_pnm(written.back(), item(images, i));
    }
    written.push_back(o.out / ("grid" + ext));
    write_pnm(written.back(), make_grid(images, grid_cols(o.n)));
    return written;
}

std::vector<fs::path> cmd_reconstruct(const ReconstructOptions& o) {
    LoadedModel m = load_model(o.checkpoint);
    const ImageDataset ds = load_dataset(o.dataset.empty() ? m.config.dataset : o.dataset);
    if (o.n < 1 || o.n > ds.count()) throw ConfigError("reconstruct: n must lie in [1, " + std::to_string(ds.count()) + "]");
    const Tensor x = narrow(ds.images, 0, 0, o.n);
    Rng rng(o.seed);
    const Tensor r = clamp01(m.reconstruct(x, rng));
    fs::create_directories(o.out);
    const std::string ext = pnm_ext(m.channels);
    std::vector<fs::path> written;
    for (std::int64_t i = 0; i < o.n; ++i) {
        written.push_back(o.out / numbered("recon", i, ext));
        write_pnm(written.back(), item(r, i));
    }
    // Originals in the upper rows, reconstructions below.
    const std::int64_t cols = std::min<std::int64_t>(o.n, 16);
    written.push_back(o.out / ("grid" + ext));
    const Tensor top = make_grid(x, cols), bottom = make_grid(r, cols);
    write_pnm(written.back(), concat({top, Tensor::ones({top.dim(0), 2, top.dim(2)}), bottom}, 1));
    return written;
}

Tensor cmd_traverse(const TraverseOptions& o) {
    if (o.steps < 1) throw ConfigError("traverse: steps must be positive");
    LoadedModel m = load_model(o.checkpoint);
    const std::vector<std::int64_t> dims = parse_dims(o.dims, m.latent());
    Tensor base;
    if (!o.image.empty()) {
        if (!m.has_encoder()) throw ConfigError("traverse: GAN checkpoints cannot encode an image");
        const Tensor img = read_pnm(o.image);
        const Tensor x = reshape(img, {1, img.dim(0), img.dim(1), img.dim(2)});
        NoGradGuard no_grad;
        base = m.vae->encode(x, Mode::eval).mean;
    } else {
        say(o.log, "no image given: traversing around a prior sample");
        Rng rng(o.seed);
        base = sample_normal(rng, {1, m.latent()});
    }
    std::vector<Tensor> rows;
    for (std::int64_t d : dims) {
        std::vector<float> z;
        for (int s = 0; s < o.steps; ++s) {
            std::vector<float> row(base.values().begin(), base.values().end());
            row[static_cast<std::size_t>(d)] = o.steps == 1 ? o.lo : o.lo + (o.hi - o.lo) * static_cast<float>(s) / static_cast<float>(o.steps - 1);
            z.insert(z.end(), row.begin(), row.end());
        }
        rows.push_back(m.decode(Tensor({o.steps, m.latent()}, std::move(z))));
    }
    const Tensor grid = make_grid(clamp01(rows.size() == 1 ? rows.front() : concat(rows, 0)), o.steps);
    if (!o.out.empty()) {
        if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
        write_pnm(o.out, grid);
    }
    return grid;
}

std::vector<MetricReport> cmd_eval(const EvalOptions& o) {
    if (o.trials < 1) throw ConfigError("eval: trials must be >= 1");
    if (o.n < 2) throw ConfigError("eval: n must be >= 2");
    for (const auto& name : o.metrics) {
        if (name != "iqm" && name != "fid" && name != "mi") throw ConfigError("eval: unknown metric '" + name + "' (iqm, fid, mi)");
    }
    auto wants = [&](const char* name) { return std::find(o.metrics.begin(), o.metrics.end(), name) != o.metrics.end(); };
    LoadedModel m = load_model(o.checkpoint);
    const ImageDataset ds = load_dataset(o.dataset.empty() ? m.config.dataset : o.dataset);
    const std::int64_t nr = std::min(o.n, ds.count());
    const Tensor real = narrow(ds.images, 0, 0, nr);
    const auto extractor = make_extractor(o.extractor.empty() ? m.config.extractor : o.extractor, m.channels);

    std::vector<std::pair<std::string, std::vector<double>>> values;
    auto record = [&](const std::string& name, double v) {
        for (auto& [n, vs] : values) {
            if (n == name) {
                vs.push_back(v);
                return;
            }
        }
        values.push_back({name, {v}});
    };
    for (int t = 0; t < o.trials; ++t) {
        Rng rng(o.seed + static_cast<std::uint64_t>(t));
        const Tensor gen = clamp01(m.generate(rng, o.n));
        std::optional<Tensor> rec;
        if (m.has_encoder()) rec = clamp01(m.reconstruct(real, rng));
        if (wants("iqm")) {
            record("iqm_data", iqm(real, o.iqm_divisor));
            record("iqm_generated", iqm(gen, o.iqm_divisor));
            if (rec) record("iqm_reconstructed", iqm(*rec, o.iqm_divisor));
        }
        if (wants("fid")) {
            record("fid_data", fid(real, real, *extractor).value);
            record("fid_generated", fid(real, gen, *extractor).value);
            if (rec) record("fid_reconstructed", fid(real, *rec, *extractor).value);
        }
        if (wants("mi")) {
            if (!m.has_encoder()) throw ConfigError("eval: mi needs an encoder; GAN checkpoints have none");
            record("mi", index_code_mi(*m.vae, ds.images, rng, o.mi_items));
        }
    }
    std::vector<MetricReport> reports;
    for (const auto& [name, vs] : values) {
        const bool uses_features = name.rfind("fid", 0) == 0;
        std::int64_t ng = name.find("generated") != std::string::npos ? o.n : nr;
        if (name == "mi") ng = std::min(ds.count(), o.mi_items > 0 ? o.mi_items : ds.count());
        reports.push_back(summarize(name, vs, nr, ng, uses_features ? extractor->id() : "", m.config_hash));
    }
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        std::ofstream tsv(o.out / "report.tsv", std::ios::trunc), txt(o.out / "report.txt", std::ios::trunc);
        if (!reports.empty()) tsv << reports.front().tsv_header() << '\n';
        for (const auto& r : reports) {
            tsv << r.to_tsv() << '\n';
            txt << r.to_text() << '\n';
        }
        if (!tsv || !txt) throw FormatError("cannot write reports under " + o.out.string());
    }
    return reports;
}

std::vector<fs::path> cmd_wavelet(const WaveletOptions& o) {
    fs::create_directories(o.out);
    std::vector<fs::path> written;
    const std::string stem = o.input.stem().string();
    if (!o.inverse) {
        if (o.levels < 1) throw ConfigError("wavelet: levels must be >= 1");
        const Tensor img = read_pnm(o.input);
        const WaveletPyramid p = decompose(reshape(img, {1, img.dim(0), img.dim(1), img.dim(2)}), o.levels);
        const Tensor layout = render_layout(p);
        written.push_back(o.out / (stem + "_layout" + pnm_ext(img.dim(0))));
        write_pnm(written.back(), reshape(layout, {layout.dim(1), layout.dim(2), layout.dim(3)}));
        written.push_back(save_pyramid(o.out, stem, p));
        return written;
    }
    const Tensor x = reconstruct(load_pyramid(o.input));
    const Tensor img = reshape(x, {x.dim(1), x.dim(2), x.dim(3)});
    written.push_back(o.out / (stem + "_reconstructed" + pnm_ext(img.dim(0))));
    write_pnm(written.back(), img);
    written.push_back(o.out / (stem + "_reconstructed.wgt"));
    save_tensor(written.back(), x);
    return written;
}

ImageDataset cmd_synth(const SynthOptions& o) {
    SynthSpec spec = parse_synth_spec(o.spec);
    if (o.spec_seed) spec.seed = *o.spec_seed;
    const ImageDataset ds = synth(spec);
    if (o.out.extension() == ".wgt") {
        save_packed(ds, o.out);
    } else {
        save_folder(ds, o.out);
    }
    return ds;
}

int run_guarded(const std::function<void()>& body) {
    try {
        body();
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
}

void tune_allocator() {
    // Training reallocates the same large activation buffers every step.
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
}

}  // namespace wvae::cli
