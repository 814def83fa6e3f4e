#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "wavevae/tensor.hpp"
#include "wavevae/data.hpp"
#include "wavevae_cli/commands.hpp"

using namespace wvae;
using namespace wvae::cli;

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"Wavelet-space VAE and GAN toolkit"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "kernel worker threads (1 = fully deterministic)")->check(CLI::PositiveNumber);

    auto stderr_log = [](const std::string& m) { std::cerr << m << '\n'; };

    // train
    std::string config_path, resume;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> train_seed;
    std::string train_out;
    bool force = false;
    auto* train = app.add_subcommand("train", "train a model from a key=value config");
    train->add_option("--config", config_path, "config file");
    train->add_option("--set", overrides, "key=value override, repeatable");
    train->add_option("--seed", train_seed, "overrides the config seed");
    train->add_option("--out", train_out, "output directory (overrides the config)");
    train->add_option("--resume", resume, "checkpoint to continue from");
    train->add_flag("--force", force, "accept a config-hash mismatch on resume");

    // generate
    GenerateOptions gen;
    auto* generate = app.add_subcommand("generate", "sample images from a checkpoint");
    generate->add_option("--checkpoint", gen.checkpoint)->required();
    generate->add_option("-n,--count", gen.n, "number of samples")->check(CLI::PositiveNumber);
    generate->add_option("--seed", gen.seed);
    generate->add_option("--out", gen.out, "output directory");

    // reconstruct
    ReconstructOptions rec;
    auto* reconstruct = app.add_subcommand("reconstruct", "encode and decode dataset items");
    reconstruct->add_option("--checkpoint", rec.checkpoint)->required();
    reconstruct->add_option("--dataset", rec.dataset, "defaults to the checkpoint's dataset");
    reconstruct->add_option("-n,--count", rec.n)->check(CLI::PositiveNumber);
    reconstruct->add_option("--seed", rec.seed);
    reconstruct->add_option("--out", rec.out, "output directory");

    // traverse
    TraverseOptions trav;
    auto* traverse = app.add_subcommand("traverse", "sweep latent coordinates");
    traverse->add_option("--checkpoint", trav.checkpoint)->required();
    traverse->add_option("--image", trav.image, "image to encode; omitted = prior sample");
    traverse->add_option("--dims", trav.dims, "'all' or comma-separated indices");
    traverse->add_option("--lo", trav.lo);
    traverse->add_option("--hi", trav.hi);
    traverse->add_option("--steps", trav.steps)->check(CLI::PositiveNumber);
    traverse->add_option("--seed", trav.seed);
    traverse->add_option("--out", trav.out, "grid image path");

    // eval
    EvalOptions ev;
    std::string metric_list = "iqm,fid";
    auto* eval = app.add_subcommand("eval", "compute metrics for a checkpoint");
    eval->add_option("--checkpoint", ev.checkpoint)->required();
    eval->add_option("--dataset", ev.dataset, "defaults to the checkpoint's dataset");
    eval->add_option("--metrics", metric_list, "comma-separated subset of iqm,fid,mi");
    eval->add_option("--trials", ev.trials)->check(CLI::PositiveNumber);
    eval->add_option("-n,--count", ev.n, "samples per set");
    eval->add_option("--mi-items", ev.mi_items, "subsample bound for mi (0 = all)");
    eval->add_option("--extractor", ev.extractor, "randconv or pixels8");
    eval->add_option("--iqm-divisor", ev.iqm_divisor);
    eval->add_option("--seed", ev.seed);
    eval->add_option("--out", ev.out, "directory for report.tsv / report.txt");

    // wavelet
    WaveletOptions wav;
    std::string direction = "forward";
    auto* wavelet = app.add_subcommand("wavelet", "forward layout or inverse reconstruction");
    wavelet->add_option("input", wav.input, "image (forward) or pyramid manifest (inverse)")->required();
    wavelet->add_option("-J,--levels", wav.levels)->check(CLI::PositiveNumber);
    wavelet->add_option("--direction", direction)->check(CLI::IsMember({"forward", "inverse"}));
    wavelet->add_option("--out", wav.out, "output directory");

    // synth
    SynthOptions syn;
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic corpus");
    synth_cmd->add_option("--spec", syn.spec, "key=value,... (count, extent, channels, gratings, blobs, mosaics, dc, frequency, ...)");
    synth_cmd->add_option("--seed", syn.spec_seed, "overrides the spec seed");
    synth_cmd->add_option("--out", syn.out, "*.wgt for a packed file, otherwise a folder");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    set_kernel_threads(threads);

    return run_guarded([&] {
        if (train->parsed()) {
            TrainOptions o;
            if (!config_path.empty()) o.config = load_config(config_path);
            apply_overrides(o.config, overrides);
            if (train_seed) o.config.seed = *train_seed;
            if (!train_out.empty()) o.config.out = train_out;
            o.resume = resume;
            o.force = force;
            o.log = stderr_log;
            const TrainSummary s = cmd_train(o);
            std::cout << "epochs " << s.first_epoch << ".." << s.last_epoch << "\ncheckpoint " << s.checkpoint.string() << "\nloss_log "
                      << s.loss_log.string() << '\n';
        } else if (generate->parsed()) {
            for (const auto& p : cmd_generate(gen)) std::cout << p.string() << '\n';
        } else if (reconstruct->parsed()) {
            for (const auto& p : cmd_reconstruct(rec)) std::cout << p.string() << '\n';
        } else if (traverse->parsed()) {
            trav.log = stderr_log;
            const Tensor grid = cmd_traverse(trav);
            std::cout << trav.out.string() << ' ' << shape_str(grid.shape()) << '\n';
        } else if (eval->parsed()) {
            ev.metrics.clear();
            std::stringstream ss(metric_list);
            for (std::string m; std::getline(ss, m, ',');) {
                if (!m.empty()) ev.metrics.push_back(m);
            }
            const auto reports = cmd_eval(ev);
            if (!reports.empty()) std::cout << reports.front().tsv_header() << '\n';
            for (const auto& r : reports) std::cout << r.to_tsv() << '\n';
            for (const auto& r : reports) std::cout << '\n' << r.to_text();
        } else if (wavelet->parsed()) {
            wav.inverse = direction == "inverse";
            for (const auto& p : cmd_wavelet(wav)) std::cout << p.string() << '\n';
        } else if (synth_cmd->parsed()) {
            const ImageDataset ds = cmd_synth(syn);
            std::cout << syn.out.string() << ' ' << ds.count() << " x " << shape_str(ds.item_shape()) << " fingerprint "
                      << fingerprint(ds.images) << '\n';
        }
    });
}
