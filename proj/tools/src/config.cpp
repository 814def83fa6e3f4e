#include "wavevae_cli/config.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "wavevae/error.hpp"

namespace wvae::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    std::istringstream is(v);
    T out{};
    is >> out;
    if (!is || !is.eof()) throw ConfigError("config: bad numeric value for " + key + ": '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

}  // namespace

bool RunConfig::is_gan() const { return model.rfind("gan_", 0) == 0; }

ModelConfig RunConfig::model_config(std::int64_t channels, std::int64_t extent) const {
    ModelConfig m;
    m.kind = is_gan() ? ModelKind::wavelet_vae : parse_model_kind(model);
    m.channels = channels;
    m.extent = extent;
    m.latent = latent;
    m.width = width;
    m.batchnorm = batchnorm;
    m.mr_levels = mr_levels;
    m.beta = beta;
    return m;
}

GanConfig RunConfig::gan_config() const {
    GanConfig g;
    g.loss = parse_gan_loss(model);
    g.clip = clip;
    g.critic_steps = critic_steps;
    g.lr_generator = lr;
    g.lr_discriminator = lr_discriminator;
    g.beta1 = gan_beta1;
    return g;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    if (key == "preset") apply_preset(*this, v);
    else if (key == "model") model = v;
    else if (key == "dataset") dataset = v;
    else if (key == "epochs") epochs = parse_number<int>(key, v);
    else if (key == "batch_size") batch_size = parse_number<std::int64_t>(key, v);
    else if (key == "latent") latent = parse_number<std::int64_t>(key, v);
    else if (key == "width") width = parse_number<std::int64_t>(key, v);
    else if (key == "batchnorm") batchnorm = parse_bool(key, v);
    else if (key == "beta") beta = parse_number<float>(key, v);
    else if (key == "lr") lr = parse_number<float>(key, v);
    else if (key == "lr_halving") lr_halving = parse_number<int>(key, v);
    else if (key == "mr_levels") mr_levels = parse_number<int>(key, v);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, v);
    else if (key == "out") out = v;
    else if (key == "shuffle") shuffle = parse_bool(key, v);
    else if (key == "hflip") hflip = parse_bool(key, v);
    else if (key == "checkpoint_every") checkpoint_every = parse_number<int>(key, v);
    else if (key == "clip") clip = parse_number<float>(key, v);
    else if (key == "critic_steps") critic_steps = parse_number<int>(key, v);
    else if (key == "lr_discriminator") lr_discriminator = parse_number<float>(key, v);
    else if (key == "gan_beta1") gan_beta1 = parse_number<float>(key, v);
    else if (key == "eval_every") eval_every = parse_number<int>(key, v);
    else if (key == "extractor") extractor = v;
    else throw ConfigError("config: unknown key '" + key + "'");
}

void RunConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
    if (is_gan()) {
        parse_gan_loss(model);
    } else {
        parse_model_kind(model);
    }
    if (dataset.empty()) fail("dataset is required");
    if (epochs < 1) fail("epochs must be >= 1");
    if (batch_size < 2) fail("batch_size must be >= 2 (batch norm needs two items)");
    if (latent < 1) fail("latent must be >= 1");
    if (width < 1) fail("width must be >= 1");
    if (!(beta >= 0)) fail("beta must be non-negative");
    if (!(lr > 0)) fail("lr must be positive");
    if (lr_halving < 0) fail("lr_halving must be >= 0");
    if (mr_levels < 1) fail("mr_levels must be >= 1");
    if (out.empty()) fail("out must not be empty");
    if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
    if (eval_every < 0) fail("eval_every must be >= 0");
    if (is_gan()) gan_config().validate();
    if (extractor != "randconv" && extractor != "pixels8") fail("extractor must be randconv or pixels8");
}

std::string RunConfig::to_text(bool include_out) const {
    std::ostringstream os;
    os << std::setprecision(9) << std::boolalpha;
    os << "model=" << model << "\ndataset=" << dataset << "\nepochs=" << epochs << "\nbatch_size=" << batch_size
       << "\nlatent=" << latent << "\nwidth=" << width << "\nbatchnorm=" << batchnorm << "\nbeta=" << beta << "\nlr=" << lr
       << "\nlr_halving=" << lr_halving << "\nmr_levels=" << mr_levels << "\nseed=" << seed << "\nshuffle=" << shuffle
       << "\nhflip=" << hflip << "\ncheckpoint_every=" << checkpoint_every << "\nclip=" << clip << "\ncritic_steps=" << critic_steps
       << "\nlr_discriminator=" << lr_discriminator << "\ngan_beta1=" << gan_beta1 << "\neval_every=" << eval_every
       << "\nextractor=" << extractor << '\n';
    if (include_out) os << "out=" << out << '\n';
    return os.str();
}

std::string RunConfig::hash() const {
    // Run length and logging cadence do not change the trajectory, so a run
    // can be extended with --resume without --force.
    RunConfig c = *this;
    c.epochs = 0;
    c.checkpoint_every = 0;
    c.eval_every = 0;
    const std::string text = c.to_text(false);
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

void apply_preset(RunConfig& c, const std::string& name) {
    if (name == "cifar") {
        c.epochs = 1000;
        c.lr_halving = 300;
        c.beta = 5.0f;
    } else if (name == "celeba") {
        c.epochs = 120;
        c.lr_halving = 48;
        c.beta = 1.0f;
    } else {
        throw ConfigError("config: unknown preset '" + name + "' (expected cifar or celeba)");
    }
    c.batch_size = 100;
    c.lr = 1e-4f;
    c.latent = 64;
}

RunConfig parse_config(const std::string& text, RunConfig base) {
    std::istringstream is(text);
    std::string line;
    int number = 0;
    while (std::getline(is, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key=value");
        base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

void apply_overrides(RunConfig& c, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + o + "': expected key=value");
        c.set(trim(o.substr(0, eq)), o.substr(eq + 1));
    }
}

}  // namespace wvae::cli
