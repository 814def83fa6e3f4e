#include "wavevae/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "wavevae/error.hpp"
#include "wavevae/tensor_io.hpp"

namespace wvae {

namespace fs = std::filesystem;

// ---- PNM ------------------------------------------------------------------

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& is, const fs::path& path) {
    std::string tok;
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (std::isspace(c)) {
            if (!tok.empty()) return tok;
        } else {
            tok.push_back(static_cast<char>(c));
        }
        c = is.get();
    }
    if (tok.empty()) throw FormatError(path.string() + ": truncated header");
    return tok;
}

std::int64_t pnm_int(std::istream& is, const fs::path& path, const char* field) {
    const std::string tok = pnm_token(is, path);
    std::int64_t v = 0;
    for (char ch : tok) {
        if (ch < '0' || ch > '9') throw FormatError(path.string() + ": bad " + field + " '" + tok + "'");
        v = v * 10 + (ch - '0');
        if (v > (1 << 20)) throw FormatError(path.string() + ": " + field + " too large");
    }
    if (v <= 0) throw FormatError(path.string() + ": " + field + " must be positive");
    return v;
}

bool is_pnm(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".pgm" || ext == ".ppm";
}

}  // namespace

Tensor read_pnm(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    char magic[2] = {0, 0};
    is.read(magic, 2);
    if (!is || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) throw FormatError(path.string() + ": not a binary PGM/PPM file");
    const std::int64_t c = magic[1] == '5' ? 1 : 3;
    const std::int64_t w = pnm_int(is, path, "width");
    const std::int64_t h = pnm_int(is, path, "height");
    const std::int64_t maxval = pnm_int(is, path, "maxval");
    if (maxval != 255) throw FormatError(path.string() + ": unsupported maxval " + std::to_string(maxval) + " (only 255)");
    std::vector<unsigned char> raw(static_cast<std::size_t>(c * h * w));
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (is.gcount() != static_cast<std::streamsize>(raw.size())) throw FormatError(path.string() + ": truncated pixel data");
    // Interleaved RGB to planar.
    std::vector<float> v(raw.size());
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            for (std::int64_t ch = 0; ch < c; ++ch) {
                v[static_cast<std::size_t>((ch * h + y) * w + x)] = static_cast<float>(raw[static_cast<std::size_t>((y * w + x) * c + ch)]) / 255.0f;
            }
        }
    }
    return Tensor({c, h, w}, std::move(v));
}

void write_pnm(const fs::path& path, const Tensor& image) {
    if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
        throw ShapeError("write_pnm: expected [1|3,H,W], got " + shape_str(image.shape()));
    }
    const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write " + path.string());
    os << (c == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << "\n255\n";
    const auto v = image.values();
    std::vector<unsigned char> raw(static_cast<std::size_t>(c * h * w));
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const float p = std::clamp(v[static_cast<std::size_t>((ch * h + y) * w + x)], 0.0f, 1.0f);
                raw[static_cast<std::size_t>((y * w + x) * c + ch)] = static_cast<unsigned char>(std::lround(p * 255.0f));
            }
        }
    }
    os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!os) throw FormatError("write failed for " + path.string());
}

ImageDataset load_folder(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw FormatError(dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && is_pnm(e.path())) files.push_back(e.path());
    }
    if (files.empty()) throw FormatError(dir.string() + ": no .pgm/.ppm files");
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    std::vector<float> all;
    Shape item;
    for (const auto& f : files) {
        const Tensor t = read_pnm(f);
        if (item.empty()) {
            item = t.shape();
            all.reserve(static_cast<std::size_t>(t.numel()) * files.size());
        } else if (t.shape() != item) {
            throw ShapeError(f.string() + ": shape " + shape_str(t.shape()) + " differs from " + shape_str(item));
        }
        all.insert(all.end(), t.values().begin(), t.values().end());
    }
    return {Tensor({static_cast<std::int64_t>(files.size()), item[0], item[1], item[2]}, std::move(all)), dir.string()};
}

std::vector<fs::path> save_folder(const ImageDataset& ds, const fs::path& dir, const std::string& stem) {
    fs::create_directories(dir);
    const std::int64_t n = ds.count();
    const char* ext = ds.channels() == 1 ? ".pgm" : ".ppm";
    std::vector<fs::path> written;
    for (std::int64_t i = 0; i < n; ++i) {
        std::ostringstream name;
        name << stem << '_' << std::setw(5) << std::setfill('0') << i << ext;
        const Tensor item = reshape(narrow(ds.images, 0, i, 1), ds.item_shape());
        written.push_back(dir / name.str());
        write_pnm(written.back(), item);
    }
    return written;
}

std::string fingerprint(const Tensor& t) {
    std::uint64_t h = 14695981039346656037ull;
    auto feed = [&h](std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) {
            h ^= (v >> (8 * i)) & 0xffu;
            h *= 1099511628211ull;
        }
    };
    feed(static_cast<std::uint64_t>(t.rank()), 8);
    for (auto d : t.shape()) feed(static_cast<std::uint64_t>(d), 8);
    for (float v : t.values()) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        feed(bits, 4);
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

void save_packed(const ImageDataset& ds, const fs::path& file) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    save_tensor(file, ds.images);
    std::ofstream os(file.string() + ".manifest");
    if (!os) throw FormatError("cannot write manifest for " + file.string());
    os << "count=" << ds.count() << " shape=" << ds.images.dim(1) << 'x' << ds.images.dim(2) << 'x' << ds.images.dim(3)
       << " hash=" << fingerprint(ds.images) << " source=" << (ds.source.empty() ? "-" : ds.source) << '\n';
}

ImageDataset load_packed(const fs::path& file) {
    Tensor images = load_tensor(file);
    if (images.rank() != 4) throw FormatError(file.string() + ": packed dataset must be [N,C,H,W], got " + shape_str(images.shape()));
    for (float v : images.values()) {
        if (!(v >= 0.0f && v <= 1.0f)) throw FormatError(file.string() + ": values outside [0,1]");
    }
    const fs::path manifest = file.string() + ".manifest";
    if (fs::exists(manifest)) {
        std::ifstream is(manifest);
        std::string tok;
        while (is >> tok) {
            if (tok.rfind("hash=", 0) == 0 && tok.substr(5) != fingerprint(images)) {
                throw FormatError(file.string() + ": content hash does not match its manifest");
            }
        }
    }
    return {std::move(images), file.string()};
}

// ---- synth -------------------------------------------------------------------

void SynthSpec::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("synth: " + m); };
    if (count <= 0) fail("count must be positive");
    if (extent < 4 || (extent & (extent - 1)) != 0) fail("extent must be a power of two >= 4");
    if (channels != 1 && channels != 3) fail("channels must be 1 or 3");
    if (gratings < 0 || blobs < 0 || mosaics < 0 || dc < 0 || gratings + blobs + mosaics + dc <= 0) {
        fail("recipe weights must be non-negative with a positive sum");
    }
    if (!(frequency > 0 && frequency <= 1)) fail("frequency must lie in (0, 1] (fraction of Nyquist)");
    if (!(frequency_jitter >= 0 && frequency_jitter < 1)) fail("frequency_jitter must lie in [0, 1)");
    if (components < 1) fail("components must be >= 1");
    if (!(noise >= 0)) fail("noise must be non-negative");
}

SynthSpec parse_synth_spec(const std::string& text) {
    SynthSpec s;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("synth spec: expected key=value, got '" + item + "'");
        const std::string key = item.substr(0, eq), val = item.substr(eq + 1);
        try {
            if (key == "count") s.count = std::stoll(val);
            else if (key == "extent") s.extent = std::stoll(val);
            else if (key == "channels") s.channels = std::stoll(val);
            else if (key == "gratings") s.gratings = std::stod(val);
            else if (key == "blobs") s.blobs = std::stod(val);
            else if (key == "mosaics") s.mosaics = std::stod(val);
            else if (key == "dc") s.dc = std::stod(val);
            else if (key == "frequency") s.frequency = std::stod(val);
            else if (key == "frequency_jitter") s.frequency_jitter = std::stod(val);
            else if (key == "orientation") s.orientation = std::stod(val);
            else if (key == "components") s.components = std::stoi(val);
            else if (key == "noise") s.noise = std::stod(val);
            else if (key == "seed") s.seed = std::stoull(val);
            else throw ConfigError("synth spec: unknown key '" + key + "'");
        } catch (const std::logic_error&) {
            throw ConfigError("synth spec: bad value for " + key + ": '" + val + "'");
        }
    }
    s.validate();
    return s;
}

std::string to_string(const SynthSpec& s) {
    std::ostringstream os;
    os << std::setprecision(17) << "count=" << s.count << ",extent=" << s.extent << ",channels=" << s.channels << ",gratings=" << s.gratings
       << ",blobs=" << s.blobs << ",mosaics=" << s.mosaics << ",dc=" << s.dc << ",frequency=" << s.frequency
       << ",frequency_jitter=" << s.frequency_jitter << ",orientation=" << s.orientation << ",components=" << s.components
       << ",noise=" << s.noise << ",seed=" << s.seed;
    return os.str();
}

namespace {

using Grid = std::vector<double>;

// Sum of sinusoids with integer wavevectors, so every component is exactly
// periodic on the grid and contributes two spectral lines.
Grid grating(const SynthSpec& s, Rng& rng) {
    const std::int64_t n = s.extent;
    Grid g(static_cast<std::size_t>(n * n), 0.5);
    const double amp = 0.45 / s.components;
    for (int k = 0; k < s.components; ++k) {
        const double f = s.frequency * (n / 2.0) * (1.0 + s.frequency_jitter * (2.0 * rng.uniform() - 1.0));
        const double theta = s.orientation < 0 ? rng.uniform(0.0, M_PI) : s.orientation;
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        auto kx = static_cast<std::int64_t>(std::lround(f * std::cos(theta)));
        const auto ky = static_cast<std::int64_t>(std::lround(f * std::sin(theta)));
        if (kx == 0 && ky == 0) kx = 1;
        for (std::int64_t y = 0; y < n; ++y) {
            for (std::int64_t x = 0; x < n; ++x) {
                g[static_cast<std::size_t>(y * n + x)] += amp * std::sin(2.0 * M_PI * static_cast<double>(kx * x + ky * y) / n + phase);
            }
        }
    }
    return g;
}

Grid blob_field(const SynthSpec& s, Rng& rng) {
    const std::int64_t n = s.extent;
    Grid g(static_cast<std::size_t>(n * n), rng.uniform(0.1, 0.3));
    const auto count = 1 + static_cast<int>(rng.below(3));
    for (int b = 0; b < count; ++b) {
        const double cy = rng.uniform(0.0, n), cx = rng.uniform(0.0, n);
        const double sigma = rng.uniform(n / 16.0, n / 4.0);
        const double a = rng.uniform(0.3, 0.7);
        for (std::int64_t y = 0; y < n; ++y) {
            for (std::int64_t x = 0; x < n; ++x) {
                const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                g[static_cast<std::size_t>(y * n + x)] += a * std::exp(-d2 / (2.0 * sigma * sigma));
            }
        }
    }
    return g;
}

Grid mosaic(const SynthSpec& s, Rng& rng) {
    const std::int64_t n = s.extent;
    const std::int64_t cell = std::max<std::int64_t>(1, n >> (2 + rng.below(2)));
    const std::int64_t cells = n / cell;
    std::vector<double> level(static_cast<std::size_t>(cells * cells));
    for (double& v : level) v = rng.uniform();
    Grid g(static_cast<std::size_t>(n * n));
    for (std::int64_t y = 0; y < n; ++y) {
        for (std::int64_t x = 0; x < n; ++x) g[static_cast<std::size_t>(y * n + x)] = level[static_cast<std::size_t>((y / cell) * cells + x / cell)];
    }
    return g;
}

}  // namespace

ImageDataset synth(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::int64_t n = spec.extent, c = spec.channels, plane = n * n;
    const double weights[4] = {spec.gratings, spec.blobs, spec.mosaics, spec.dc};
    const double total = weights[0] + weights[1] + weights[2] + weights[3];
    std::vector<float> all(static_cast<std::size_t>(spec.count * c * plane));
    for (std::int64_t i = 0; i < spec.count; ++i) {
        double u = rng.uniform() * total;
        int recipe = 0;
        while (recipe < 3 && (weights[recipe] <= 0 || u >= weights[recipe])) {
            u -= weights[recipe];
            ++recipe;
        }
        Grid g;
        switch (recipe) {
            case 0: g = grating(spec, rng); break;
            case 1: g = blob_field(spec, rng); break;
            case 2: g = mosaic(spec, rng); break;
            default: g.assign(static_cast<std::size_t>(plane), rng.uniform(0.1, 0.9)); break;
        }
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const double gain = c == 1 ? 1.0 : rng.uniform(0.7, 1.0);
            float* dst = all.data() + (i * c + ch) * plane;
            for (std::int64_t p = 0; p < plane; ++p) {
                double v = 0.5 + gain * (g[static_cast<std::size_t>(p)] - 0.5);
                if (spec.noise > 0) v += spec.noise * rng.normal();
                dst[p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return {Tensor({spec.count, c, n, n}, std::move(all)), "synth:" + to_string(spec)};
}

ImageDataset load_dataset(const std::string& ref) {
    if (ref.rfind("synth:", 0) == 0) return synth(parse_synth_spec(ref.substr(6)));
    if (fs::is_directory(ref)) return load_folder(ref);
    if (fs::is_regular_file(ref)) return load_packed(ref);
    throw ConfigError("dataset '" + ref + "' is neither a folder, a packed file nor a synth: spec");
}

// ---- batching ----------------------------------------------------------------

Batches::Batches(const ImageDataset& ds, std::int64_t batch_size, bool shuffle, Rng& rng, bool hflip)
    : ds_(&ds), batch_(batch_size) {
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (batch_size > ds.count()) {
        throw ConfigError("batch size " + std::to_string(batch_size) + " exceeds dataset size " + std::to_string(ds.count()));
    }
    order_.resize(static_cast<std::size_t>(ds.count()));
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::int64_t>(i);
    if (shuffle) {
        for (std::size_t i = order_.size() - 1; i > 0; --i) std::swap(order_[i], order_[rng.below(i + 1)]);
    }
    flip_.assign(order_.size(), false);
    if (hflip) {
        for (std::size_t i = 0; i < flip_.size(); ++i) flip_[i] = rng.uniform() < 0.5;
    }
}

bool Batches::next(Tensor& out) {
    if (cursor_ + batch_ > static_cast<std::int64_t>(order_.size())) return false;
    const Shape item = ds_->item_shape();
    const std::int64_t h = item[1], w = item[2], per = item[0] * h * w;
    const auto src = ds_->images.values();
    std::vector<float> v(static_cast<std::size_t>(batch_ * per));
    for (std::int64_t b = 0; b < batch_; ++b) {
        const auto slot = static_cast<std::size_t>(cursor_ + b);
        const float* from = src.data() + order_[slot] * per;
        float* to = v.data() + b * per;
        if (!flip_[slot]) {
            std::copy(from, from + per, to);
            continue;
        }
        for (std::int64_t r = 0; r < per / w; ++r) {
            for (std::int64_t x = 0; x < w; ++x) to[r * w + x] = from[r * w + (w - 1 - x)];
        }
    }
    cursor_ += batch_;
    out = Tensor({batch_, item[0], h, w}, std::move(v));
    return true;
}

Tensor make_grid(const Tensor& images, std::int64_t cols, std::int64_t pad, float fill) {
    if (images.rank() != 4 || images.dim(0) == 0) throw ShapeError("make_grid: expected non-empty [N,C,H,W]");
    if (cols < 1 || pad < 0) throw ShapeError("make_grid: cols must be positive and pad non-negative");
    const std::int64_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
    cols = std::min(cols, n);
    const std::int64_t rows = (n + cols - 1) / cols;
    const std::int64_t gh = rows * (h + pad) - pad, gw = cols * (w + pad) - pad;
    std::vector<float> g(static_cast<std::size_t>(c * gh * gw), fill);
    const auto v = images.values();
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t oy = (i / cols) * (h + pad), ox = (i % cols) * (w + pad);
        for (std::int64_t ch = 0; ch < c; ++ch) {
            for (std::int64_t y = 0; y < h; ++y) {
                const float* src = v.data() + ((i * c + ch) * h + y) * w;
                std::copy(src, src + w, g.data() + (ch * gh + oy + y) * gw + ox);
            }
        }
    }
    return Tensor({c, gh, gw}, std::move(g));
}

}  // namespace wvae
