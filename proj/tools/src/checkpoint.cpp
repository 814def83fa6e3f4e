#include "wavevae_cli/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "wavevae/error.hpp"
#include "wavevae/tensor_io.hpp"

namespace wvae::cli {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'W', 'G', 'C', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_uint(std::istream& is, int bytes, const fs::path& path) {
    unsigned char b[8] = {};
    is.read(reinterpret_cast<char*>(b), bytes);
    if (is.gcount() != bytes) throw FormatError(path.string() + ": truncated checkpoint header");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void copy_into(const Tensor& from, Tensor to) {
    auto dst = to.mutable_values();
    std::copy(from.values().begin(), from.values().end(), dst.begin());
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.first == name) return &t.second;
    }
    return nullptr;
}

std::int64_t Checkpoint::counter(const std::string& name, std::int64_t fallback) const {
    for (const auto& c : counters) {
        if (c.first == name) return c.second;
    }
    return fallback;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    std::ostringstream manifest;
    manifest << "config_hash " << ckpt.config_hash << "\nepoch " << ckpt.epoch << "\nstep " << ckpt.step << "\nrng "
             << ckpt.rng_state << '\n';
    for (const auto& c : ckpt.counters) manifest << "counter " << c.first << ' ' << c.second << '\n';
    manifest << "config_begin\n" << ckpt.config_text;
    if (!ckpt.config_text.empty() && ckpt.config_text.back() != '\n') manifest << '\n';
    manifest << "config_end\n";
    for (const auto& t : ckpt.tensors) {
        if (t.first.find_first_of(" \n") != std::string::npos) throw FormatError("checkpoint: tensor name '" + t.first + "' has whitespace");
        manifest << "tensor " << t.first << ' ' << t.second.rank();
        for (auto d : t.second.shape()) manifest << ' ' << d;
        manifest << '\n';
    }
    const std::string text = manifest.str();

    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw FormatError("cannot write " + tmp.string());
        os.write(kMagic, 4);
        put_u32(os, kCheckpointVersion);
        put_u64(os, text.size());
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& t : ckpt.tensors) write_tensor(os, t.second);
        if (!os) throw FormatError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint " + path.string());
    char magic[4] = {};
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path.string() + ": not a checkpoint (bad magic)");
    const auto version = static_cast<std::uint32_t>(get_uint(is, 4, path));
    if (version != kCheckpointVersion) {
        throw FormatError(path.string() + ": checkpoint version " + std::to_string(version) + ", this build reads version " +
                          std::to_string(kCheckpointVersion));
    }
    const auto length = get_uint(is, 8, path);
    if (length > (1u << 26)) throw FormatError(path.string() + ": implausible manifest length");
    std::string text(length, '\0');
    is.read(text.data(), static_cast<std::streamsize>(length));
    if (static_cast<std::uint64_t>(is.gcount()) != length) throw FormatError(path.string() + ": truncated manifest");

    Checkpoint ckpt;
    std::vector<std::pair<std::string, Shape>> layout;
    std::istringstream ms(text);
    std::string line;
    bool in_config = false;
    while (std::getline(ms, line)) {
        if (in_config) {
            if (line == "config_end") in_config = false;
            else ckpt.config_text += line + '\n';
            continue;
        }
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "config_hash") ls >> ckpt.config_hash;
        else if (key == "epoch") ls >> ckpt.epoch;
        else if (key == "step") ls >> ckpt.step;
        else if (key == "rng") ckpt.rng_state = line.size() > 4 ? line.substr(4) : "";
        else if (key == "counter") {
            std::string name;
            std::int64_t v = 0;
            ls >> name >> v;
            ckpt.counters.emplace_back(name, v);
        } else if (key == "config_begin") in_config = true;
        else if (key == "tensor") {
            std::string name;
            int rank = -1;
            ls >> name >> rank;
            if (rank < 0 || rank > 8) throw FormatError(path.string() + ": bad tensor entry '" + line + "'");
            Shape s(static_cast<std::size_t>(rank));
            for (auto& d : s) ls >> d;
            layout.emplace_back(name, s);
        } else if (!key.empty()) {
            throw FormatError(path.string() + ": unknown manifest field '" + key + "'");
        }
        if (!ls && key != "rng" && key != "config_begin") throw FormatError(path.string() + ": malformed manifest line '" + line + "'");
    }
    if (in_config) throw FormatError(path.string() + ": unterminated config block");
    for (const auto& [name, shape] : layout) {
        Tensor t = read_tensor(is);
        if (t.shape() != shape) throw FormatError(path.string() + ": tensor " + name + " has shape " + shape_str(t.shape()) + ", manifest says " + shape_str(shape));
        ckpt.tensors.emplace_back(name, std::move(t));
    }
    return ckpt;
}

void capture(Checkpoint& ckpt, const ParamStore& store) {
    for (const auto& e : store.entries()) ckpt.tensors.emplace_back(e.name, e.tensor.detach());
}

void capture(Checkpoint& ckpt, const Adam& opt, const std::string& tag) {
    for (const auto& [name, t] : opt.state_tensors()) ckpt.tensors.emplace_back(tag + "." + name, t.detach());
    ckpt.counters.emplace_back(tag + ".step", opt.step_count());
}

void restore(const Checkpoint& ckpt, ParamStore& store) {
    std::vector<std::pair<const Tensor*, Tensor>> plan;
    for (const auto& e : store.entries()) {
        const Tensor* t = ckpt.find(e.name);
        if (!t) throw FormatError("checkpoint has no tensor '" + e.name + "'");
        if (t->shape() != e.tensor.shape()) {
            throw FormatError("checkpoint tensor '" + e.name + "' has shape " + shape_str(t->shape()) + ", model expects " + shape_str(e.tensor.shape()));
        }
        plan.emplace_back(t, e.tensor);
    }
    for (auto& [from, to] : plan) copy_into(*from, to);
}

void restore(const Checkpoint& ckpt, Adam& opt, const std::string& tag) {
    std::vector<std::pair<const Tensor*, Tensor>> plan;
    for (const auto& [name, t] : opt.state_tensors()) {
        const Tensor* src = ckpt.find(tag + "." + name);
        if (!src || src->shape() != t.shape()) throw FormatError("checkpoint lacks optimizer state '" + tag + "." + name + "'");
        plan.emplace_back(src, t);
    }
    for (auto& [from, to] : plan) copy_into(*from, to);
    opt.set_step_count(ckpt.counter(tag + ".step"));
}

}  // namespace wvae::cli
