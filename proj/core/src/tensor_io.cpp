#include "wavevae/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "wavevae/error.hpp"

namespace wvae {

namespace {

constexpr char kMagic[4] = {'W', 'G', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("WGT1: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
    os.write(kMagic, 4);
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_u32(os, static_cast<std::uint32_t>(e));
    for (float v : t.values()) put_u32(os, std::bit_cast<std::uint32_t>(v));
    if (!os) throw FormatError("WGT1: write failed");
}

Tensor read_tensor(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4)) throw FormatError("WGT1: missing magic bytes");
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("WGT1: bad magic bytes");
    const std::uint32_t rank = get_u32(is);
    if (rank > 8) throw FormatError("WGT1: implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::int64_t n = 1;
    for (auto& e : shape) {
        e = get_u32(is);
        if (e == 0) throw FormatError("WGT1: zero extent");
        n *= e;
        if (n > (std::int64_t{1} << 32)) throw FormatError("WGT1: payload too large");
    }
    std::vector<float> data(static_cast<std::size_t>(n));
    std::vector<unsigned char> raw(data.size() * 4);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw FormatError("WGT1: truncated payload");
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        const unsigned char* b = raw.data() + 4 * i;
        const std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                                (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
        data[i] = std::bit_cast<float>(u);
    }
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    write_tensor(os, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    return read_tensor(is);
}

}  // namespace wvae
