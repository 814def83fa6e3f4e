#pragma once

#include <filesystem>
#include <iosfwd>

#include "wavevae/tensor.hpp"

namespace wvae {

// Raw tensor format: "WGT1", u32 rank, rank x u32 extents, then row-major
// f32 payload. All integers and floats little-endian.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace wvae
