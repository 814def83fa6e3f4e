#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "wavevae/nn.hpp"
#include "wavevae/tensor.hpp"

namespace wvae::cli {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "WGC1", u32 version, u64 manifest length, manifest text, then one WGT1
// tensor per manifest "tensor" line in the same order.
struct Checkpoint {
    std::string config_text;
    std::string config_hash;
    int epoch = 0;
    std::int64_t step = 0;
    std::string rng_state;
    std::vector<std::pair<std::string, std::int64_t>> counters;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
    std::int64_t counter(const std::string& name, std::int64_t fallback = 0) const;
};

// Writes to a sibling temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Reads and validates the whole file before returning.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Every store entry under its own name; Adam moments under "<tag>.<param>.m/.v"
// plus the step count as counter "<tag>.step".
void capture(Checkpoint& ckpt, const ParamStore& store);
void capture(Checkpoint& ckpt, const Adam& opt, const std::string& tag);

// Copy checkpoint values into live tensors. Every store entry must be present
// with the same shape (FormatError otherwise); nothing is written unless all match.
void restore(const Checkpoint& ckpt, ParamStore& store);
void restore(const Checkpoint& ckpt, Adam& opt, const std::string& tag);

}  // namespace wvae::cli
