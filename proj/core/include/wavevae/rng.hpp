#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "wavevae/tensor.hpp"

namespace wvae {

// Seeded stream of uniform and normal variates. The engine is the standard
// 64-bit Mersenne twister, whose output sequence is fixed by the C++
// standard; conversions to floating point are done here so results do not
// depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    double uniform();                    // [0, 1)
    double uniform(double lo, double hi);
    std::uint64_t below(std::uint64_t n);  // [0, n), n > 0
    double normal();                     // Box-Muller

    // Engine state as text; restore() accepts what state() produced.
    std::string state() const;
    void restore(const std::string& text);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

Tensor sample_normal(Rng& rng, Shape shape);
Tensor sample_uniform(Rng& rng, Shape shape, float lo, float hi);

}  // namespace wvae
