#pragma once

#include "wavevae/tensor.hpp"

#include <cstdint>
#include <vector>

namespace wvae::detail {

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
    // Position of the producing op on the tape, or -1 for leaves.
    std::int64_t tape_index = -1;
    std::uint64_t tape_generation = 0;
};

void check_finite(std::string_view op, const std::vector<float>& data);

// C[M,N] = op(A)[M,K] * op(B)[K,N] + beta * C, row-major single precision.
void gemm(bool trans_a, bool trans_b, std::int64_t M, std::int64_t N, std::int64_t K, const float* A, const float* B,
          float beta, float* C);

}  // namespace wvae::detail
