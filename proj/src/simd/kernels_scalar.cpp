#include "flowcascade/simd/kernels.hpp"

namespace flowcascade::simd {
namespace {

void expand_bits_scalar(const std::uint8_t* bytes, std::size_t n_bytes, std::int8_t* cells) {
  for (std::size_t i = 0; i < n_bytes; ++i) {
    const std::uint8_t b = bytes[i];
    for (int bit = 0; bit < 8; ++bit) {
      cells[8 * i + bit] = static_cast<std::int8_t>((b >> (7 - bit)) & 1U);
    }
  }
}

void accumulate_grad_hess_scalar(const std::int8_t* mask, std::size_t n, double g, double h,
                                 double* grad_sum, double* hess_sum, std::int32_t* count) {
  for (std::size_t j = 0; j < n; ++j) {
    if (mask[j] != 0) {
      grad_sum[j] += g;
      hess_sum[j] += h;
      count[j] += 1;
    }
  }
}

void accumulate_counts_scalar(const std::int8_t* mask, std::size_t n, std::int32_t* count) {
  for (std::size_t j = 0; j < n; ++j) {
    if (mask[j] != 0) count[j] += 1;
  }
}

}  // namespace

namespace detail {
const KernelTable kScalarKernels{Isa::Scalar, &expand_bits_scalar, &accumulate_grad_hess_scalar,
                                 &accumulate_counts_scalar};
}  // namespace detail

}  // namespace flowcascade::simd
