#pragma once

// Data-parallel inner loops shared by the codec and the tree trainers.
//
// Every kernel has a scalar reference implementation and optional
// vectorized variants (AVX2 on x86-64, NEON on AArch64). The variant is
// picked once at startup from CPUID / the target architecture and can be
// forced back to scalar with FLOWCASCADE_SIMD=scalar. Variants vectorize
// across features, never across samples, so per-feature accumulation order
// is identical and results are bit-identical to the scalar reference.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace flowcascade::simd {

enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
  Isa isa;

  // Expands n_bytes bytes into 8 * n_bytes cells of value 0/1, most
  // significant bit first.
  void (*expand_bits)(const std::uint8_t* bytes, std::size_t n_bytes, std::int8_t* cells);

  // For every j with mask[j] != 0: grad_sum[j] += g, hess_sum[j] += h,
  // count[j] += 1. mask entries are 0 or -1 (all bits set).
  void (*accumulate_grad_hess)(const std::int8_t* mask, std::size_t n, double g, double h,
                               double* grad_sum, double* hess_sum, std::int32_t* count);

  // For every j with mask[j] != 0: count[j] += 1.
  void (*accumulate_counts)(const std::int8_t* mask, std::size_t n, std::int32_t* count);
};

std::string_view isa_name(Isa isa) noexcept;

bool isa_available(Isa isa) noexcept;

std::vector<Isa> available_isas();

// Table for a specific ISA; throws std::invalid_argument if unavailable on this host.
const KernelTable& kernels_for(Isa isa);

// Table selected at startup.
const KernelTable& kernels();

namespace detail {
extern const KernelTable kScalarKernels;
#if defined(__x86_64__) || defined(_M_X64)
extern const KernelTable kAvx2Kernels;
#endif
#if defined(__aarch64__)
extern const KernelTable kNeonKernels;
#endif
}  // namespace detail

}  // namespace flowcascade::simd
