// Compiled with -mavx2; only reached when CPUID reports AVX2.
#include <immintrin.h>

#include "flowcascade/simd/kernels.hpp"

namespace flowcascade::simd {
namespace {

void expand_bits_avx2(const std::uint8_t* bytes, std::size_t n_bytes, std::int8_t* cells) {
  // Lane 0 replicates bytes 0 and 1, lane 1 replicates bytes 2 and 3.
  const __m256i spread = _mm256_setr_epi8(0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1,  //
                                          2, 2, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3, 3, 3);
  const __m256i bit_select = _mm256_set1_epi64x(static_cast<long long>(0x0102040810204080ULL));
  const __m256i one = _mm256_set1_epi8(1);

  std::size_t i = 0;
  for (; i + 4 <= n_bytes; i += 4) {
    std::uint32_t word;
    __builtin_memcpy(&word, bytes + i, sizeof(word));
    const __m256i replicated = _mm256_shuffle_epi8(_mm256_set1_epi32(static_cast<int>(word)), spread);
    const __m256i hit = _mm256_cmpeq_epi8(_mm256_and_si256(replicated, bit_select), bit_select);
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(cells + 8 * i), _mm256_and_si256(hit, one));
  }
  for (; i < n_bytes; ++i) {
    const std::uint8_t b = bytes[i];
    for (int bit = 0; bit < 8; ++bit) cells[8 * i + bit] = static_cast<std::int8_t>((b >> (7 - bit)) & 1U);
  }
}

void accumulate_grad_hess_avx2(const std::int8_t* mask, std::size_t n, double g, double h,
                               double* grad_sum, double* hess_sum, std::int32_t* count) {
  const __m256d gv = _mm256_set1_pd(g);
  const __m256d hv = _mm256_set1_pd(h);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    const __m128i m8 = _mm_loadl_epi64(reinterpret_cast<const __m128i*>(mask + j));
    const __m256i m32 = _mm256_cvtepi8_epi32(m8);
    const __m256i c = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(count + j));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(count + j), _mm256_sub_epi32(c, m32));

    const __m256d lo = _mm256_castsi256_pd(_mm256_cvtepi8_epi64(m8));
    const __m256d hi = _mm256_castsi256_pd(_mm256_cvtepi8_epi64(_mm_srli_si128(m8, 4)));
    _mm256_storeu_pd(grad_sum + j, _mm256_add_pd(_mm256_loadu_pd(grad_sum + j), _mm256_and_pd(gv, lo)));
    _mm256_storeu_pd(grad_sum + j + 4, _mm256_add_pd(_mm256_loadu_pd(grad_sum + j + 4), _mm256_and_pd(gv, hi)));
    _mm256_storeu_pd(hess_sum + j, _mm256_add_pd(_mm256_loadu_pd(hess_sum + j), _mm256_and_pd(hv, lo)));
    _mm256_storeu_pd(hess_sum + j + 4, _mm256_add_pd(_mm256_loadu_pd(hess_sum + j + 4), _mm256_and_pd(hv, hi)));
  }
  for (; j < n; ++j) {
    if (mask[j] != 0) {
      grad_sum[j] += g;
      hess_sum[j] += h;
      count[j] += 1;
    }
  }
}

void accumulate_counts_avx2(const std::int8_t* mask, std::size_t n, std::int32_t* count) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    const __m256i m32 = _mm256_cvtepi8_epi32(_mm_loadl_epi64(reinterpret_cast<const __m128i*>(mask + j)));
    const __m256i c = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(count + j));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(count + j), _mm256_sub_epi32(c, m32));
  }
  for (; j < n; ++j) {
    if (mask[j] != 0) count[j] += 1;
  }
}

}  // namespace

namespace detail {
const KernelTable kAvx2Kernels{Isa::Avx2, &expand_bits_avx2, &accumulate_grad_hess_avx2,
                               &accumulate_counts_avx2};
}  // namespace detail

}  // namespace flowcascade::simd
