#include <arm_neon.h>

#include "flowcascade/simd/kernels.hpp"

namespace flowcascade::simd {
namespace {

void expand_bits_neon(const std::uint8_t* bytes, std::size_t n_bytes, std::int8_t* cells) {
  static constexpr std::uint8_t kBits[16] = {0x80, 0x40, 0x20, 0x10, 0x08, 0x04, 0x02, 0x01,
                                             0x80, 0x40, 0x20, 0x10, 0x08, 0x04, 0x02, 0x01};
  const uint8x16_t bit_select = vld1q_u8(kBits);
  const uint8x16_t one = vdupq_n_u8(1);
  std::size_t i = 0;
  for (; i + 2 <= n_bytes; i += 2) {
    const uint8x16_t replicated = vcombine_u8(vdup_n_u8(bytes[i]), vdup_n_u8(bytes[i + 1]));
    const uint8x16_t hit = vandq_u8(vtstq_u8(replicated, bit_select), one);
    vst1q_s8(cells + 8 * i, vreinterpretq_s8_u8(hit));
  }
  for (; i < n_bytes; ++i) {
    const std::uint8_t b = bytes[i];
    for (int bit = 0; bit < 8; ++bit) cells[8 * i + bit] = static_cast<std::int8_t>((b >> (7 - bit)) & 1U);
  }
}

inline float64x2_t masked(float64x2_t v, int64x2_t m) {
  return vreinterpretq_f64_u64(vandq_u64(vreinterpretq_u64_f64(v), vreinterpretq_u64_s64(m)));
}

void accumulate_grad_hess_neon(const std::int8_t* mask, std::size_t n, double g, double h,
                               double* grad_sum, double* hess_sum, std::int32_t* count) {
  const float64x2_t gv = vdupq_n_f64(g);
  const float64x2_t hv = vdupq_n_f64(h);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    const int16x8_t m16 = vmovl_s8(vld1_s8(mask + j));
    const int32x4_t m32[2] = {vmovl_s16(vget_low_s16(m16)), vmovl_s16(vget_high_s16(m16))};
    for (int half = 0; half < 2; ++half) {
      std::int32_t* c = count + j + 4 * half;
      vst1q_s32(c, vsubq_s32(vld1q_s32(c), m32[half]));
      const int64x2_t m64[2] = {vmovl_s32(vget_low_s32(m32[half])), vmovl_s32(vget_high_s32(m32[half]))};
      for (int q = 0; q < 2; ++q) {
        double* gs = grad_sum + j + 4 * half + 2 * q;
        double* hs = hess_sum + j + 4 * half + 2 * q;
        vst1q_f64(gs, vaddq_f64(vld1q_f64(gs), masked(gv, m64[q])));
        vst1q_f64(hs, vaddq_f64(vld1q_f64(hs), masked(hv, m64[q])));
      }
    }
  }
  for (; j < n; ++j) {
    if (mask[j] != 0) {
      grad_sum[j] += g;
      hess_sum[j] += h;
      count[j] += 1;
    }
  }
}

void accumulate_counts_neon(const std::int8_t* mask, std::size_t n, std::int32_t* count) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    const int16x8_t m16 = vmovl_s8(vld1_s8(mask + j));
    vst1q_s32(count + j, vsubq_s32(vld1q_s32(count + j), vmovl_s16(vget_low_s16(m16))));
    vst1q_s32(count + j + 4, vsubq_s32(vld1q_s32(count + j + 4), vmovl_s16(vget_high_s16(m16))));
  }
  for (; j < n; ++j) {
    if (mask[j] != 0) count[j] += 1;
  }
}

}  // namespace

namespace detail {
const KernelTable kNeonKernels{Isa::Neon, &expand_bits_neon, &accumulate_grad_hess_neon,
                               &accumulate_counts_neon};
}  // namespace detail

}  // namespace flowcascade::simd
