#include <cstdlib>
#include <stdexcept>
#include <string>

#include "flowcascade/simd/kernels.hpp"

namespace flowcascade::simd {

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
    if (isa_available(isa)) out.push_back(isa);
  }
  return out;
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_available(isa)) {
    throw std::invalid_argument("SIMD kernels not available on this host: " + std::string(isa_name(isa)));
  }
  switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::Avx2: return detail::kAvx2Kernels;
#endif
#if defined(__aarch64__)
    case Isa::Neon: return detail::kNeonKernels;
#endif
    default: return detail::kScalarKernels;
  }
}

namespace {

const KernelTable& select() {
  if (const char* env = std::getenv("FLOWCASCADE_SIMD"); env != nullptr && std::string(env) == "scalar") {
    return detail::kScalarKernels;
  }
  if (isa_available(Isa::Avx2)) return kernels_for(Isa::Avx2);
  if (isa_available(Isa::Neon)) return kernels_for(Isa::Neon);
  return detail::kScalarKernels;
}

}  // namespace

const KernelTable& kernels() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace flowcascade::simd
