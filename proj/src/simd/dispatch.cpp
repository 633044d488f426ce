#include <cstdlib>
#include <string_view>

#include "fera/simd/kernels.hpp"

namespace fera::simd {

#if defined(FERA_HAVE_AVX2)
extern const KernelTable<float> kAvx2F32;
#endif

const char* isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool cpu_supports_avx2_fma() noexcept {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable<float>* avx2_kernels() noexcept {
#if defined(FERA_HAVE_AVX2)
  static const bool supported = cpu_supports_avx2_fma();
  return supported ? &kAvx2F32 : nullptr;
#else
  return nullptr;
#endif
}

namespace {

bool forced_scalar() noexcept {
  const char* env = std::getenv("FERA_SIMD");
  return env != nullptr && std::string_view(env) == "scalar";
}

}  // namespace

template <>
const KernelTable<float>& active_kernels<float>() noexcept {
  static const KernelTable<float>* table = [] {
    const KernelTable<float>* avx = avx2_kernels();
    return (avx != nullptr && !forced_scalar()) ? avx : &reference_kernels<float>();
  }();
  return *table;
}

template <>
const KernelTable<double>& active_kernels<double>() noexcept {
  return reference_kernels<double>();
}

}  // namespace fera::simd
