#pragma once

// Inner-loop kernels behind the convolution and reduction primitives.
//
// Every kernel has a portable scalar reference (float and double) and, for
// float, an AVX2/FMA variant. The variant is picked once at runtime from
// CPUID; FERA_SIMD=scalar forces the reference table.

#include <cstddef>

namespace fera::simd {

enum class Isa { scalar, avx2 };

const char* isa_name(Isa isa) noexcept;

template <class T>
struct KernelTable {
  Isa isa;

  // out[o,y,x] = sum_i sum_{ky,kx} w[((o*cin + i)*3 + ky)*3 + kx] * xpad[i, y+ky, x+kx]
  // xpad holds cin planes of (height+2) x (width+2); out holds cout planes of height x width.
  void (*conv3x3)(const T* xpad, std::size_t cin, std::size_t height, std::size_t width, const T* w,
                  std::size_t cout, T* out);

  // dw[((o*cin + i)*3 + ky)*3 + kx] += sum_{y,x} dy[o,y,x] * xpad[i, y+ky, x+kx]
  void (*conv3x3_weight_grad)(const T* xpad, const T* dy, std::size_t cin, std::size_t height,
                              std::size_t width, std::size_t cout, T* dw);

  // out[y,x] = sum_{a,b} taps[a*k + b] * xpad[y+a, x+b]; xpad is (height+k-1) x (width+k-1).
  void (*correlate2d)(const T* xpad, std::size_t height, std::size_t width, const T* taps, std::size_t k,
                      T* out);

  // Accumulates in double regardless of T.
  double (*dot)(const T* a, const T* b, std::size_t n);

  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
};

template <class T>
const KernelTable<T>& reference_kernels() noexcept;

/// The AVX2 table if it was compiled in and the CPU supports AVX2+FMA, else nullptr.
const KernelTable<float>* avx2_kernels() noexcept;

bool cpu_supports_avx2_fma() noexcept;

/// Table used by the library. For double this is always the reference table.
template <class T>
const KernelTable<T>& active_kernels() noexcept;

}  // namespace fera::simd
