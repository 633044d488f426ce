#include <cstddef>

#include "fera/simd/kernels.hpp"

namespace fera::simd {
namespace {

template <class T>
void conv3x3_ref(const T* xpad, std::size_t cin, std::size_t height, std::size_t width, const T* w,
                 std::size_t cout, T* out) {
  const std::size_t pw = width + 2;
  const std::size_t pplane = (height + 2) * pw;
  for (std::size_t o = 0; o < cout; ++o) {
    T* dst = out + o * height * width;
    for (std::size_t i = 0; i < height * width; ++i) dst[i] = T{0};
    for (std::size_t i = 0; i < cin; ++i) {
      const T* src = xpad + i * pplane;
      const T* wk = w + (o * cin + i) * 9;
      for (std::size_t y = 0; y < height; ++y) {
        T* row = dst + y * width;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const T* srow = src + (y + ky) * pw;
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const T wv = wk[ky * 3 + kx];
            for (std::size_t x = 0; x < width; ++x) row[x] += wv * srow[x + kx];
          }
        }
      }
    }
  }
}

template <class T>
void conv3x3_weight_grad_ref(const T* xpad, const T* dy, std::size_t cin, std::size_t height,
                             std::size_t width, std::size_t cout, T* dw) {
  const std::size_t pw = width + 2;
  const std::size_t pplane = (height + 2) * pw;
  for (std::size_t o = 0; o < cout; ++o) {
    const T* g = dy + o * height * width;
    for (std::size_t i = 0; i < cin; ++i) {
      const T* src = xpad + i * pplane;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          T acc{0};
          for (std::size_t y = 0; y < height; ++y) {
            const T* srow = src + (y + ky) * pw + kx;
            const T* grow = g + y * width;
            for (std::size_t x = 0; x < width; ++x) acc += grow[x] * srow[x];
          }
          dw[((o * cin + i) * 3 + ky) * 3 + kx] += acc;
        }
      }
    }
  }
}

template <class T>
void correlate2d_ref(const T* xpad, std::size_t height, std::size_t width, const T* taps, std::size_t k,
                     T* out) {
  const std::size_t pw = width + k - 1;
  for (std::size_t y = 0; y < height; ++y) {
    T* row = out + y * width;
    for (std::size_t x = 0; x < width; ++x) row[x] = T{0};
    for (std::size_t a = 0; a < k; ++a) {
      const T* srow = xpad + (y + a) * pw;
      for (std::size_t b = 0; b < k; ++b) {
        const T tv = taps[a * k + b];
        for (std::size_t x = 0; x < width; ++x) row[x] += tv * srow[x + b];
      }
    }
  }
}

template <class T>
double dot_ref(const T* a, const T* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <class T>
void axpy_ref(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
constexpr KernelTable<T> make_reference() {
  return KernelTable<T>{Isa::scalar,         &conv3x3_ref<T>, &conv3x3_weight_grad_ref<T>,
                        &correlate2d_ref<T>, &dot_ref<T>,     &axpy_ref<T>};
}

constexpr KernelTable<float> kReferenceF32 = make_reference<float>();
constexpr KernelTable<double> kReferenceF64 = make_reference<double>();

}  // namespace

template <>
const KernelTable<float>& reference_kernels<float>() noexcept {
  return kReferenceF32;
}

template <>
const KernelTable<double>& reference_kernels<double>() noexcept {
  return kReferenceF64;
}

}  // namespace fera::simd
