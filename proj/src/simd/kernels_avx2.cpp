// AVX2 + FMA variants of the float kernels. This translation unit is built
// with -mavx2 -mfma and must only be entered after a CPUID check.

#include <immintrin.h>

#include <cstddef>

#include "fera/simd/kernels.hpp"

namespace fera::simd {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehdup_ps(lo);
  lo = _mm_add_ps(lo, sh);
  sh = _mm_movehl_ps(sh, lo);
  lo = _mm_add_ss(lo, sh);
  return _mm_cvtss_f32(lo);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// Accumulates Blocks x 8 consecutive outputs of one output row over all input
// channels and taps, keeping the partial sums in registers.
template <int Blocks>
inline void conv3x3_row_block(const float* xpad, std::size_t cin, std::size_t pw, std::size_t pplane,
                              const float* w_o, std::size_t y, std::size_t x0, float* dst) {
  __m256 acc[Blocks];
  for (int b = 0; b < Blocks; ++b) acc[b] = _mm256_setzero_ps();
  for (std::size_t i = 0; i < cin; ++i) {
    const float* src = xpad + i * pplane + y * pw + x0;
    const float* wk = w_o + i * 9;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      const float* srow = src + ky * pw;
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const __m256 wv = _mm256_broadcast_ss(wk + ky * 3 + kx);
        for (int b = 0; b < Blocks; ++b) {
          acc[b] = _mm256_fmadd_ps(wv, _mm256_loadu_ps(srow + kx + 8 * b), acc[b]);
        }
      }
    }
  }
  for (int b = 0; b < Blocks; ++b) _mm256_storeu_ps(dst + x0 + 8 * b, acc[b]);
}

void conv3x3_avx2(const float* xpad, std::size_t cin, std::size_t height, std::size_t width, const float* w,
                  std::size_t cout, float* out) {
  const std::size_t pw = width + 2;
  const std::size_t pplane = (height + 2) * pw;
  for (std::size_t o = 0; o < cout; ++o) {
    const float* w_o = w + o * cin * 9;
    for (std::size_t y = 0; y < height; ++y) {
      float* dst = out + (o * height + y) * width;
      std::size_t x0 = 0;
      for (; x0 + 32 <= width; x0 += 32) conv3x3_row_block<4>(xpad, cin, pw, pplane, w_o, y, x0, dst);
      for (; x0 + 8 <= width; x0 += 8) conv3x3_row_block<1>(xpad, cin, pw, pplane, w_o, y, x0, dst);
      for (std::size_t x = x0; x < width; ++x) {
        float acc = 0.0f;
        for (std::size_t i = 0; i < cin; ++i) {
          const float* src = xpad + i * pplane + y * pw + x;
          const float* wk = w_o + i * 9;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) acc += wk[ky * 3 + kx] * src[ky * pw + kx];
          }
        }
        dst[x] = acc;
      }
    }
  }
}

void conv3x3_weight_grad_avx2(const float* xpad, const float* dy, std::size_t cin, std::size_t height,
                              std::size_t width, std::size_t cout, float* dw) {
  const std::size_t pw = width + 2;
  const std::size_t pplane = (height + 2) * pw;
  for (std::size_t o = 0; o < cout; ++o) {
    const float* g = dy + o * height * width;
    for (std::size_t i = 0; i < cin; ++i) {
      const float* src = xpad + i * pplane;
      __m256 acc[9];
      float tail[9] = {};
      for (auto& a : acc) a = _mm256_setzero_ps();
      for (std::size_t y = 0; y < height; ++y) {
        const float* grow = g + y * width;
        std::size_t x = 0;
        for (; x + 8 <= width; x += 8) {
          const __m256 gv = _mm256_loadu_ps(grow + x);
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const float* srow = src + (y + ky) * pw + x;
            acc[ky * 3 + 0] = _mm256_fmadd_ps(gv, _mm256_loadu_ps(srow + 0), acc[ky * 3 + 0]);
            acc[ky * 3 + 1] = _mm256_fmadd_ps(gv, _mm256_loadu_ps(srow + 1), acc[ky * 3 + 1]);
            acc[ky * 3 + 2] = _mm256_fmadd_ps(gv, _mm256_loadu_ps(srow + 2), acc[ky * 3 + 2]);
          }
        }
        for (; x < width; ++x) {
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const float* srow = src + (y + ky) * pw + x;
            for (std::size_t kx = 0; kx < 3; ++kx) tail[ky * 3 + kx] += grow[x] * srow[kx];
          }
        }
      }
      float* d = dw + (o * cin + i) * 9;
      for (std::size_t k = 0; k < 9; ++k) d[k] += hsum(acc[k]) + tail[k];
    }
  }
}

void correlate2d_avx2(const float* xpad, std::size_t height, std::size_t width, const float* taps, std::size_t k,
                      float* out) {
  const std::size_t pw = width + k - 1;
  for (std::size_t y = 0; y < height; ++y) {
    float* row = out + y * width;
    std::size_t x = 0;
    for (; x + 8 <= width; x += 8) {
      __m256 acc = _mm256_setzero_ps();
      for (std::size_t a = 0; a < k; ++a) {
        const float* srow = xpad + (y + a) * pw + x;
        for (std::size_t b = 0; b < k; ++b) {
          acc = _mm256_fmadd_ps(_mm256_broadcast_ss(taps + a * k + b), _mm256_loadu_ps(srow + b), acc);
        }
      }
      _mm256_storeu_ps(row + x, acc);
    }
    for (; x < width; ++x) {
      float acc = 0.0f;
      for (std::size_t a = 0; a < k; ++a) {
        const float* srow = xpad + (y + a) * pw + x;
        for (std::size_t b = 0; b < k; ++b) acc += taps[a * k + b] * srow[b];
      }
      row[x] = acc;
    }
  }
}

double dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 av = _mm256_loadu_ps(a + i);
    const __m256 bv = _mm256_loadu_ps(b + i);
    acc0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(av)),
                           _mm256_cvtps_pd(_mm256_castps256_ps128(bv)), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(av, 1)),
                           _mm256_cvtps_pd(_mm256_extractf128_ps(bv, 1)), acc1);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

extern const KernelTable<float> kAvx2F32;
const KernelTable<float> kAvx2F32{Isa::avx2,        &conv3x3_avx2, &conv3x3_weight_grad_avx2,
                                  &correlate2d_avx2, &dot_avx2,     &axpy_avx2};

}  // namespace fera::simd
