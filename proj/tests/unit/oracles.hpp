#pragma once

// Independent reference computations used as test oracles. Everything here is
// written the slow, obvious way in double precision.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "fera/fft.hpp"
#include "fera/field.hpp"
#include "fera/kernel2d.hpp"
#include "fera/rng.hpp"
#include "fera/spectrum.hpp"

namespace oracle {

using cd = std::complex<double>;

/// Naive O(N^2) 2-D DFT of one plane.
inline std::vector<cd> dft2(const std::vector<double>& x, std::size_t h, std::size_t w) {
  std::vector<cd> out(h * w);
  for (std::size_t ky = 0; ky < h; ++ky)
    for (std::size_t kx = 0; kx < w; ++kx) {
      cd acc = 0.0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) {
          const double ph = -2.0 * std::numbers::pi *
                            (static_cast<double>(ky * y) / static_cast<double>(h) +
                             static_cast<double>(kx * xx) / static_cast<double>(w));
          acc += x[y * w + xx] * cd(std::cos(ph), std::sin(ph));
        }
      out[ky * w + kx] = acc;
    }
  return out;
}

/// Direct circular convolution of every channel with a centred kernel.
template <class T>
fera::FieldD circular_conv(const fera::BasicField<T>& x, const fera::Kernel2D<T>& k) {
  fera::FieldD out(x.shape());
  const long r = static_cast<long>(k.radius());
  const long h = static_cast<long>(x.height()), w = static_cast<long>(x.width());
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (long y = 0; y < h; ++y)
      for (long xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (long a = -r; a <= r; ++a)
          for (long b = -r; b <= r; ++b) {
            const long yy = ((y - a) % h + h) % h, xs = ((xx - b) % w + w) % w;
            acc += static_cast<double>(k.tap(static_cast<std::size_t>(a + r), static_cast<std::size_t>(b + r))) *
                   static_cast<double>(x.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xs)));
          }
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(xx)) = acc;
      }
  return out;
}

/// Direct multi-channel 3x3 cross-correlation with circular padding.
template <class T>
fera::FieldD conv3x3(const fera::BasicField<T>& x, const std::vector<T>& wts, std::size_t cout) {
  const std::size_t cin = x.channels(), h = x.height(), w = x.width();
  fera::FieldD out(fera::Shape{cout, h, w});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (std::size_t i = 0; i < cin; ++i)
          for (std::size_t ky = 0; ky < 3; ++ky)
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const std::size_t yy = (y + ky + h - 1) % h, xs = (xx + kx + w - 1) % w;
              acc += static_cast<double>(wts[((o * cin + i) * 3 + ky) * 3 + kx]) * static_cast<double>(x.at(i, yy, xs));
            }
        out.at(o, y, xx) = acc;
      }
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& z, double tau) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += p[i] = std::exp((z[i] - mx) / tau);
  for (double& v : p) v /= s;
  return p;
}

template <class T = float>
fera::BasicField<T> random_field(fera::Shape shape, std::uint64_t seed, double stddev = 1.0) {
  fera::CounterRng rng(seed, 0x7e57, 0);
  fera::BasicField<T> f(shape);
  rng.fill_gaussian(f.data(), stddev);
  return f;
}

/// Per-band transfer functions of the decomposition, built from the kernels' DFTs.
inline std::vector<std::vector<std::complex<double>>> band_transfers(const fera::FilterBank& bank, std::size_t h, std::size_t w) {
  const auto kernels = bank.kernels<double>(h, w);
  std::vector<std::vector<std::complex<double>>> g;
  for (const auto& k : kernels) g.push_back(fera::kernel_transfer(k, h, w));
  std::vector<std::vector<std::complex<double>>> out(bank.n_bands, std::vector<std::complex<double>>(h * w));
  for (std::size_t i = 0; i < h * w; ++i) {
    out[0][i] = g[0][i];
    for (std::size_t k = 1; k + 1 < bank.n_bands; ++k) out[k][i] = g[k][i] - g[k - 1][i];
    out[bank.n_bands - 1][i] = 1.0 - g.back()[i];
  }
  return out;
}

}  // namespace oracle
