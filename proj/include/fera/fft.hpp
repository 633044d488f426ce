#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "fera/field.hpp"
#include "fera/kernel2d.hpp"

namespace fera {

/// Per-channel 2-D spectrum, bins stored like a Field (channel, ky, kx).
struct Spectrum2D {
  Shape shape;
  std::vector<std::complex<double>> bins;

  std::span<const std::complex<double>> channel(std::size_t c) const {
    return std::span<const std::complex<double>>(bins).subspan(c * shape.plane(), shape.plane());
  }
  std::complex<double> at(std::size_t c, std::size_t ky, std::size_t kx) const {
    return bins[(c * shape.height + ky) * shape.width + kx];
  }
};

bool is_power_of_two(std::size_t n) noexcept;

/// In-place radix-2 FFT of one H x W plane. The inverse is scaled by 1/(H*W).
void fft2_plane(std::span<std::complex<double>> plane, std::size_t height, std::size_t width, bool inverse);

/// Forward unnormalised DFT in double precision. Dimensions must be powers of two.
template <class T>
Spectrum2D fft2(const BasicField<T>& x);

/// Inverse transform, real part only.
FieldD ifft2_real(const Spectrum2D& spectrum);

/// Signed frequency of DFT index k along an axis of length n, in cycles per sample.
double dft_frequency(std::size_t k, std::size_t n) noexcept;

/// DFT of a kernel placed circularly (centre tap at the origin) on an H x W grid.
template <class T>
std::vector<std::complex<double>> kernel_transfer(const Kernel2D<T>& k, std::size_t height, std::size_t width);

}  // namespace fera
