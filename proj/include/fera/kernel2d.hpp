#pragma once

#include <cstddef>
#include <vector>

#include "fera/field.hpp"

namespace fera {

/// Square odd-sized 2-D filter; taps stored row-major, centre at (size/2, size/2).
template <class T>
struct Kernel2D {
  std::size_t size = 1;
  std::vector<T> taps{T{1}};

  std::size_t radius() const noexcept { return size / 2; }
  T tap(std::size_t row, std::size_t col) const { return taps[row * size + col]; }
  double tap_sum() const;
};

/// Smallest odd size >= 6*sigma + 1 (at least 3), clamped to the largest odd value <= min(height, width).
std::size_t gaussian_kernel_size(double sigma, std::size_t height, std::size_t width);

/// Sampled isotropic Gaussian, renormalised so the taps sum to one.
template <class T>
Kernel2D<T> gaussian_kernel(double sigma, std::size_t size);

template <class T>
Kernel2D<T> identity_kernel(std::size_t size = 1);

/// Circular (periodic) depth-wise convolution; output has the shape of x.
template <class T>
BasicField<T> conv_depthwise(const BasicField<T>& x, const Kernel2D<T>& k);

/// Adjoint of conv_depthwise (circular correlation with the same taps).
template <class T>
BasicField<T> conv_depthwise_adjoint(const BasicField<T>& g, const Kernel2D<T>& k);

/// Copies each plane into a circularly padded (h+2r) x (w+2r) plane.
template <class T>
std::vector<T> pad_circular(const T* planes, std::size_t count, std::size_t height, std::size_t width,
                            std::size_t radius);

/// Multi-channel 3x3 cross-correlation with circular padding, no bias.
/// weights has cout*cin*9 entries laid out [o][i][ky][kx].
template <class T>
BasicField<T> conv3x3(const BasicField<T>& x, const std::vector<T>& weights, std::size_t cout);

}  // namespace fera
