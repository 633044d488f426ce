#include "fera/fft.hpp"

#include <cmath>
#include <numbers>

#include "fera/errors.hpp"

namespace fera {

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

double dft_frequency(std::size_t k, std::size_t n) noexcept {
  const auto kk = static_cast<double>(k);
  const auto nn = static_cast<double>(n);
  return (2 * k < n) ? kk / nn : (kk - nn) / nn;
}

namespace {

void fft1d(std::complex<double>* data, std::size_t n, std::size_t stride, bool inverse) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i * stride], data[j * stride]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Twiddles evaluated directly to keep the oracle accurate at 1e-12.
        const std::complex<double> w(std::cos(angle * static_cast<double>(k)),
                                     std::sin(angle * static_cast<double>(k)));
        auto& a = data[(start + k) * stride];
        auto& b = data[(start + k + len / 2) * stride];
        const std::complex<double> u = a;
        const std::complex<double> v = b * w;
        a = u + v;
        b = u - v;
      }
    }
  }
}

}  // namespace

void fft2_plane(std::span<std::complex<double>> plane, std::size_t height, std::size_t width, bool inverse) {
  if (!is_power_of_two(height) || !is_power_of_two(width)) {
    throw UnsupportedShapeError("fft2 needs power-of-two dimensions, got " + std::to_string(height) + "x" +
                                std::to_string(width));
  }
  if (plane.size() != height * width) throw ShapeError("fft2 plane size mismatch");
  for (std::size_t y = 0; y < height; ++y) fft1d(plane.data() + y * width, width, 1, inverse);
  for (std::size_t x = 0; x < width; ++x) fft1d(plane.data() + x, height, width, inverse);
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(height * width);
    for (auto& v : plane) v *= scale;
  }
}

template <class T>
Spectrum2D fft2(const BasicField<T>& x) {
  Spectrum2D s{x.shape(), std::vector<std::complex<double>>(x.size())};
  if (!is_power_of_two(x.height()) || !is_power_of_two(x.width())) {
    throw UnsupportedShapeError("fft2 needs power-of-two dimensions, got " + x.shape().to_string());
  }
  auto src = x.data();
  for (std::size_t i = 0; i < src.size(); ++i) s.bins[i] = static_cast<double>(src[i]);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    fft2_plane(std::span(s.bins).subspan(c * x.shape().plane(), x.shape().plane()), x.height(), x.width(), false);
  }
  return s;
}

FieldD ifft2_real(const Spectrum2D& spectrum) {
  std::vector<std::complex<double>> bins = spectrum.bins;
  const Shape& sh = spectrum.shape;
  for (std::size_t c = 0; c < sh.channels; ++c) {
    fft2_plane(std::span(bins).subspan(c * sh.plane(), sh.plane()), sh.height, sh.width, true);
  }
  FieldD out(sh);
  for (std::size_t i = 0; i < bins.size(); ++i) out.data()[i] = bins[i].real();
  return out;
}

template <class T>
std::vector<std::complex<double>> kernel_transfer(const Kernel2D<T>& k, std::size_t height, std::size_t width) {
  if (k.size > height || k.size > width) throw ShapeError("kernel larger than transfer grid");
  std::vector<std::complex<double>> grid(height * width);
  const std::size_t r = k.radius();
  for (std::size_t a = 0; a < k.size; ++a) {
    for (std::size_t b = 0; b < k.size; ++b) {
      const std::size_t y = (a + height - r) % height;
      const std::size_t x = (b + width - r) % width;
      grid[y * width + x] += static_cast<double>(k.tap(a, b));
    }
  }
  fft2_plane(grid, height, width, false);
  return grid;
}

template Spectrum2D fft2<float>(const BasicField<float>&);
template Spectrum2D fft2<double>(const BasicField<double>&);
template std::vector<std::complex<double>> kernel_transfer<float>(const Kernel2D<float>&, std::size_t, std::size_t);
template std::vector<std::complex<double>> kernel_transfer<double>(const Kernel2D<double>&, std::size_t,
                                                                   std::size_t);

}  // namespace fera
