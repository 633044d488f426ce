#include "fera/kernel2d.hpp"

#include <algorithm>
#include <cmath>

#include "fera/errors.hpp"
#include "fera/simd/kernels.hpp"

namespace fera {

template <class T>
double Kernel2D<T>::tap_sum() const {
  double s = 0.0;
  for (T v : taps) s += static_cast<double>(v);
  return s;
}

std::size_t gaussian_kernel_size(double sigma, std::size_t height, std::size_t width) {
  if (!(sigma > 0.0)) throw DomainError("gaussian sigma must be positive");
  auto size = static_cast<std::size_t>(std::ceil(6.0 * sigma + 1.0));
  if (size % 2 == 0) ++size;
  size = std::max<std::size_t>(size, 3);
  std::size_t limit = std::min(height, width);
  if (limit % 2 == 0) --limit;
  if (limit < 3) throw ShapeError("field too small for a 3x3 kernel");
  return std::min(size, limit);
}

template <class T>
Kernel2D<T> gaussian_kernel(double sigma, std::size_t size) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("gaussian sigma must be positive and finite");
  if (size < 3 || size % 2 == 0) throw DomainError("gaussian kernel size must be odd and >= 3");
  const auto r = static_cast<double>(size / 2);
  std::vector<double> taps(size * size);
  double total = 0.0;
  for (std::size_t a = 0; a < size; ++a) {
    for (std::size_t b = 0; b < size; ++b) {
      const double dy = static_cast<double>(a) - r;
      const double dx = static_cast<double>(b) - r;
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      taps[a * size + b] = v;
      total += v;
    }
  }
  Kernel2D<T> k;
  k.size = size;
  k.taps.resize(size * size);
  for (std::size_t i = 0; i < taps.size(); ++i) k.taps[i] = static_cast<T>(taps[i] / total);
  return k;
}

template <class T>
Kernel2D<T> identity_kernel(std::size_t size) {
  if (size % 2 == 0) throw DomainError("kernel size must be odd");
  Kernel2D<T> k;
  k.size = size;
  k.taps.assign(size * size, T{0});
  k.taps[(size / 2) * size + size / 2] = T{1};
  return k;
}

template <class T>
std::vector<T> pad_circular(const T* planes, std::size_t count, std::size_t height, std::size_t width,
                            std::size_t radius) {
  const std::size_t ph = height + 2 * radius;
  const std::size_t pw = width + 2 * radius;
  std::vector<T> out(count * ph * pw);
  for (std::size_t c = 0; c < count; ++c) {
    const T* src = planes + c * height * width;
    T* dst = out.data() + c * ph * pw;
    for (std::size_t py = 0; py < ph; ++py) {
      const std::size_t y = (py + height * (radius / height + 1) - radius) % height;
      const T* srow = src + y * width;
      T* drow = dst + py * pw;
      for (std::size_t px = 0; px < pw; ++px) {
        drow[px] = srow[(px + width * (radius / width + 1) - radius) % width];
      }
    }
  }
  return out;
}

namespace {

template <class T>
BasicField<T> correlate_planes(const BasicField<T>& x, const std::vector<T>& taps, std::size_t k) {
  if (k > std::min(x.height(), x.width())) {
    throw ShapeError("kernel of size " + std::to_string(k) + " exceeds field " + x.shape().to_string());
  }
  const std::size_t r = k / 2;
  const auto& kt = simd::active_kernels<T>();
  BasicField<T> out(x.shape());
  std::vector<T> padded = pad_circular(x.data().data(), x.channels(), x.height(), x.width(), r);
  const std::size_t pplane = (x.height() + 2 * r) * (x.width() + 2 * r);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    kt.correlate2d(padded.data() + c * pplane, x.height(), x.width(), taps.data(), k, out.channel(c).data());
  }
  return out;
}

}  // namespace

template <class T>
BasicField<T> conv_depthwise(const BasicField<T>& x, const Kernel2D<T>& k) {
  std::vector<T> flipped(k.taps.rbegin(), k.taps.rend());
  return correlate_planes(x, flipped, k.size);
}

template <class T>
BasicField<T> conv_depthwise_adjoint(const BasicField<T>& g, const Kernel2D<T>& k) {
  return correlate_planes(g, k.taps, k.size);
}

template <class T>
BasicField<T> conv3x3(const BasicField<T>& x, const std::vector<T>& weights, std::size_t cout) {
  if (weights.size() != cout * x.channels() * 9) throw ShapeError("conv3x3 weight count mismatch");
  if (x.height() < 3 || x.width() < 3) throw ShapeError("conv3x3 needs a field of at least 3x3");
  std::vector<T> padded = pad_circular(x.data().data(), x.channels(), x.height(), x.width(), 1);
  BasicField<T> out(Shape{cout, x.height(), x.width()});
  simd::active_kernels<T>().conv3x3(padded.data(), x.channels(), x.height(), x.width(), weights.data(), cout,
                                    out.data().data());
  return out;
}

#define FERA_INSTANTIATE_KERNEL(T)                                                                        \
  template struct Kernel2D<T>;                                                                            \
  template Kernel2D<T> gaussian_kernel<T>(double, std::size_t);                                           \
  template Kernel2D<T> identity_kernel<T>(std::size_t);                                                   \
  template std::vector<T> pad_circular<T>(const T*, std::size_t, std::size_t, std::size_t, std::size_t); \
  template BasicField<T> conv_depthwise<T>(const BasicField<T>&, const Kernel2D<T>&);                     \
  template BasicField<T> conv_depthwise_adjoint<T>(const BasicField<T>&, const Kernel2D<T>&);             \
  template BasicField<T> conv3x3<T>(const BasicField<T>&, const std::vector<T>&, std::size_t);

FERA_INSTANTIATE_KERNEL(float)
FERA_INSTANTIATE_KERNEL(double)

}  // namespace fera
