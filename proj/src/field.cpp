#include "fera/field.hpp"

#include <cmath>
#include <sstream>

#include "fera/errors.hpp"

namespace fera {

std::string Shape::to_string() const {
  std::ostringstream os;
  os << channels << "x" << height << "x" << width;
  return os.str();
}

template <class T>
BasicField<T>::BasicField(Shape shape, T fill) : shape_(shape), data_(shape.size(), fill) {}

template <class T>
BasicField<T>::BasicField(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw ShapeError("field data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_.to_string());
  }
}

template <class T>
void require_same_shape(const BasicField<T>& a, const BasicField<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().to_string() + " vs " +
                     b.shape().to_string());
  }
}

template <class T>
BasicField<T> axpby(T a, const BasicField<T>& x, T b, const BasicField<T>& y) {
  require_same_shape(x, y, "axpby");
  BasicField<T> out(x.shape());
  auto o = out.data();
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * xs[i] + b * ys[i];
  return out;
}

template <class T>
BasicField<T> operator+(const BasicField<T>& a, const BasicField<T>& b) {
  require_same_shape(a, b, "add");
  BasicField<T> out = a;
  auto o = out.data();
  auto bs = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bs[i];
  return out;
}

template <class T>
BasicField<T> operator-(const BasicField<T>& a, const BasicField<T>& b) {
  require_same_shape(a, b, "sub");
  BasicField<T> out = a;
  auto o = out.data();
  auto bs = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bs[i];
  return out;
}

template <class T>
BasicField<T> operator*(T s, const BasicField<T>& a) {
  BasicField<T> out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

template <class T>
double sum_squares(const BasicField<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += static_cast<double>(v) * static_cast<double>(v);
  return acc;
}

template <class T>
double max_abs_diff(const BasicField<T>& a, const BasicField<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto as = a.data();
  auto bs = b.data();
  for (std::size_t i = 0; i < as.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(as[i]) - static_cast<double>(bs[i])));
  }
  return m;
}

template <class T>
bool all_finite(const BasicField<T>& x) {
  for (T v : x.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

#define FERA_INSTANTIATE_FIELD(T)                                                           \
  template class BasicField<T>;                                                             \
  template BasicField<T> operator+ <T>(const BasicField<T>&, const BasicField<T>&);         \
  template BasicField<T> operator- <T>(const BasicField<T>&, const BasicField<T>&);         \
  template BasicField<T> operator* <T>(T, const BasicField<T>&);                            \
  template BasicField<T> axpby<T>(T, const BasicField<T>&, T, const BasicField<T>&);        \
  template double sum_squares<T>(const BasicField<T>&);                                     \
  template double max_abs_diff<T>(const BasicField<T>&, const BasicField<T>&);              \
  template bool all_finite<T>(const BasicField<T>&);                                        \
  template void require_same_shape<T>(const BasicField<T>&, const BasicField<T>&, const char*);

FERA_INSTANTIATE_FIELD(float)
FERA_INSTANTIATE_FIELD(double)

}  // namespace fera
