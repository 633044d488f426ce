#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fera {

struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  constexpr std::size_t size() const noexcept { return channels * height * width; }
  constexpr std::size_t plane() const noexcept { return height * width; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string to_string() const;
};

/// Dense C x H x W real tensor, channel-major then row-major.
template <class T>
class BasicField {
 public:
  using value_type = T;

  BasicField() = default;
  explicit BasicField(Shape shape, T fill = T{0});
  BasicField(Shape shape, std::vector<T> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t height() const noexcept { return shape_.height; }
  std::size_t width() const noexcept { return shape_.width; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }
  std::vector<T>& values() noexcept { return data_; }

  std::span<T> channel(std::size_t c) { return std::span<T>(data_).subspan(c * shape_.plane(), shape_.plane()); }
  std::span<const T> channel(std::size_t c) const {
    return std::span<const T>(data_).subspan(c * shape_.plane(), shape_.plane());
  }

  T& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * shape_.height + y) * shape_.width + x]; }
  T at(std::size_t c, std::size_t y, std::size_t x) const { return data_[(c * shape_.height + y) * shape_.width + x]; }

  template <class U>
  BasicField<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicField<U>(shape_, std::move(out));
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using Field = BasicField<float>;
using FieldD = BasicField<double>;

template <class T>
BasicField<T> operator+(const BasicField<T>& a, const BasicField<T>& b);
template <class T>
BasicField<T> operator-(const BasicField<T>& a, const BasicField<T>& b);
template <class T>
BasicField<T> operator*(T s, const BasicField<T>& a);

/// a*x + b*y, elementwise.
template <class T>
BasicField<T> axpby(T a, const BasicField<T>& x, T b, const BasicField<T>& y);

/// Squared L2 norm, accumulated in double.
template <class T>
double sum_squares(const BasicField<T>& x);

template <class T>
double max_abs_diff(const BasicField<T>& a, const BasicField<T>& b);

template <class T>
bool all_finite(const BasicField<T>& x);

template <class T>
void require_same_shape(const BasicField<T>& a, const BasicField<T>& b, const char* what);

}  // namespace fera
