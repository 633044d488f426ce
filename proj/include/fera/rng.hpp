#pragma once

#include <cstdint>
#include <span>

#include "fera/field.hpp"

namespace fera {

/// Counter-based generator: the stream is a pure function of (seed, stream, substream),
/// so noise for any (step, sample) can be regenerated without storing it.
/// Gaussian draws use our own Box-Muller so values are identical across standard libraries.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t substream = 0) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1).
  double uniform() noexcept;
  double gaussian() noexcept;
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

  template <class T>
  void fill_gaussian(std::span<T> out, double stddev = 1.0) noexcept {
    for (auto& v : out) v = static_cast<T>(stddev * gaussian());
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

template <class T>
BasicField<T> gaussian_field(Shape shape, CounterRng& rng) {
  BasicField<T> f(shape);
  rng.fill_gaussian(f.data());
  return f;
}

}  // namespace fera
