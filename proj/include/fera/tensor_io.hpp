#pragma once

// Binary tensor records:
//   "FERA" | u32 version (=1) | u8 dtype (0=f32, 1=f64) | u32 ndim | ndim x u32 dims | payload
// All integers and the row-major payload are little-endian.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "fera/field.hpp"

namespace fera {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct TensorRecord {
  DType dtype = DType::f32;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;

  std::size_t element_count() const;
};

inline constexpr std::uint32_t kTensorFormatVersion = 1;

/// Bytes written by write_tensor for a record of this rank, dtype and size.
std::size_t tensor_record_bytes(DType dtype, std::size_t ndim, std::size_t count);

void write_tensor(std::ostream& os, std::span<const float> values, std::span<const std::uint32_t> dims);
void write_tensor(std::ostream& os, std::span<const double> values, std::span<const std::uint32_t> dims);
TensorRecord read_tensor(std::istream& is);

template <class T>
void save_field(const std::filesystem::path& path, const BasicField<T>& field);

/// Accepts rank-2 (H x W) or rank-3 (C x H x W) records of either dtype.
template <class T>
BasicField<T> load_field(const std::filesystem::path& path);

}  // namespace fera
