#include "fera/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "fera/errors.hpp"

namespace fera {
namespace {

constexpr std::array<char, 4> kMagic{'F', 'E', 'R', 'A'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), 8);
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw IoError("truncated tensor header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

template <class T>
void write_impl(std::ostream& os, std::span<const T> values, std::span<const std::uint32_t> dims, DType dtype) {
  std::size_t count = 1;
  for (auto d : dims) count *= d;
  if (count != values.size()) throw ShapeError("tensor dims do not match value count");
  os.write(kMagic.data(), 4);
  put_u32(os, kTensorFormatVersion);
  const char dt = static_cast<char>(dtype);
  os.write(&dt, 1);
  put_u32(os, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put_u32(os, d);
  for (T v : values) {
    if constexpr (sizeof(T) == 4) {
      put_u32(os, std::bit_cast<std::uint32_t>(v));
    } else {
      put_u64(os, std::bit_cast<std::uint64_t>(v));
    }
  }
  if (!os) throw IoError("failed writing tensor");
}

}  // namespace

std::size_t TensorRecord::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::size_t tensor_record_bytes(DType dtype, std::size_t ndim, std::size_t count) {
  return 4 + 4 + 1 + 4 + 4 * ndim + count * (dtype == DType::f32 ? 4 : 8);
}

void write_tensor(std::ostream& os, std::span<const float> values, std::span<const std::uint32_t> dims) {
  write_impl(os, values, dims, DType::f32);
}

void write_tensor(std::ostream& os, std::span<const double> values, std::span<const std::uint32_t> dims) {
  write_impl(os, values, dims, DType::f64);
}

TensorRecord read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4)) throw IoError("truncated tensor: missing magic");
  if (magic != kMagic) throw IoError("bad tensor magic");
  const std::uint32_t version = get_u32(is);
  if (version != kTensorFormatVersion) throw IoError("unsupported tensor version " + std::to_string(version));
  char dt = 0;
  if (!is.read(&dt, 1)) throw IoError("truncated tensor: missing dtype");
  if (dt != 0 && dt != 1) throw IoError("unknown tensor dtype " + std::to_string(static_cast<int>(dt)));
  TensorRecord rec;
  rec.dtype = static_cast<DType>(dt);
  const std::uint32_t ndim = get_u32(is);
  if (ndim > 8) throw IoError("tensor rank too large");
  rec.dims.resize(ndim);
  for (auto& d : rec.dims) d = get_u32(is);
  const std::size_t count = rec.element_count();
  rec.values.resize(count);
  const std::size_t width = rec.dtype == DType::f32 ? 4 : 8;
  std::vector<unsigned char> raw(count * width);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw IoError("truncated tensor payload");
  }
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* p = raw.data() + i * width;
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < width; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
    rec.values[i] = width == 4 ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(bits)))
                               : std::bit_cast<double>(bits);
  }
  return rec;
}

template <class T>
void save_field(const std::filesystem::path& path, const BasicField<T>& field) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  const std::array<std::uint32_t, 3> dims{static_cast<std::uint32_t>(field.channels()),
                                          static_cast<std::uint32_t>(field.height()),
                                          static_cast<std::uint32_t>(field.width())};
  write_tensor(os, field.data(), dims);
}

template <class T>
BasicField<T> load_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  TensorRecord rec = read_tensor(is);
  Shape shape;
  if (rec.dims.size() == 2) {
    shape = Shape{1, rec.dims[0], rec.dims[1]};
  } else if (rec.dims.size() == 3) {
    shape = Shape{rec.dims[0], rec.dims[1], rec.dims[2]};
  } else {
    throw ShapeError("field tensors must have rank 2 or 3");
  }
  std::vector<T> values(rec.values.begin(), rec.values.end());
  return BasicField<T>(shape, std::move(values));
}

template void save_field<float>(const std::filesystem::path&, const BasicField<float>&);
template void save_field<double>(const std::filesystem::path&, const BasicField<double>&);
template BasicField<float> load_field<float>(const std::filesystem::path&);
template BasicField<double> load_field<double>(const std::filesystem::path&);

}  // namespace fera
