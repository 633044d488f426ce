#include "fera/params.hpp"

#include <fstream>
#include <sstream>

#include "fera/errors.hpp"
#include "fera/tensor_io.hpp"

namespace fera {

template <class T>
NamedTensor<T>& ParameterSet<T>::add(std::string name, std::vector<std::size_t> dims, std::vector<T> values) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  if (n != values.size()) throw ShapeError("parameter '" + name + "' dims do not match value count");
  if (contains(name)) throw LookupError("duplicate parameter '" + name + "'");
  tensors_.push_back(NamedTensor<T>{std::move(name), std::move(dims), std::move(values)});
  return tensors_.back();
}

template <class T>
NamedTensor<T>& ParameterSet<T>::add(std::string name, std::vector<std::size_t> dims, T fill) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return add(std::move(name), std::move(dims), std::vector<T>(n, fill));
}

template <class T>
bool ParameterSet<T>::contains(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return true;
  }
  return false;
}

template <class T>
const NamedTensor<T>& ParameterSet<T>::find(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw LookupError("no parameter named '" + name + "'");
}

template <class T>
NamedTensor<T>& ParameterSet<T>::find(const std::string& name) {
  return const_cast<NamedTensor<T>&>(std::as_const(*this).find(name));
}

template <class T>
std::size_t ParameterSet<T>::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.values.size();
  return n;
}

template <class T>
std::vector<T> ParameterSet<T>::flatten() const {
  std::vector<T> out;
  out.reserve(parameter_count());
  for (const auto& t : tensors_) out.insert(out.end(), t.values.begin(), t.values.end());
  return out;
}

template <class T>
void ParameterSet<T>::assign_flat(std::span<const T> flat) {
  if (flat.size() != parameter_count()) throw ShapeError("flat parameter vector has the wrong length");
  std::size_t off = 0;
  for (auto& t : tensors_) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
              flat.begin() + static_cast<std::ptrdiff_t>(off + t.values.size()), t.values.begin());
    off += t.values.size();
  }
}

template <class T>
std::vector<std::string> ParameterSet<T>::scalar_names() const {
  std::vector<std::string> names;
  names.reserve(parameter_count());
  for (const auto& t : tensors_) {
    for (std::size_t i = 0; i < t.values.size(); ++i) names.push_back(t.name + "[" + std::to_string(i) + "]");
  }
  return names;
}

template <class T>
std::vector<Var> ParameterSet<T>::bind(Tape<T>& tape, bool track) const {
  std::vector<Var> vars;
  vars.reserve(tensors_.size());
  for (const auto& t : tensors_) vars.push_back(tape.vector(t.values, track));
  return vars;
}

template <class T>
std::vector<Var> ParameterSet<T>::bind_flat(Tape<T>& tape, Var flat) const {
  std::vector<Var> vars;
  std::size_t off = 0;
  for (const auto& t : tensors_) {
    vars.push_back(tape.slice(flat, off, Shape{1, 1, t.values.size()}));
    off += t.values.size();
  }
  return vars;
}

template class ParameterSet<float>;
template class ParameterSet<double>;

namespace {

std::string dims_string(const std::vector<std::size_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(dims[i]);
  }
  return s.empty() ? "1" : s;
}

std::vector<std::size_t> parse_dims(const std::string& s) {
  std::vector<std::size_t> dims;
  std::istringstream is(s);
  std::string part;
  while (std::getline(is, part, 'x')) dims.push_back(static_cast<std::size_t>(std::stoull(part)));
  return dims;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  std::ofstream bin(dir / "params.bin", std::ios::binary);
  std::ofstream manifest(dir / "manifest.txt");
  if (!bin || !manifest) throw IoError("cannot write checkpoint in " + dir.string());
  for (const auto& [k, v] : ckpt.meta) manifest << "meta " << k << ' ' << v << '\n';
  std::size_t offset = 0;
  for (const auto& t : ckpt.params.tensors()) {
    std::vector<std::uint32_t> dims(t.dims.begin(), t.dims.end());
    write_tensor(bin, std::span<const float>(t.values), dims);
    manifest << "tensor " << t.name << ' ' << dims_string(t.dims) << ' ' << offset << '\n';
    offset += tensor_record_bytes(DType::f32, dims.size(), t.values.size());
  }
  if (!bin || !manifest) throw IoError("failed writing checkpoint in " + dir.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!manifest || !bin) throw IoError("checkpoint not found at " + dir.string());
  Checkpoint ckpt;
  std::string line;
  while (std::getline(manifest, line)) {
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string key, value;
      ls >> key;
      std::getline(ls >> std::ws, value);
      ckpt.meta[key] = value;
    } else if (kind == "tensor") {
      std::string name, dims;
      std::size_t offset = 0;
      ls >> name >> dims >> offset;
      bin.seekg(static_cast<std::streamoff>(offset));
      TensorRecord rec = read_tensor(bin);
      const auto expected = parse_dims(dims);
      if (std::vector<std::size_t>(rec.dims.begin(), rec.dims.end()) != expected) {
        throw IoError("checkpoint tensor '" + name + "' shape disagrees with manifest");
      }
      ckpt.params.add(name, expected, std::vector<float>(rec.values.begin(), rec.values.end()));
    } else if (!kind.empty()) {
      throw IoError("unrecognised checkpoint manifest line: " + line);
    }
  }
  return ckpt;
}

}  // namespace fera
