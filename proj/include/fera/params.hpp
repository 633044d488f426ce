#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fera/tape.hpp"

namespace fera {

template <class T>
struct NamedTensor {
  std::string name;
  std::vector<std::size_t> dims;
  std::vector<T> values;
};

/// Ordered collection of named tensors. Order is part of the layout: flatten() and
/// bind() visit tensors in insertion order.
template <class T>
class ParameterSet {
 public:
  NamedTensor<T>& add(std::string name, std::vector<std::size_t> dims, std::vector<T> values);
  NamedTensor<T>& add(std::string name, std::vector<std::size_t> dims, T fill = T{0});

  const NamedTensor<T>& at(std::size_t i) const { return tensors_[i]; }
  NamedTensor<T>& at(std::size_t i) { return tensors_[i]; }
  const NamedTensor<T>& find(const std::string& name) const;
  NamedTensor<T>& find(const std::string& name);
  bool contains(const std::string& name) const;

  std::size_t tensor_count() const noexcept { return tensors_.size(); }
  std::size_t parameter_count() const noexcept;
  const std::vector<NamedTensor<T>>& tensors() const noexcept { return tensors_; }

  std::vector<T> flatten() const;
  void assign_flat(std::span<const T> flat);
  /// One name per scalar, "<tensor>[i]".
  std::vector<std::string> scalar_names() const;

  /// One tape leaf per tensor, in order.
  std::vector<Var> bind(Tape<T>& tape, bool track) const;
  /// Slices of a single flat parameter vector, in order (used by gradient checks).
  std::vector<Var> bind_flat(Tape<T>& tape, Var flat) const;

  template <class U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& t : tensors_) out.add(t.name, t.dims, std::vector<U>(t.values.begin(), t.values.end()));
    return out;
  }

 private:
  std::vector<NamedTensor<T>> tensors_;
};

/// A checkpoint directory: params.bin (concatenated tensor records) plus a plain-text
/// manifest.txt with `meta <key> <value>` and `tensor <name> <d0>x<d1>... <byte offset>` lines.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  ParameterSet<float> params;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace fera
