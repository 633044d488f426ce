#pragma once

// Reverse-mode differentiation over a closed set of tensor primitives.
//
// A Tape owns every intermediate value created while evaluating a scalar
// objective. Each primitive records a backward closure that accumulates into
// its parents' gradients; backward() replays them in reverse creation order.
// Nodes that do not depend on a gradient-tracked input carry no closure.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fera/field.hpp"
#include "fera/kernel2d.hpp"

namespace fera {

struct Var {
  std::uint32_t id = 0;
};

template <class T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  /// Leaf node. When track is true the node receives a gradient in backward().
  Var input(std::span<const T> values, Shape shape, bool track);
  Var input(const BasicField<T>& field, bool track) { return input(field.data(), field.shape(), track); }
  Var vector(std::span<const T> values, bool track) {
    return input(values, Shape{1, 1, values.size()}, track);
  }
  Var constant(std::span<const T> values, Shape shape) { return input(values, shape, false); }
  Var scalar_constant(T v);

  std::span<const T> value(Var v) const { return nodes_[v.id].value; }
  Shape shape(Var v) const { return nodes_[v.id].shape; }
  T scalar(Var v) const;
  bool tracked(Var v) const { return nodes_[v.id].tracked; }
  BasicField<T> field(Var v) const { return BasicField<T>(nodes_[v.id].shape, nodes_[v.id].value); }

  /// Gradient of the last backward() root with respect to v (zeros if v is untracked).
  std::span<const T> grad(Var v) const;

  /// root must hold a single value.
  void backward(Var root);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Elementwise.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, T c);
  /// s is a single-value node; returns s * x.
  Var scale_by(Var s, Var x);
  /// s is a single-value node; returns x / s.
  Var div(Var x, Var s);
  Var silu(Var x);
  /// Elementwise square root; the gradient at zero is taken as zero.
  Var sqrt(Var x);

  // Reductions to a single value.
  Var sum(Var x);
  Var sum_squares(Var x);
  /// Euclidean norm; the gradient at the origin is taken as zero.
  Var norm2(Var x);
  /// Mean of (a - b)^2 over all elements.
  Var mse(Var a, Var b);

  // Linear algebra on row-major matrices.
  /// w is rows x cols, x has cols entries.
  Var matvec(Var w, Var x, std::size_t rows, std::size_t cols);
  /// a is m x k, b is k x n.
  Var matmul(Var a, Var b, std::size_t m, std::size_t k, std::size_t n);
  Var element(Var x, std::size_t index);
  /// Contiguous view of shape.size() values starting at offset, copied into a new node.
  Var slice(Var x, std::size_t offset, Shape shape);

  // Routing.
  Var softmax(Var logits, T tau);
  /// Forward: one-hot at argmax(p). Backward: identity (straight-through).
  Var hard_select(Var probs);

  // Spatial.
  /// x is (cin, h, w); w is cout*cin*9 laid out [o][i][ky][kx]; circular padding.
  Var conv3x3(Var x, Var w, std::size_t cout);
  /// Adds b[c] to every element of channel c.
  Var add_channel_bias(Var x, Var b);
  /// Circular depth-wise convolution with a fixed kernel.
  Var conv_depthwise(Var x, const Kernel2D<T>& k);

 private:
  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool tracked = false;
    std::function<void(Tape&, std::uint32_t)> backprop;
  };

  Var push(Shape shape, std::vector<T> value, bool tracked, std::function<void(Tape&, std::uint32_t)> backprop);
  std::vector<T>& grad_buffer(std::uint32_t id);
  const Node& node(Var v) const { return nodes_[v.id]; }

  std::vector<Node> nodes_;
};

}  // namespace fera
