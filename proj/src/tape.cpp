#include "fera/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fera/errors.hpp"
#include "fera/simd/kernels.hpp"

namespace fera {

template <class T>
Var Tape<T>::push(Shape shape, std::vector<T> value, bool tracked,
                  std::function<void(Tape&, std::uint32_t)> backprop) {
  Node n;
  n.shape = shape;
  n.value = std::move(value);
  n.tracked = tracked;
  if (tracked) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
std::vector<T>& Tape<T>::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), T{0});
  return n.grad;
}

template <class T>
Var Tape<T>::input(std::span<const T> values, Shape shape, bool track) {
  if (values.size() != shape.size()) throw ShapeError("tape input size does not match shape " + shape.to_string());
  return push(shape, std::vector<T>(values.begin(), values.end()), track, nullptr);
}

template <class T>
Var Tape<T>::scalar_constant(T v) {
  return push(Shape{1, 1, 1}, std::vector<T>{v}, false, nullptr);
}

template <class T>
T Tape<T>::scalar(Var v) const {
  if (node(v).value.size() != 1) throw ShapeError("scalar() on a non-scalar node");
  return node(v).value[0];
}

template <class T>
std::span<const T> Tape<T>::grad(Var v) const {
  static thread_local std::vector<T> zeros;
  const Node& n = node(v);
  if (n.grad.empty()) {
    zeros.assign(n.value.size(), T{0});
    return zeros;
  }
  return n.grad;
}

template <class T>
void Tape<T>::backward(Var root) {
  if (node(root).value.size() != 1) throw ShapeError("backward() needs a scalar root");
  for (auto& n : nodes_) n.grad.clear();
  grad_buffer(root.id)[0] = T{1};
  for (std::uint32_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.tracked && n.backprop && !n.grad.empty()) n.backprop(*this, i);
  }
}

namespace {

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + a.to_string() + " vs " + b.to_string());
}

void require_scalar(std::size_t n, const char* op) {
  if (n != 1) throw ShapeError(std::string(op) + ": expected a single-value node");
}

}  // namespace

template <class T>
Var Tape<T>::add(Var a, Var b) {
  require_same(shape(a), shape(b), "add");
  std::vector<T> out(node(a).value);
  const auto& bv = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return push(shape(a), std::move(out), tracked(a) || tracked(b), [a, b](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    for (Var p : {a, b}) {
      if (!t.tracked(p)) continue;
      auto& gp = t.grad_buffer(p.id);
      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
    }
  });
}

template <class T>
Var Tape<T>::sub(Var a, Var b) {
  require_same(shape(a), shape(b), "sub");
  std::vector<T> out(node(a).value);
  const auto& bv = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return push(shape(a), std::move(out), tracked(a) || tracked(b), [a, b](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    if (t.tracked(a)) {
      auto& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.tracked(b)) {
      auto& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <class T>
Var Tape<T>::mul(Var a, Var b) {
  require_same(shape(a), shape(b), "mul");
  std::vector<T> out(node(a).value);
  const auto& bv = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return push(shape(a), std::move(out), tracked(a) || tracked(b), [a, b](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    if (t.tracked(a)) {
      auto& ga = t.grad_buffer(a.id);
      const auto& bv = t.nodes_[b.id].value;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.tracked(b)) {
      auto& gb = t.grad_buffer(b.id);
      const auto& av = t.nodes_[a.id].value;
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <class T>
Var Tape<T>::scale(Var a, T c) {
  std::vector<T> out(node(a).value);
  for (auto& v : out) v *= c;
  return push(shape(a), std::move(out), tracked(a), [a, c](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

template <class T>
Var Tape<T>::scale_by(Var s, Var x) {
  require_scalar(node(s).value.size(), "scale_by");
  const T sv = node(s).value[0];
  std::vector<T> out(node(x).value);
  for (auto& v : out) v *= sv;
  return push(shape(x), std::move(out), tracked(s) || tracked(x), [s, x](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    const auto& xv = t.nodes_[x.id].value;
    if (t.tracked(s)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += static_cast<double>(g[i]) * static_cast<double>(xv[i]);
      t.grad_buffer(s.id)[0] += static_cast<T>(acc);
    }
    if (t.tracked(x)) {
      const T sv = t.nodes_[s.id].value[0];
      auto& gx = t.grad_buffer(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += sv * g[i];
    }
  });
}

template <class T>
Var Tape<T>::div(Var x, Var s) {
  require_scalar(node(s).value.size(), "div");
  const T sv = node(s).value[0];
  std::vector<T> out(node(x).value);
  for (auto& v : out) v /= sv;
  return push(shape(x), std::move(out), tracked(s) || tracked(x), [s, x](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    const T sv = t.nodes_[s.id].value[0];
    if (t.tracked(x)) {
      auto& gx = t.grad_buffer(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / sv;
    }
    if (t.tracked(s)) {
      const auto& xv = t.nodes_[x.id].value;
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += static_cast<double>(g[i]) * static_cast<double>(xv[i]);
      t.grad_buffer(s.id)[0] += static_cast<T>(-acc / (static_cast<double>(sv) * static_cast<double>(sv)));
    }
  });
}

template <class T>
Var Tape<T>::silu(Var x) {
  std::vector<T> out(node(x).value);
  for (auto& v : out) v = v / (T{1} + std::exp(-v));
  return push(shape(x), std::move(out), tracked(x), [x](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    const auto& xv = t.nodes_[x.id].value;
    auto& gx = t.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T sig = T{1} / (T{1} + std::exp(-xv[i]));
      gx[i] += g[i] * sig * (T{1} + xv[i] * (T{1} - sig));
    }
  });
}

template <class T>
Var Tape<T>::sum(Var x) {
  double acc = 0.0;
  for (T v : node(x).value) acc += static_cast<double>(v);
  return push(Shape{1, 1, 1}, {static_cast<T>(acc)}, tracked(x), [x](Tape& t, std::uint32_t self) {
    const T g = t.nodes_[self].grad[0];
    for (auto& v : t.grad_buffer(x.id)) v += g;
  });
}

template <class T>
Var Tape<T>::sum_squares(Var x) {
  const auto& xv = node(x).value;
  const double acc = simd::active_kernels<T>().dot(xv.data(), xv.data(), xv.size());
  return push(Shape{1, 1, 1}, {static_cast<T>(acc)}, tracked(x), [x](Tape& t, std::uint32_t self) {
    const T g = t.nodes_[self].grad[0];
    const auto& xv = t.nodes_[x.id].value;
    simd::active_kernels<T>().axpy(T{2} * g, xv.data(), t.grad_buffer(x.id).data(), xv.size());
  });
}

template <class T>
Var Tape<T>::norm2(Var x) {
  const auto& xv = node(x).value;
  const double n = std::sqrt(simd::active_kernels<T>().dot(xv.data(), xv.data(), xv.size()));
  return push(Shape{1, 1, 1}, {static_cast<T>(n)}, tracked(x), [x](Tape& t, std::uint32_t self) {
    const T g = t.nodes_[self].grad[0];
    const T n = t.nodes_[self].value[0];
    if (n == T{0}) return;
    const auto& xv = t.nodes_[x.id].value;
    simd::active_kernels<T>().axpy(g / n, xv.data(), t.grad_buffer(x.id).data(), xv.size());
  });
}

template <class T>
Var Tape<T>::sqrt(Var x) {
  std::vector<T> out(node(x).value);
  for (auto& v : out) {
    if (v < T{0}) throw DomainError("sqrt of a negative value");
    v = std::sqrt(v);
  }
  return push(shape(x), std::move(out), tracked(x), [x](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    const auto& y = t.nodes_[self].value;
    auto& gx = t.grad_buffer(x.id);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] > T{0}) gx[i] += g[i] / (T{2} * y[i]);
    }
  });
}

template <class T>
Var Tape<T>::mse(Var a, Var b) {
  require_same(shape(a), shape(b), "mse");
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    acc += d * d;
  }
  const double mean = av.empty() ? 0.0 : acc / static_cast<double>(av.size());
  return push(Shape{1, 1, 1}, {static_cast<T>(mean)}, tracked(a) || tracked(b), [a, b](Tape& t, std::uint32_t self) {
    const T g = t.nodes_[self].grad[0];
    const auto& av = t.nodes_[a.id].value;
    const auto& bv = t.nodes_[b.id].value;
    const T c = T{2} * g / static_cast<T>(av.size());
    if (t.tracked(a)) {
      auto& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += c * (av[i] - bv[i]);
    }
    if (t.tracked(b)) {
      auto& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= c * (av[i] - bv[i]);
    }
  });
}

template <class T>
Var Tape<T>::matvec(Var w, Var x, std::size_t rows, std::size_t cols) {
  if (node(w).value.size() != rows * cols || node(x).value.size() != cols) throw ShapeError("matvec: size mismatch");
  const auto& wv = node(w).value;
  const auto& xv = node(x).value;
  std::vector<T> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T acc{0};
    for (std::size_t c = 0; c < cols; ++c) acc += wv[r * cols + c] * xv[c];
    out[r] = acc;
  }
  return push(Shape{1, 1, rows}, std::move(out), tracked(w) || tracked(x),
              [w, x, rows, cols](Tape& t, std::uint32_t self) {
                const auto& g = t.nodes_[self].grad;
                const auto& wv = t.nodes_[w.id].value;
                const auto& xv = t.nodes_[x.id].value;
                if (t.tracked(w)) {
                  auto& gw = t.grad_buffer(w.id);
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) gw[r * cols + c] += g[r] * xv[c];
                }
                if (t.tracked(x)) {
                  auto& gx = t.grad_buffer(x.id);
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) gx[c] += wv[r * cols + c] * g[r];
                }
              });
}

template <class T>
Var Tape<T>::matmul(Var a, Var b, std::size_t m, std::size_t k, std::size_t n) {
  if (node(a).value.size() != m * k || node(b).value.size() != k * n) throw ShapeError("matmul: size mismatch");
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  std::vector<T> out(m * n, T{0});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  return push(Shape{1, m, n}, std::move(out), tracked(a) || tracked(b), [a, b, m, k, n](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    const auto& av = t.nodes_[a.id].value;
    const auto& bv = t.nodes_[b.id].value;
    if (t.tracked(a)) {
      auto& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T acc{0};
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (t.tracked(b)) {
      auto& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

template <class T>
Var Tape<T>::element(Var x, std::size_t index) {
  if (index >= node(x).value.size()) throw IndexError("element index out of range");
  return push(Shape{1, 1, 1}, {node(x).value[index]}, tracked(x), [x, index](Tape& t, std::uint32_t self) {
    t.grad_buffer(x.id)[index] += t.nodes_[self].grad[0];
  });
}

template <class T>
Var Tape<T>::slice(Var x, std::size_t offset, Shape out_shape) {
  const auto& xv = node(x).value;
  if (offset + out_shape.size() > xv.size()) throw IndexError("slice out of range");
  std::vector<T> out(xv.begin() + static_cast<std::ptrdiff_t>(offset),
                     xv.begin() + static_cast<std::ptrdiff_t>(offset + out_shape.size()));
  return push(out_shape, std::move(out), tracked(x), [x, offset](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    auto& gx = t.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
  });
}

template <class T>
Var Tape<T>::softmax(Var logits, T tau) {
  if (!(tau > T{0})) throw DomainError("softmax temperature must be positive");
  const auto& z = node(logits).value;
  std::vector<T> p(z.size());
  T zmax = z.empty() ? T{0} : *std::max_element(z.begin(), z.end());
  T total{0};
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp((z[i] - zmax) / tau);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return push(shape(logits), std::move(p), tracked(logits), [logits, tau](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    const auto& p = t.nodes_[self].value;
    T dotp{0};
    for (std::size_t i = 0; i < p.size(); ++i) dotp += g[i] * p[i];
    auto& gz = t.grad_buffer(logits.id);
    for (std::size_t i = 0; i < p.size(); ++i) gz[i] += p[i] * (g[i] - dotp) / tau;
  });
}

template <class T>
Var Tape<T>::hard_select(Var probs) {
  const auto& p = node(probs).value;
  std::vector<T> out(p.size(), T{0});
  if (!p.empty()) out[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())] = T{1};
  return push(shape(probs), std::move(out), tracked(probs), [probs](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    auto& gp = t.grad_buffer(probs.id);
    for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
  });
}

template <class T>
Var Tape<T>::conv3x3(Var x, Var w, std::size_t cout) {
  const Shape xs = shape(x);
  const std::size_t cin = xs.channels;
  if (node(w).value.size() != cout * cin * 9) throw ShapeError("conv3x3: weight count mismatch");
  if (xs.height < 3 || xs.width < 3) throw ShapeError("conv3x3: field smaller than 3x3");
  const auto& kt = simd::active_kernels<T>();
  std::vector<T> xpad = pad_circular(node(x).value.data(), cin, xs.height, xs.width, 1);
  std::vector<T> out(cout * xs.plane());
  kt.conv3x3(xpad.data(), cin, xs.height, xs.width, node(w).value.data(), cout, out.data());
  const bool need = tracked(x) || tracked(w);
  return push(Shape{cout, xs.height, xs.width}, std::move(out), need,
              [x, w, cout, xs, xpad = need ? std::move(xpad) : std::vector<T>{}](Tape& t, std::uint32_t self) {
                const auto& kt = simd::active_kernels<T>();
                const auto& g = t.nodes_[self].grad;
                const std::size_t cin = xs.channels;
                if (t.tracked(w)) {
                  kt.conv3x3_weight_grad(xpad.data(), g.data(), cin, xs.height, xs.width, cout,
                                         t.grad_buffer(w.id).data());
                }
                if (t.tracked(x)) {
                  const auto& wv = t.nodes_[w.id].value;
                  std::vector<T> wt(wv.size());
                  for (std::size_t o = 0; o < cout; ++o)
                    for (std::size_t i = 0; i < cin; ++i)
                      for (std::size_t k = 0; k < 9; ++k) wt[(i * cout + o) * 9 + k] = wv[(o * cin + i) * 9 + (8 - k)];
                  std::vector<T> gpad = pad_circular(g.data(), cout, xs.height, xs.width, 1);
                  std::vector<T> gx(xs.size());
                  kt.conv3x3(gpad.data(), cout, xs.height, xs.width, wt.data(), cin, gx.data());
                  auto& dst = t.grad_buffer(x.id);
                  for (std::size_t i = 0; i < gx.size(); ++i) dst[i] += gx[i];
                }
              });
}

template <class T>
Var Tape<T>::add_channel_bias(Var x, Var b) {
  const Shape xs = shape(x);
  if (node(b).value.size() != xs.channels) throw ShapeError("add_channel_bias: bias length mismatch");
  std::vector<T> out(node(x).value);
  const auto& bv = node(b).value;
  for (std::size_t c = 0; c < xs.channels; ++c)
    for (std::size_t i = 0; i < xs.plane(); ++i) out[c * xs.plane() + i] += bv[c];
  return push(xs, std::move(out), tracked(x) || tracked(b), [x, b, xs](Tape& t, std::uint32_t self) {
    const auto& g = t.nodes_[self].grad;
    if (t.tracked(x)) {
      auto& gx = t.grad_buffer(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.tracked(b)) {
      auto& gb = t.grad_buffer(b.id);
      for (std::size_t c = 0; c < xs.channels; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < xs.plane(); ++i) acc += static_cast<double>(g[c * xs.plane() + i]);
        gb[c] += static_cast<T>(acc);
      }
    }
  });
}

template <class T>
Var Tape<T>::conv_depthwise(Var x, const Kernel2D<T>& k) {
  BasicField<T> out = fera::conv_depthwise(field(x), k);
  const Shape xs = shape(x);
  return push(xs, std::move(out.values()), tracked(x), [x, k, xs](Tape& t, std::uint32_t self) {
    BasicField<T> g(xs, t.nodes_[self].grad);
    BasicField<T> gx = conv_depthwise_adjoint(g, k);
    auto& dst = t.grad_buffer(x.id);
    auto src = gx.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  });
}

template class Tape<float>;
template class Tape<double>;

}  // namespace fera
