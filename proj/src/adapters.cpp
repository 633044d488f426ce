#include "fera/adapters.hpp"

#include <cmath>
#include <string>

#include "fera/errors.hpp"
#include "fera/kernel2d.hpp"
#include "fera/rng.hpp"

namespace fera {

void RoutingWeights::validate(std::size_t experts) const {
  if (alpha.size() != experts) {
    throw ShapeError("routing weights have " + std::to_string(alpha.size()) + " entries, expected " +
                     std::to_string(experts));
  }
  double total = 0.0;
  for (double a : alpha) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw DomainError("routing weights must be finite and non-negative");
    total += a;
  }
  if (std::abs(total - 1.0) > 1e-6) throw DomainError("routing weights must sum to 1");
}

RoutingWeights RoutingWeights::uniform(std::size_t experts) {
  return RoutingWeights{std::vector<double>(experts, 1.0 / static_cast<double>(experts))};
}

RoutingWeights RoutingWeights::one_hot(std::size_t experts, std::size_t index) {
  if (index >= experts) throw IndexError("one-hot index out of range");
  RoutingWeights w{std::vector<double>(experts, 0.0)};
  w.alpha[index] = 1.0;
  return w;
}

template <class T>
const LoraLayer<T>& LoraExpert<T>::layer(std::size_t layer_id) const {
  for (const auto& l : layers) {
    if (l.layer.id == layer_id) return l;
  }
  throw LookupError("layer " + std::to_string(layer_id) + " has no adapter attached");
}

template <class T>
std::vector<T> LoraExpert<T>::weight_delta(std::size_t layer_id) const {
  const LoraLayer<T>& l = layer(layer_id);
  const std::size_t in = l.layer.in_features();
  const std::size_t out = l.layer.out_features();
  const T s = static_cast<T>(scale / static_cast<double>(rank));
  std::vector<T> delta(out * in, T{0});
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t q = 0; q < rank; ++q) {
      const T u = s * l.up[o * rank + q];
      if (u == T{0}) continue;
      for (std::size_t f = 0; f < in; ++f) delta[o * in + f] += u * l.down[q * in + f];
    }
  return delta;
}

template <class T>
std::size_t ExpertBank<T>::parameter_count() const {
  std::size_t per_expert = 0;
  for (const auto& a : attachment) per_expert += rank * (a.in_features() + a.out_features());
  return per_expert * experts.size();
}

template <class T>
bool ExpertBank<T>::attached(std::size_t layer_id) const {
  for (const auto& a : attachment) {
    if (a.id == layer_id) return true;
  }
  return false;
}

template <class T>
ParameterSet<T> ExpertBank<T>::to_parameter_set() const {
  ParameterSet<T> p;
  for (std::size_t m = 0; m < experts.size(); ++m) {
    for (const auto& l : experts[m].layers) {
      const std::string prefix = "expert" + std::to_string(m) + "/layer" + std::to_string(l.layer.id) + "/";
      p.add(prefix + "down", {rank, l.layer.in_features()}, l.down);
      p.add(prefix + "up", {l.layer.out_features(), rank}, l.up);
    }
  }
  return p;
}

template <class T>
void ExpertBank<T>::assign(const ParameterSet<T>& params) {
  for (std::size_t m = 0; m < experts.size(); ++m) {
    for (auto& l : experts[m].layers) {
      const std::string prefix = "expert" + std::to_string(m) + "/layer" + std::to_string(l.layer.id) + "/";
      const auto& down = params.find(prefix + "down");
      const auto& up = params.find(prefix + "up");
      if (down.values.size() != l.down.size() || up.values.size() != l.up.size()) {
        throw ShapeError("adapter tensor size mismatch for " + prefix);
      }
      l.down = down.values;
      l.up = up.values;
    }
  }
}

template <class T>
ExpertBank<T> init_expert_bank(std::size_t experts, std::size_t rank, double scale,
                               std::vector<ConvLayerSpec> attachment, std::uint64_t seed) {
  if (experts == 0) throw DomainError("an expert bank needs at least one expert");
  if (attachment.empty()) throw DomainError("an expert bank needs at least one attached layer");
  for (const auto& a : attachment) {
    if (rank < 1 || rank > std::min(a.in_features(), a.out_features())) {
      throw DomainError("rank " + std::to_string(rank) + " invalid for layer " + std::to_string(a.id) + " (" +
                        std::to_string(a.in_features()) + " -> " + std::to_string(a.out_features()) + ")");
    }
  }
  ExpertBank<T> bank;
  bank.attachment = attachment;
  bank.rank = rank;
  bank.scale = scale;
  for (std::size_t m = 0; m < experts; ++m) {
    LoraExpert<T> e;
    e.rank = rank;
    e.scale = scale;
    for (const auto& a : attachment) {
      LoraLayer<T> l;
      l.layer = a;
      l.down.resize(rank * a.in_features());
      CounterRng rng(seed, 0x4c4f5241 + m, a.id);
      rng.fill_gaussian(std::span<T>(l.down), 0.02);
      l.up.assign(a.out_features() * rank, T{0});
      e.layers.push_back(std::move(l));
    }
    bank.experts.push_back(std::move(e));
  }
  return bank;
}

template <class T>
BasicField<T> expert_correction(const LoraExpert<T>& expert, std::size_t layer_id, const BasicField<T>& layer_input) {
  const LoraLayer<T>& l = expert.layer(layer_id);
  if (layer_input.channels() != l.layer.in_channels) throw ShapeError("adapter input channel count mismatch");
  const std::size_t rank = expert.rank;
  const BasicField<T> hidden = conv3x3(layer_input, l.down, rank);
  const std::size_t plane = layer_input.shape().plane();
  BasicField<T> out(Shape{l.layer.out_channels, layer_input.height(), layer_input.width()});
  const T s = static_cast<T>(expert.scale / static_cast<double>(rank));
  for (std::size_t o = 0; o < l.layer.out_channels; ++o) {
    auto dst = out.channel(o);
    for (std::size_t q = 0; q < rank; ++q) {
      const T u = s * l.up[o * rank + q];
      auto src = hidden.channel(q);
      for (std::size_t i = 0; i < plane; ++i) dst[i] += u * src[i];
    }
  }
  return out;
}

template <class T>
std::vector<T> expert_correction(const LoraExpert<T>& expert, std::size_t layer_id, std::span<const T> features) {
  const LoraLayer<T>& l = expert.layer(layer_id);
  const std::size_t in = l.layer.in_features();
  const std::size_t out = l.layer.out_features();
  if (features.size() != in) throw ShapeError("adapter feature vector length mismatch");
  std::vector<T> hidden(expert.rank, T{0});
  for (std::size_t q = 0; q < expert.rank; ++q)
    for (std::size_t f = 0; f < in; ++f) hidden[q] += l.down[q * in + f] * features[f];
  const T s = static_cast<T>(expert.scale / static_cast<double>(expert.rank));
  std::vector<T> result(out, T{0});
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t q = 0; q < expert.rank; ++q) result[o] += s * l.up[o * expert.rank + q] * hidden[q];
  return result;
}

template <class T>
BasicField<T> blended_correction(const ExpertBank<T>& bank, const RoutingWeights& weights, std::size_t layer_id,
                                 const BasicField<T>& layer_input) {
  weights.validate(bank.size());
  BasicField<T> total;
  for (std::size_t m = 0; m < bank.size(); ++m) {
    BasicField<T> c = expert_correction(bank.experts[m], layer_id, layer_input);
    const T a = static_cast<T>(weights.alpha[m]);
    if (m == 0) {
      total = a * c;
    } else {
      total = axpby(T{1}, total, a, c);
    }
  }
  return total;
}

template <class T>
std::vector<T> merged_weight_delta(const ExpertBank<T>& bank, const RoutingWeights& weights, std::size_t layer_id) {
  weights.validate(bank.size());
  std::vector<T> total;
  for (std::size_t m = 0; m < bank.size(); ++m) {
    const std::vector<T> d = bank.experts[m].weight_delta(layer_id);
    if (total.empty()) total.assign(d.size(), T{0});
    const T a = static_cast<T>(weights.alpha[m]);
    for (std::size_t i = 0; i < d.size(); ++i) total[i] += a * d[i];
  }
  return total;
}

template <class T>
std::optional<Var> blended_delta_on_tape(Tape<T>& tape, const ExpertBank<T>& bank, std::span<const Var> factor_vars,
                                         Var alpha, std::size_t layer_id) {
  std::size_t slot = bank.attachment.size();
  for (std::size_t j = 0; j < bank.attachment.size(); ++j) {
    if (bank.attachment[j].id == layer_id) slot = j;
  }
  if (slot == bank.attachment.size()) return std::nullopt;
  if (factor_vars.size() != 2 * bank.size() * bank.attachment.size()) {
    throw ShapeError("adapter factor variable count mismatch");
  }
  const ConvLayerSpec& spec = bank.attachment[slot];
  const T s = static_cast<T>(bank.scale / static_cast<double>(bank.rank));
  std::optional<Var> total;
  for (std::size_t m = 0; m < bank.size(); ++m) {
    const std::size_t base = 2 * (m * bank.attachment.size() + slot);
    Var down = factor_vars[base];
    Var up = factor_vars[base + 1];
    Var prod = tape.matmul(up, down, spec.out_features(), bank.rank, spec.in_features());
    Var weighted = tape.scale_by(tape.element(alpha, m), tape.scale(prod, s));
    total = total ? tape.add(*total, weighted) : weighted;
  }
  // Flat view so the delta can be added to a weight leaf.
  return tape.slice(*total, 0, Shape{1, 1, spec.out_features() * spec.in_features()});
}

#define FERA_INSTANTIATE_ADAPTERS(T)                                                                             \
  template struct LoraExpert<T>;                                                                                 \
  template struct ExpertBank<T>;                                                                                 \
  template ExpertBank<T> init_expert_bank<T>(std::size_t, std::size_t, double, std::vector<ConvLayerSpec>,       \
                                             std::uint64_t);                                                     \
  template BasicField<T> expert_correction<T>(const LoraExpert<T>&, std::size_t, const BasicField<T>&);          \
  template std::vector<T> expert_correction<T>(const LoraExpert<T>&, std::size_t, std::span<const T>);           \
  template BasicField<T> blended_correction<T>(const ExpertBank<T>&, const RoutingWeights&, std::size_t,         \
                                               const BasicField<T>&);                                            \
  template std::vector<T> merged_weight_delta<T>(const ExpertBank<T>&, const RoutingWeights&, std::size_t);      \
  template std::optional<Var> blended_delta_on_tape<T>(Tape<T>&, const ExpertBank<T>&, std::span<const Var>, Var, \
                                                       std::size_t);

FERA_INSTANTIATE_ADAPTERS(float)
FERA_INSTANTIATE_ADAPTERS(double)

}  // namespace fera
