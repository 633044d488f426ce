#pragma once

// Low-rank (LoRA-style) experts attached to the denoiser's 3x3 convolutions.
//
// A conv layer's weight is viewed as an (out_channels) x (in_channels * 9) matrix;
// an expert adds (scale / rank) * up * down to that view, with down of shape
// rank x (in_channels * 9) and up of shape out_channels x rank.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fera/field.hpp"
#include "fera/params.hpp"
#include "fera/routing_weights.hpp"
#include "fera/tape.hpp"

namespace fera {

struct ConvLayerSpec {
  std::size_t id = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;

  std::size_t in_features() const noexcept { return in_channels * 9; }
  std::size_t out_features() const noexcept { return out_channels; }
  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

template <class T>
struct LoraLayer {
  ConvLayerSpec layer;
  std::vector<T> down;  ///< rank x in_features
  std::vector<T> up;    ///< out_features x rank
};

template <class T>
struct LoraExpert {
  std::size_t rank = 0;
  double scale = 1.0;
  std::vector<LoraLayer<T>> layers;

  /// Throws LookupError if the layer is not attached.
  const LoraLayer<T>& layer(std::size_t layer_id) const;
  std::vector<T> weight_delta(std::size_t layer_id) const;
};

template <class T>
struct ExpertBank {
  std::vector<ConvLayerSpec> attachment;
  std::size_t rank = 0;
  double scale = 1.0;
  std::vector<LoraExpert<T>> experts;

  std::size_t size() const noexcept { return experts.size(); }
  std::size_t parameter_count() const;
  bool attached(std::size_t layer_id) const;

  /// Tensors named expert{m}/layer{id}/{down|up}, experts outer, layers inner.
  ParameterSet<T> to_parameter_set() const;
  void assign(const ParameterSet<T>& params);
};

/// Down factors ~ N(0, 0.02^2), up factors zero. Deterministic per seed.
template <class T>
ExpertBank<T> init_expert_bank(std::size_t experts, std::size_t rank, double scale,
                               std::vector<ConvLayerSpec> attachment, std::uint64_t seed);

/// scale/rank * up * (down * patch) at every pixel of a layer input (in_channels x H x W),
/// patches taken with circular padding. Returns out_channels x H x W.
template <class T>
BasicField<T> expert_correction(const LoraExpert<T>& expert, std::size_t layer_id, const BasicField<T>& layer_input);

/// The same map applied to a single in_features vector.
template <class T>
std::vector<T> expert_correction(const LoraExpert<T>& expert, std::size_t layer_id, std::span<const T> features);

/// sum_m alpha_m * expert_correction(expert_m, ...)
template <class T>
BasicField<T> blended_correction(const ExpertBank<T>& bank, const RoutingWeights& weights, std::size_t layer_id,
                                 const BasicField<T>& layer_input);

/// sum_m alpha_m * (scale/rank) * up_m * down_m, laid out like the conv weight [o][i][ky][kx].
template <class T>
std::vector<T> merged_weight_delta(const ExpertBank<T>& bank, const RoutingWeights& weights, std::size_t layer_id);

/// Tape version of merged_weight_delta. factor_vars follow to_parameter_set() order;
/// alpha is an M-vector node. Returns nullopt if the layer is not attached.
template <class T>
std::optional<Var> blended_delta_on_tape(Tape<T>& tape, const ExpertBank<T>& bank, std::span<const Var> factor_vars,
                                         Var alpha, std::size_t layer_id);

}  // namespace fera
