#pragma once

// Toy epsilon-prediction network: three circular 3x3 convolutions
// (channels -> hidden -> hidden -> channels) with SiLU between layers and a
// sinusoidal timestep embedding projected to per-channel biases of the two
// hidden layers.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fera/adapters.hpp"
#include "fera/field.hpp"
#include "fera/params.hpp"
#include "fera/routing_weights.hpp"
#include "fera/tape.hpp"

namespace fera {

struct DenoiserConfig {
  std::size_t channels = 1;
  std::size_t hidden = 16;
  std::size_t embed_dim = 32;
};

inline constexpr std::size_t kDenoiserLayers = 3;

/// Layer topology, ids 0..2.
std::vector<ConvLayerSpec> denoiser_layers(const DenoiserConfig& config);

/// Tensors base/conv{l}/weight, base/conv{l}/bias for l = 0..2 and base/temb{l}/proj for l = 0..1.
template <class T>
ParameterSet<T> zero_denoiser(const DenoiserConfig& config);

/// He-scaled Gaussian conv weights, small projections, zero biases. Deterministic per seed.
template <class T>
ParameterSet<T> init_denoiser(const DenoiserConfig& config, std::uint64_t seed);

/// Sinusoidal embedding of t / total_steps: sin in the first half, cos in the second.
std::vector<double> timestep_embedding(std::size_t t, std::size_t total_steps, std::size_t dim);

/// Forward pass on a tape. base_vars follows the ParameterSet order; weight_deltas has one
/// optional entry per layer that is added to that layer's weight. Throws NumericError naming
/// the layer if an activation is non-finite.
template <class T>
Var denoiser_forward(Tape<T>& tape, const DenoiserConfig& config, std::span<const Var> base_vars, Var x, Var temb,
                     std::span<const std::optional<Var>> weight_deltas = {});

/// Adapter bank plus the routing weights chosen for one denoiser call.
template <class T>
struct AdapterContext {
  const ExpertBank<T>* bank = nullptr;
  RoutingWeights weights;
};

/// Epsilon prediction for a single field.
template <class T>
BasicField<T> denoise(const ParameterSet<T>& params, const DenoiserConfig& config, const BasicField<T>& x_t,
                      std::size_t t, std::size_t total_steps, const AdapterContext<T>* adapters = nullptr);

}  // namespace fera
