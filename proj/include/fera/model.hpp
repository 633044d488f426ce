#pragma once

// A frozen base denoiser with an optional routed expert bank, plus the DDPM
// ancestral sampler that drives it.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "fera/adapters.hpp"
#include "fera/denoiser.hpp"
#include "fera/params.hpp"
#include "fera/routing.hpp"
#include "fera/schedule.hpp"
#include "fera/spectrum.hpp"

namespace fera {

struct AdapterModel {
  DenoiserConfig config;
  ParameterSet<float> base;
  std::optional<ExpertBank<float>> experts;
  std::optional<RouterParams<float>> router;
  RoutingSpec routing;
  FilterBank bank;

  bool has_adapters() const noexcept { return experts.has_value(); }

  /// Routing weights for the latent x_t at step t (uniform when there are no adapters).
  RoutingWeights route_at(const Field& x_t, std::size_t t, std::size_t total_steps, RoutingStats* stats = nullptr) const;

  /// Epsilon prediction with adapters routed for (x_t, t); returns the weights used.
  Field predict(const Field& x_t, std::size_t t, std::size_t total_steps, RoutingWeights* used = nullptr,
                RoutingStats* stats = nullptr) const;

  /// The same prediction without adapters.
  Field predict_base(const Field& x_t, std::size_t t, std::size_t total_steps) const;
};

/// Checkpoint layout: base/*, expert*/..., router/* tensors; meta keys describe the topology.
Checkpoint model_checkpoint(const AdapterModel& model);
AdapterModel model_from_checkpoint(const Checkpoint& ckpt);

/// Descending steps t_i = round(i * T / S) for i = S..1.
std::vector<std::size_t> sampling_timesteps(std::size_t steps, std::size_t total_steps);

struct SampleOptions {
  std::size_t steps = 30;
  std::uint64_t seed = 0;
  Shape shape{1, 32, 32};
  bool keep_trajectory = false;
};

struct DiffusionSample {
  std::vector<Field> trajectory;  ///< x_T first, then one entry per step when kept
  Field final;
  std::uint64_t seed = 0;
  std::vector<TraceRow> trace;  ///< one row per step: t, FEI of x_t, routing weights
  RoutingStats stats;
};

/// DDPM ancestral sampling over the strided sub-schedule. Deterministic given options.seed.
DiffusionSample sample(const AdapterModel& model, const NoiseSchedule& schedule, const SampleOptions& options);

/// Ancestral update from step t to t_prev given an epsilon prediction and unit noise z.
template <class T>
BasicField<T> ancestral_step(const BasicField<T>& x_t, const BasicField<T>& eps_hat, std::size_t t, std::size_t t_prev,
                             const NoiseSchedule& schedule, const BasicField<T>& z);

}  // namespace fera
