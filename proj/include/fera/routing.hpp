#pragma once

// Soft frequency router (FEI -> MLP -> softmax(logits / tau)), its timestep-keyed
// ablation variant, hard (argmax) variants and the discrete threshold baseline.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fera/field.hpp"
#include "fera/params.hpp"
#include "fera/routing_weights.hpp"
#include "fera/spectrum.hpp"
#include "fera/tape.hpp"

namespace fera {

enum class RoutingMode { none, fei_soft, fei_hard, timestep_soft, timestep_hard, discrete };

RoutingMode parse_routing_mode(const std::string& name);
const char* routing_mode_name(RoutingMode mode) noexcept;
/// True for modes whose weights come from the router MLP.
bool uses_router(RoutingMode mode) noexcept;
bool uses_fei(RoutingMode mode) noexcept;
bool is_hard(RoutingMode mode) noexcept;

inline constexpr double kDefaultTau = 0.7;
inline constexpr std::size_t kRouterHidden = 16;

/// Two-layer perceptron n_inputs -> hidden -> experts with SiLU in between.
template <class T>
struct RouterParams {
  std::size_t inputs = 0;
  std::size_t hidden = kRouterHidden;
  std::size_t experts = 0;
  double tau = kDefaultTau;
  std::vector<T> w1;  ///< hidden x inputs
  std::vector<T> b1;  ///< hidden
  std::vector<T> w2;  ///< experts x hidden
  std::vector<T> b2;  ///< experts

  void validate() const;
  /// Tensors router/w1, router/b1, router/w2, router/b2.
  ParameterSet<T> to_parameter_set() const;
  void assign(const ParameterSet<T>& params);
};

/// Xavier-scaled Gaussian weights and zero biases, deterministic per seed.
template <class T>
RouterParams<T> init_router(std::size_t inputs, std::size_t experts, double tau, std::uint64_t seed,
                            std::size_t hidden = kRouterHidden);

/// All weights and biases zero, so every input maps to uniform weights.
template <class T>
RouterParams<T> zero_router(std::size_t inputs, std::size_t experts, double tau, std::size_t hidden = kRouterHidden);

/// MLP output, evaluated in double.
template <class T>
std::vector<double> router_logits(const RouterParams<T>& params, std::span<const double> input);

/// Numerically stable softmax(logits / tau). Throws NumericError on non-finite logits.
RoutingWeights softmax_weights(std::span<const double> logits, double tau);

template <class T>
RoutingWeights route_soft(const RouterParams<T>& params, const FeiVector& e);

/// Router input for the timestep ablation: t / T repeated across the input width.
std::vector<double> timestep_input(std::size_t t, std::size_t total_steps, std::size_t width);

template <class T>
RoutingWeights route_timestep_soft(const RouterParams<T>& params, std::size_t t, std::size_t total_steps);

/// Thresholds T*j/M for j = 1..M-1, rounded to the nearest step.
std::vector<std::size_t> even_thresholds(std::size_t experts, std::size_t total_steps);

/// One-hot on expert j = #{thresholds >= t}: the noisiest interval maps to expert 0 and a step equal
/// to a threshold belongs to the later (less noisy) interval.
RoutingWeights route_discrete(std::span<const std::size_t> thresholds, std::size_t t, std::size_t total_steps);

/// Router on a tape. param_vars are w1, b1, w2, b2; input is a vector node. With hard set the
/// forward value is the one-hot argmax and the gradient is the softmax's (straight-through).
template <class T>
Var router_forward(Tape<T>& tape, const RouterParams<T>& shape_source, std::span<const Var> param_vars, Var input,
                   bool hard);

/// Everything needed to turn a latent and a step into routing weights.
struct RoutingSpec {
  RoutingMode mode = RoutingMode::fei_soft;
  std::size_t experts = 1;
  std::vector<std::size_t> thresholds;  ///< discrete mode; empty means even_thresholds
};

struct RoutingStats {
  std::size_t degenerate_fallbacks = 0;
};

/// Router input for a mode: FEI of x_t for FEI modes, the repeated timestep otherwise.
/// Throws DegenerateInputError when the FEI is undefined.
template <class T>
std::vector<double> router_input(RoutingMode mode, const BasicField<T>& x_t, std::size_t t, std::size_t total_steps,
                                 const FilterBank& bank, std::size_t width);

/// Dispatches on the mode. Zero-energy latents in FEI modes fall back to uniform weights and
/// increment stats->degenerate_fallbacks.
template <class T>
RoutingWeights route(const RoutingSpec& spec, const RouterParams<T>* router, const BasicField<T>& x_t, std::size_t t,
                     std::size_t total_steps, const FilterBank& bank, RoutingStats* stats = nullptr);

double routing_entropy(const RoutingWeights& w);

struct TraceRow {
  std::size_t t = 0;
  std::vector<double> e;
  std::vector<double> alpha;
};

/// Header `t,e1..en,a1..aM`.
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows);

/// Largest adjacent-row infinity-norm change of the alpha columns.
double max_adjacent_jump(const std::vector<TraceRow>& rows);

}  // namespace fera
