#pragma once

// Training objective: epsilon-space denoising loss, the frequency-energy
// consistency loss between the adapter correction and the residual, their
// weighted sum, and the single-threaded trainer for the base network
// (pretraining) and for the expert bank plus router (adaptation).

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fera/adapters.hpp"
#include "fera/denoiser.hpp"
#include "fera/field.hpp"
#include "fera/model.hpp"
#include "fera/routing.hpp"
#include "fera/schedule.hpp"
#include "fera/spectrum.hpp"
#include "fera/tape.hpp"

namespace fera {

/// Mean of (eps_hat - eps)^2.
template <class T>
double denoise_loss(const BasicField<T>& eps_hat, const BasicField<T>& eps);

/// Source of the per-band weights w_k.
enum class FeclWeighting { fei_xt, fei_x0, uniform };
FeclWeighting parse_fecl_weighting(const std::string& name);
const char* fecl_weighting_name(FeclWeighting w) noexcept;

struct FeclTerms {
  FieldD delta;
  FieldD residual;
  std::vector<double> delta_profile;     ///< ||delta^(k)|| / norm(delta)
  std::vector<double> residual_profile;  ///< ||r^(k)|| / norm(r)
  std::vector<double> weights;
  double value = 0.0;
  bool degenerate = false;  ///< delta or r carried no energy; value is 0
};

/// The profile normaliser is the root of the summed band energies, so each profile has unit length.
template <class T>
FeclTerms fecl(const BasicField<T>& z_lora, const BasicField<T>& z_base, const BasicField<T>& z_true,
               const FilterBank& bank, std::span<const double> weights);

/// Tape version. z_base and z_true are expected to be constants. Sets *degenerate and returns a
/// zero constant when either operand has no energy.
template <class T>
Var fecl_on_tape(Tape<T>& tape, Var z_lora, Var z_base, Var z_true, const std::vector<Kernel2D<T>>& kernels,
                 std::span<const double> weights, bool* degenerate = nullptr);

/// FECL weights for a training sample.
template <class T>
std::vector<double> fecl_weights(FeclWeighting kind, const BasicField<T>& x_t, const BasicField<T>& x0,
                                 const FilterBank& bank);

/// One training example for the adaptation loss.
template <class T>
struct LossSample {
  BasicField<T> x0;
  BasicField<T> x_t;
  BasicField<T> eps;
  BasicField<T> eps_base;  ///< frozen-base prediction at (x_t, t)
  std::size_t t = 0;
  double alpha_bar = 1.0;
  std::vector<double> fecl_weights;
  std::vector<double> router_input;  ///< used by router modes
  RoutingWeights fixed_weights;      ///< used by none / discrete modes
};

/// Fixed pieces of the adapted network.
template <class T>
struct AdapterGraph {
  DenoiserConfig config;
  const ParameterSet<T>* base = nullptr;
  const ExpertBank<T>* bank = nullptr;
  const RouterParams<T>* router = nullptr;  ///< shapes only; values come from the trainable vars
  RoutingMode mode = RoutingMode::fei_soft;
  std::size_t total_steps = 1000;
  const FilterBank* filters = nullptr;
  std::vector<Kernel2D<T>> kernels;  ///< filters->kernels<T>(H, W)
};

template <class T>
struct LossGraph {
  Var total;
  Var denoise;
  Var eps_hat;
  std::optional<Var> fecl;
  Var alpha;
  bool fecl_degenerate = false;
};

/// Builds L = L_denoise + lambda_f * L_FECL. trainable holds the expert factors in
/// ExpertBank::to_parameter_set() order followed by the four router tensors when the mode uses a
/// router. The FECL branch is only recorded when lambda_f > 0.
template <class T>
LossGraph<T> build_adapter_loss(Tape<T>& tape, const AdapterGraph<T>& graph, std::span<const Var> trainable,
                                const LossSample<T>& s, double lambda_f);

struct TrainConfig {
  double lambda_f = 0.1;
  double lr = 1e-3;
  std::size_t steps = 2000;
  std::size_t batch = 8;
  std::uint64_t seed = 0;
  std::size_t n_bands = 3;
  std::size_t experts = 3;
  std::size_t rank = 4;
  double scale = 1.0;
  double tau = kDefaultTau;
  ScheduleKind schedule = ScheduleKind::linear;
  std::size_t total_steps = 1000;
  RoutingMode routing = RoutingMode::fei_soft;
  FeclWeighting weighting = FeclWeighting::fei_xt;
  double grad_clip = 1.0;
  double weight_decay = 0.0;
  std::vector<std::size_t> attachment{1};
  std::vector<std::size_t> thresholds;
  DenoiserConfig denoiser;
  /// Validation every this many steps (0: only before the first and after the last step).
  std::size_t val_every = 0;

  /// Throws DomainError on invalid values.
  void validate() const;
};

/// A fixed set of (field, step, noise) triples. Steps are stratified over [1, T].
struct ValidationSet {
  std::vector<Field> x0;
  std::vector<std::size_t> t;
  std::vector<Field> noise;
};

ValidationSet make_validation_set(const std::vector<Field>& fields, std::size_t total_steps, std::uint64_t seed);

struct TrainData {
  std::vector<Field> train;
  ValidationSet validation;
};

struct StepLog {
  std::size_t step = 0;
  double loss_denoise = 0.0;
  double loss_fecl = 0.0;
  double loss_total = 0.0;
  double routing_entropy = 0.0;
};

struct TrainReport {
  std::vector<StepLog> log;
  std::vector<std::pair<std::size_t, double>> validation;  ///< (step, loss)
  double initial_val_loss = 0.0;
  double final_val_loss = 0.0;
  std::size_t trainable_parameters = 0;
  std::size_t adapter_parameters = 0;
  std::size_t degenerate_fecl = 0;
};

/// Header `step,loss_denoise,loss_fecl,loss_total,routing_entropy`.
void write_train_csv(std::ostream& os, const std::vector<StepLog>& log);
/// Header `step,val_loss`.
void write_validation_csv(std::ostream& os, const TrainReport& report);

/// Mean denoise loss of the model over the validation set.
double validation_loss(const AdapterModel& model, const NoiseSchedule& schedule, const ValidationSet& val);

/// Fresh base-only model for pretraining.
AdapterModel make_base_model(const TrainConfig& config, std::uint64_t seed);
/// Attaches a neutral expert bank and a router (when the mode uses one) to a trained base.
/// The caller sets the filter bank, which depends on the field size.
AdapterModel make_adapter_model(const TrainConfig& config, const ParameterSet<float>& base);

/// Trains the base parameters with the plain denoising loss.
TrainReport pretrain(const TrainConfig& config, const TrainData& data, AdapterModel& model);
/// Trains only the expert factors and router; the base stays byte-identical.
TrainReport adapt(const TrainConfig& config, const TrainData& data, AdapterModel& model);

/// AdamW with bias correction; decoupled weight decay.
class AdamW {
 public:
  AdamW(std::size_t n, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<float> params, std::span<const double> grads);

 private:
  double lr_, wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

/// Scales grads so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_global_norm(std::span<double> grads, double max_norm);

}  // namespace fera
