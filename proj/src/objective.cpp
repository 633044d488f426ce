#include "fera/objective.hpp"

#include <cmath>
#include <ostream>

#include "fera/csv.hpp"
#include "fera/diffusion.hpp"
#include "fera/errors.hpp"
#include "fera/rng.hpp"

namespace fera {

template <class T>
double denoise_loss(const BasicField<T>& eps_hat, const BasicField<T>& eps) {
  require_same_shape(eps_hat, eps, "denoise_loss");
  if (eps.size() == 0) throw ShapeError("denoise_loss of empty fields");
  double acc = 0.0;
  auto a = eps_hat.data();
  auto b = eps.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

FeclWeighting parse_fecl_weighting(const std::string& name) {
  if (name == "fei_xt") return FeclWeighting::fei_xt;
  if (name == "fei_x0") return FeclWeighting::fei_x0;
  if (name == "uniform") return FeclWeighting::uniform;
  throw ConfigError("unknown FECL weighting '" + name + "'");
}

const char* fecl_weighting_name(FeclWeighting w) noexcept {
  switch (w) {
    case FeclWeighting::fei_xt: return "fei_xt";
    case FeclWeighting::fei_x0: return "fei_x0";
    case FeclWeighting::uniform: return "uniform";
  }
  return "unknown";
}

namespace {

/// Band norms divided by the root of the summed band energies. Empty when the energy vanishes.
std::vector<double> band_profile(const std::vector<double>& energies) {
  double total = 0.0;
  for (double e : energies) total += e;
  if (!(total > kEnergyEpsilon)) return {};
  std::vector<double> p(energies.size());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::sqrt(energies[k] / total);
  return p;
}

void check_weights(std::span<const double> weights, std::size_t n) {
  if (weights.size() != n) throw ShapeError("FECL weight count does not match the band count");
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("FECL weights must be finite and non-negative");
  }
}

}  // namespace

template <class T>
FeclTerms fecl(const BasicField<T>& z_lora, const BasicField<T>& z_base, const BasicField<T>& z_true,
               const FilterBank& bank, std::span<const double> weights) {
  require_same_shape(z_lora, z_base, "fecl");
  require_same_shape(z_lora, z_true, "fecl");
  check_weights(weights, bank.n_bands);
  FeclTerms out;
  const FieldD lora = z_lora.template cast<double>();
  out.delta = lora - z_base.template cast<double>();
  out.residual = lora - z_true.template cast<double>();
  out.weights.assign(weights.begin(), weights.end());
  out.delta_profile = band_profile(band_energies(out.delta, bank));
  out.residual_profile = band_profile(band_energies(out.residual, bank));
  if (out.delta_profile.empty() || out.residual_profile.empty()) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t k = 0; k < bank.n_bands; ++k) {
    const double d = out.delta_profile[k] - out.residual_profile[k];
    out.value += weights[k] * d * d;
  }
  return out;
}

namespace {

/// Band norms on the tape, normalised by the root of the summed band energies.
template <class T>
std::optional<std::vector<Var>> tape_profile(Tape<T>& tape, Var x, const std::vector<Kernel2D<T>>& kernels) {
  std::vector<Var> blurred;
  for (const auto& k : kernels) blurred.push_back(tape.conv_depthwise(x, k));
  std::vector<Var> bands;
  bands.push_back(blurred.front());
  for (std::size_t k = 1; k < blurred.size(); ++k) bands.push_back(tape.sub(blurred[k], blurred[k - 1]));
  bands.push_back(tape.sub(x, blurred.back()));
  std::vector<Var> energy;
  for (Var b : bands) energy.push_back(tape.sum_squares(b));
  Var total = energy.front();
  for (std::size_t k = 1; k < energy.size(); ++k) total = tape.add(total, energy[k]);
  if (!(static_cast<double>(tape.scalar(total)) > kEnergyEpsilon)) return std::nullopt;
  std::vector<Var> profile;
  for (Var e : energy) profile.push_back(tape.sqrt(tape.div(e, total)));
  return profile;
}

/// Same arithmetic, in T, as the tape's z_lora so equal predictions give a zero correction.
template <class T>
BasicField<T> x0_from_eps(const BasicField<T>& x_t, const BasicField<T>& eps, double sa, double sb) {
  BasicField<T> out(x_t.shape());
  const T cb = static_cast<T>(sb);
  const T inv = static_cast<T>(1.0 / sa);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = (x_t.data()[i] - eps.data()[i] * cb) * inv;
  return out;
}

}  // namespace

template <class T>
Var fecl_on_tape(Tape<T>& tape, Var z_lora, Var z_base, Var z_true, const std::vector<Kernel2D<T>>& kernels,
                 std::span<const double> weights, bool* degenerate) {
  check_weights(weights, kernels.size() + 1);
  Var delta = tape.sub(z_lora, z_base);
  Var residual = tape.sub(z_lora, z_true);
  auto p = tape_profile(tape, delta, kernels);
  auto q = p ? tape_profile(tape, residual, kernels) : std::nullopt;
  if (degenerate != nullptr) *degenerate = !(p && q);
  if (!(p && q)) return tape.scalar_constant(T{0});
  std::optional<Var> total;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    Var d = tape.sub((*p)[k], (*q)[k]);
    Var term = tape.scale(tape.mul(d, d), static_cast<T>(weights[k]));
    total = total ? tape.add(*total, term) : term;
  }
  return *total;
}

template <class T>
std::vector<double> fecl_weights(FeclWeighting kind, const BasicField<T>& x_t, const BasicField<T>& x0,
                                 const FilterBank& bank) {
  const std::vector<double> uniform(bank.n_bands, 1.0 / static_cast<double>(bank.n_bands));
  try {
    switch (kind) {
      case FeclWeighting::fei_xt: return fei(x_t, bank).e;
      case FeclWeighting::fei_x0: return fei(x0, bank).e;
      case FeclWeighting::uniform: return uniform;
    }
  } catch (const DegenerateInputError&) {
  }
  return uniform;
}

template <class T>
LossGraph<T> build_adapter_loss(Tape<T>& tape, const AdapterGraph<T>& graph, std::span<const Var> trainable,
                                const LossSample<T>& s, double lambda_f) {
  if (graph.base == nullptr || graph.bank == nullptr) throw ConfigError("adapter loss needs a base and a bank");
  const std::size_t n_factors = graph.bank->to_parameter_set().tensor_count();
  const bool routed = uses_router(graph.mode);
  if (trainable.size() != n_factors + (routed ? 4 : 0)) throw ShapeError("trainable variable count mismatch");
  LossGraph<T> g;
  if (routed) {
    if (graph.router == nullptr) throw ConfigError("router mode without router parameters");
    const std::vector<T> in(s.router_input.begin(), s.router_input.end());
    Var input = tape.vector(in, false);
    g.alpha = router_forward(tape, *graph.router, trainable.subspan(n_factors, 4), input, is_hard(graph.mode));
  } else {
    const std::vector<T> a(s.fixed_weights.alpha.begin(), s.fixed_weights.alpha.end());
    g.alpha = tape.vector(a, false);
  }
  std::vector<std::optional<Var>> deltas(kDenoiserLayers);
  for (std::size_t l = 0; l < kDenoiserLayers; ++l) {
    deltas[l] = blended_delta_on_tape(tape, *graph.bank, trainable.subspan(0, n_factors), g.alpha, l);
  }
  const std::vector<Var> base = graph.base->bind(tape, false);
  const std::vector<double> emb = timestep_embedding(s.t, graph.total_steps, graph.config.embed_dim);
  const std::vector<T> emb_t(emb.begin(), emb.end());
  Var temb = tape.vector(emb_t, false);
  Var x_t = tape.input(s.x_t, false);
  Var eps_hat = denoiser_forward(tape, graph.config, base, x_t, temb, deltas);
  g.eps_hat = eps_hat;
  g.denoise = tape.mse(eps_hat, tape.input(s.eps, false));
  g.total = g.denoise;
  if (lambda_f > 0.0) {
    if (graph.filters == nullptr) throw ConfigError("FECL needs a filter bank");
    const double sa = std::sqrt(s.alpha_bar);
    const double sb = std::sqrt(1.0 - s.alpha_bar);
    Var z_lora = tape.scale(tape.sub(x_t, tape.scale(eps_hat, static_cast<T>(sb))), static_cast<T>(1.0 / sa));
    Var z_base = tape.input(x0_from_eps(s.x_t, s.eps_base, sa, sb), false);
    Var z_true = tape.input(s.x0, false);
    g.fecl = fecl_on_tape(tape, z_lora, z_base, z_true, graph.kernels, s.fecl_weights, &g.fecl_degenerate);
    g.total = tape.add(g.denoise, tape.scale(*g.fecl, static_cast<T>(lambda_f)));
  }
  return g;
}

void TrainConfig::validate() const {
  if (!(lambda_f >= 0.0) || !std::isfinite(lambda_f)) throw DomainError("lambda_f must be finite and >= 0");
  if (!(lr > 0.0)) throw DomainError("learning rate must be positive");
  if (batch == 0) throw DomainError("batch size must be positive");
  if (n_bands < 2) throw DomainError("need at least two bands");
  if (experts == 0 || rank == 0) throw DomainError("expert count and rank must be positive");
  if (!(tau > 0.0)) throw DomainError("tau must be positive");
  if (!(grad_clip > 0.0)) throw DomainError("grad_clip must be positive");
  if (!(weight_decay >= 0.0)) throw DomainError("weight_decay must be >= 0");
  if (total_steps < 10) throw DomainError("schedule needs at least 10 steps");
  if (attachment.empty()) throw DomainError("adapters need at least one attached layer");
  for (std::size_t id : attachment) {
    if (id >= kDenoiserLayers) throw DomainError("attachment layer " + std::to_string(id) + " does not exist");
  }
}

ValidationSet make_validation_set(const std::vector<Field>& fields, std::size_t total_steps, std::uint64_t seed) {
  if (fields.empty()) throw DomainError("validation set needs at least one field");
  ValidationSet v;
  const std::size_t n = fields.size();
  for (std::size_t j = 0; j < n; ++j) {
    v.x0.push_back(fields[j]);
    const double pos = (static_cast<double>(j) + 0.5) / static_cast<double>(n);
    v.t.push_back(std::min(total_steps, 1 + static_cast<std::size_t>(pos * static_cast<double>(total_steps))));
    CounterRng rng(seed, 0x56414c, j);
    v.noise.push_back(gaussian_field<float>(fields[j].shape(), rng));
  }
  return v;
}

void write_train_csv(std::ostream& os, const std::vector<StepLog>& log) {
  const std::vector<std::string> header{"step", "loss_denoise", "loss_fecl", "loss_total", "routing_entropy"};
  write_csv_row(os, header);
  for (const auto& r : log) {
    const std::vector<std::string> row{std::to_string(r.step), format_real(r.loss_denoise), format_real(r.loss_fecl),
                                       format_real(r.loss_total), format_real(r.routing_entropy)};
    write_csv_row(os, row);
  }
}

void write_validation_csv(std::ostream& os, const TrainReport& report) {
  const std::vector<std::string> header{"step", "val_loss"};
  write_csv_row(os, header);
  for (const auto& [step, loss] : report.validation) {
    const std::vector<std::string> row{std::to_string(step), format_real(loss)};
    write_csv_row(os, row);
  }
}

double validation_loss(const AdapterModel& model, const NoiseSchedule& schedule, const ValidationSet& val) {
  double acc = 0.0;
  for (std::size_t j = 0; j < val.x0.size(); ++j) {
    const Field x_t = forward_corrupt(val.x0[j], val.t[j], schedule, val.noise[j]);
    acc += denoise_loss(model.predict(x_t, val.t[j], schedule.total_steps), val.noise[j]);
  }
  return acc / static_cast<double>(val.x0.size());
}

AdapterModel make_base_model(const TrainConfig& config, std::uint64_t seed) {
  AdapterModel m;
  m.config = config.denoiser;
  m.base = init_denoiser<float>(config.denoiser, seed);
  m.routing = RoutingSpec{RoutingMode::none, 1, {}};
  return m;
}

AdapterModel make_adapter_model(const TrainConfig& config, const ParameterSet<float>& base) {
  config.validate();
  AdapterModel m;
  m.config = config.denoiser;
  m.base = base;
  const auto layers = denoiser_layers(config.denoiser);
  std::vector<ConvLayerSpec> attachment;
  for (std::size_t id : config.attachment) attachment.push_back(layers[id]);
  m.experts = init_expert_bank<float>(config.experts, config.rank, config.scale, attachment, config.seed);
  m.routing = RoutingSpec{config.routing, config.experts, config.thresholds};
  if (uses_router(config.routing)) {
    m.router = init_router<float>(config.n_bands, config.experts, config.tau, config.seed);
  }
  return m;
}

namespace {

struct Draw {
  std::size_t index = 0;
  std::size_t t = 0;
  Field eps;
};

/// Noise and data choice for one batch element, a pure function of (seed, step, element).
Draw draw(std::uint64_t seed, std::size_t step, std::size_t element, const std::vector<Field>& data,
          std::size_t total_steps) {
  CounterRng rng(seed, 0x5452000000ULL + step, element);
  Draw d;
  d.index = static_cast<std::size_t>(rng.below(data.size()));
  d.t = 1 + static_cast<std::size_t>(rng.below(total_steps));
  d.eps = gaussian_field<float>(data[d.index].shape(), rng);
  return d;
}

void record_validation(TrainReport& report, std::size_t step, double loss) {
  report.validation.emplace_back(step, loss);
}

bool validate_now(const TrainConfig& config, std::size_t step) {
  return config.val_every > 0 && step > 0 && step % config.val_every == 0 && step < config.steps;
}

}  // namespace

double clip_global_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (double& g : grads) g *= s;
  }
  return norm;
}

AdamW::AdamW(std::size_t n, double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void AdamW::step(std::span<float> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw ShapeError("optimizer size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grads[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grads[i] * grads[i];
    const double mh = m_[i] / c1;
    const double vh = v_[i] / c2;
    double p = static_cast<double>(params[i]);
    p -= lr_ * (mh / (std::sqrt(vh) + eps_) + wd_ * p);
    params[i] = static_cast<float>(p);
  }
}

TrainReport pretrain(const TrainConfig& config, const TrainData& data, AdapterModel& model) {
  config.validate();
  if (data.train.empty()) throw ConfigError("pretraining needs training data");
  if (model.has_adapters()) throw ConfigError("pretraining expects a base-only model");
  const NoiseSchedule schedule = make_schedule(config.schedule, config.total_steps);
  TrainReport report;
  report.trainable_parameters = model.base.parameter_count();
  report.initial_val_loss = validation_loss(model, schedule, data.validation);
  record_validation(report, 0, report.initial_val_loss);
  AdamW opt(report.trainable_parameters, config.lr, config.weight_decay);
  std::vector<float> flat = model.base.flatten();
  for (std::size_t step = 0; step < config.steps; ++step) {
    std::vector<double> grads(flat.size(), 0.0);
    StepLog log;
    log.step = step;
    for (std::size_t b = 0; b < config.batch; ++b) {
      const Draw d = draw(config.seed, step, b, data.train, config.total_steps);
      const Field& x0 = data.train[d.index];
      const Field x_t = forward_corrupt(x0, d.t, schedule, d.eps);
      Tape<float> tape;
      const std::vector<Var> vars = model.base.bind(tape, true);
      const std::vector<double> emb = timestep_embedding(d.t, config.total_steps, config.denoiser.embed_dim);
      const std::vector<float> emb_f(emb.begin(), emb.end());
      Var out = denoiser_forward(tape, config.denoiser, vars, tape.input(x_t, false), tape.vector(emb_f, false));
      Var loss = tape.mse(out, tape.input(d.eps, false));
      tape.backward(loss);
      std::size_t off = 0;
      for (Var v : vars) {
        for (float g : tape.grad(v)) grads[off++] += static_cast<double>(g);
      }
      log.loss_denoise += static_cast<double>(tape.scalar(loss));
    }
    const double inv_b = 1.0 / static_cast<double>(config.batch);
    for (double& g : grads) g *= inv_b;
    log.loss_denoise *= inv_b;
    log.loss_total = log.loss_denoise;
    report.log.push_back(log);
    clip_global_norm(grads, config.grad_clip);
    opt.step(flat, grads);
    model.base.assign_flat(flat);
    if (validate_now(config, step + 1)) record_validation(report, step + 1, validation_loss(model, schedule, data.validation));
  }
  report.final_val_loss = config.steps == 0 ? report.initial_val_loss : validation_loss(model, schedule, data.validation);
  if (config.steps > 0) record_validation(report, config.steps, report.final_val_loss);
  return report;
}

TrainReport adapt(const TrainConfig& config, const TrainData& data, AdapterModel& model) {
  config.validate();
  if (data.train.empty()) throw ConfigError("adaptation needs training data");
  if (!model.has_adapters()) throw ConfigError("adaptation needs an expert bank");
  if (uses_router(model.routing.mode) && !model.router) throw ConfigError("routing mode needs a router");
  const NoiseSchedule schedule = make_schedule(config.schedule, config.total_steps);
  const Shape shape = data.train.front().shape();
  TrainReport report;
  report.adapter_parameters = model.experts->parameter_count();

  AdapterGraph<float> graph;
  graph.config = model.config;
  graph.base = &model.base;
  graph.bank = &*model.experts;
  graph.router = model.router ? &*model.router : nullptr;
  graph.mode = model.routing.mode;
  graph.total_steps = config.total_steps;
  graph.filters = &model.bank;
  graph.kernels = model.bank.kernels<float>(shape.height, shape.width);
  const bool routed = uses_router(model.routing.mode);

  auto gather = [&]() {
    ParameterSet<float> p = model.experts->to_parameter_set();
    if (routed) {
      const ParameterSet<float> r = model.router->to_parameter_set();
      for (const auto& t : r.tensors()) p.add(t.name, t.dims, t.values);
    }
    return p;
  };
  ParameterSet<float> trainable = gather();
  report.trainable_parameters = trainable.parameter_count();
  report.initial_val_loss = validation_loss(model, schedule, data.validation);
  record_validation(report, 0, report.initial_val_loss);
  AdamW opt(report.trainable_parameters, config.lr, config.weight_decay);
  std::vector<float> flat = trainable.flatten();

  for (std::size_t step = 0; step < config.steps; ++step) {
    std::vector<double> grads(flat.size(), 0.0);
    StepLog log;
    log.step = step;
    for (std::size_t b = 0; b < config.batch; ++b) {
      const Draw d = draw(config.seed, step, b, data.train, config.total_steps);
      LossSample<float> s;
      s.x0 = data.train[d.index];
      s.eps = d.eps;
      s.t = d.t;
      s.alpha_bar = schedule.alpha_bar[d.t];
      s.x_t = forward_corrupt(s.x0, d.t, schedule, s.eps);
      s.eps_base = model.predict_base(s.x_t, d.t, config.total_steps);
      s.fecl_weights = fecl_weights(config.weighting, s.x_t, s.x0, model.bank);
      if (routed) {
        try {
          s.router_input = router_input(model.routing.mode, s.x_t, d.t, config.total_steps, model.bank,
                                        model.router->inputs);
        } catch (const DegenerateInputError&) {
          s.router_input.assign(model.router->inputs, 1.0 / static_cast<double>(model.router->inputs));
        }
      } else {
        s.fixed_weights = model.route_at(s.x_t, d.t, config.total_steps);
      }
      Tape<float> tape;
      const std::vector<Var> vars = trainable.bind(tape, true);
      const LossGraph<float> g = build_adapter_loss(tape, graph, vars, s, config.lambda_f);
      tape.backward(g.total);
      std::size_t off = 0;
      for (Var v : vars) {
        for (float gv : tape.grad(v)) grads[off++] += static_cast<double>(gv);
      }
      log.loss_denoise += static_cast<double>(tape.scalar(g.denoise));
      log.loss_total += static_cast<double>(tape.scalar(g.total));
      double fecl_value = 0.0;
      bool degenerate = false;
      if (g.fecl) {
        fecl_value = static_cast<double>(tape.scalar(*g.fecl));
        degenerate = g.fecl_degenerate;
      } else {
        const double sa = std::sqrt(s.alpha_bar);
        const double sb = std::sqrt(1.0 - s.alpha_bar);
        const Field eps_hat = tape.field(g.eps_hat);
        const FeclTerms terms = fecl(x0_from_eps(s.x_t, eps_hat, sa, sb), x0_from_eps(s.x_t, s.eps_base, sa, sb),
                                     s.x0, model.bank, s.fecl_weights);
        fecl_value = terms.value;
        degenerate = terms.degenerate;
      }
      if (degenerate) ++report.degenerate_fecl;
      log.loss_fecl += fecl_value;
      RoutingWeights used;
      for (float a : tape.value(g.alpha)) used.alpha.push_back(static_cast<double>(a));
      log.routing_entropy += routing_entropy(used);
    }
    const double inv_b = 1.0 / static_cast<double>(config.batch);
    for (double& gv : grads) gv *= inv_b;
    log.loss_denoise *= inv_b;
    log.loss_fecl *= inv_b;
    log.loss_total *= inv_b;
    log.routing_entropy *= inv_b;
    report.log.push_back(log);
    clip_global_norm(grads, config.grad_clip);
    opt.step(flat, grads);
    trainable.assign_flat(flat);
    model.experts->assign(trainable);
    if (routed) model.router->assign(trainable);
    if (validate_now(config, step + 1)) record_validation(report, step + 1, validation_loss(model, schedule, data.validation));
  }
  report.final_val_loss = config.steps == 0 ? report.initial_val_loss : validation_loss(model, schedule, data.validation);
  if (config.steps > 0) record_validation(report, config.steps, report.final_val_loss);
  return report;
}

#define FERA_INSTANTIATE_OBJECTIVE(T)                                                                              \
  template double denoise_loss<T>(const BasicField<T>&, const BasicField<T>&);                                     \
  template FeclTerms fecl<T>(const BasicField<T>&, const BasicField<T>&, const BasicField<T>&, const FilterBank&,  \
                             std::span<const double>);                                                             \
  template Var fecl_on_tape<T>(Tape<T>&, Var, Var, Var, const std::vector<Kernel2D<T>>&, std::span<const double>,  \
                               bool*);                                                                             \
  template std::vector<double> fecl_weights<T>(FeclWeighting, const BasicField<T>&, const BasicField<T>&,          \
                                               const FilterBank&);                                                 \
  template LossGraph<T> build_adapter_loss<T>(Tape<T>&, const AdapterGraph<T>&, std::span<const Var>,              \
                                              const LossSample<T>&, double);

FERA_INSTANTIATE_OBJECTIVE(float)
FERA_INSTANTIATE_OBJECTIVE(double)

}  // namespace fera
