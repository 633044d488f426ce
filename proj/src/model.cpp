#include "fera/model.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "fera/errors.hpp"
#include "fera/rng.hpp"

namespace fera {

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return v.empty() ? "-" : os.str();
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  if (s == "-" || s.empty()) return out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(static_cast<std::size_t>(std::stoull(item)));
  return out;
}

std::string join_reals(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return v.empty() ? "-" : os.str();
}

std::vector<double> split_reals(const std::string& s) {
  std::vector<double> out;
  if (s == "-" || s.empty()) return out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(std::stod(item));
  return out;
}

const std::string& meta_at(const Checkpoint& c, const std::string& key) {
  auto it = c.meta.find(key);
  if (it == c.meta.end()) throw LookupError("checkpoint is missing meta key '" + key + "'");
  return it->second;
}

}  // namespace

RoutingWeights AdapterModel::route_at(const Field& x_t, std::size_t t, std::size_t total_steps,
                                      RoutingStats* stats) const {
  if (!experts) return RoutingWeights::uniform(1);
  return route(routing, router ? &*router : nullptr, x_t, t, total_steps, bank, stats);
}

Field AdapterModel::predict(const Field& x_t, std::size_t t, std::size_t total_steps, RoutingWeights* used,
                            RoutingStats* stats) const {
  if (!experts) {
    if (used != nullptr) *used = RoutingWeights::uniform(1);
    return predict_base(x_t, t, total_steps);
  }
  AdapterContext<float> ctx{&*experts, route_at(x_t, t, total_steps, stats)};
  if (used != nullptr) *used = ctx.weights;
  return denoise(base, config, x_t, t, total_steps, &ctx);
}

Field AdapterModel::predict_base(const Field& x_t, std::size_t t, std::size_t total_steps) const {
  return denoise(base, config, x_t, t, total_steps);
}

Checkpoint model_checkpoint(const AdapterModel& model) {
  Checkpoint c;
  c.meta["model.channels"] = std::to_string(model.config.channels);
  c.meta["model.hidden"] = std::to_string(model.config.hidden);
  c.meta["model.embed_dim"] = std::to_string(model.config.embed_dim);
  c.meta["spectrum.sigmas"] = join_reals(model.bank.sigmas);
  c.meta["routing.mode"] = routing_mode_name(model.routing.mode);
  c.meta["routing.experts"] = std::to_string(model.routing.experts);
  c.meta["routing.thresholds"] = join_sizes(model.routing.thresholds);
  c.meta["adapters.present"] = model.experts ? "1" : "0";
  c.meta["router.present"] = model.router ? "1" : "0";
  for (const auto& t : model.base.tensors()) c.params.add(t.name, t.dims, t.values);
  if (model.experts) {
    std::vector<std::size_t> ids;
    for (const auto& a : model.experts->attachment) ids.push_back(a.id);
    c.meta["adapters.rank"] = std::to_string(model.experts->rank);
    std::ostringstream scale;
    scale.precision(17);
    scale << model.experts->scale;
    c.meta["adapters.scale"] = scale.str();
    c.meta["adapters.layers"] = join_sizes(ids);
    const ParameterSet<float> factors = model.experts->to_parameter_set();
    for (const auto& t : factors.tensors()) c.params.add(t.name, t.dims, t.values);
  }
  if (model.router) {
    c.meta["router.inputs"] = std::to_string(model.router->inputs);
    c.meta["router.hidden"] = std::to_string(model.router->hidden);
    std::ostringstream tau;
    tau.precision(17);
    tau << model.router->tau;
    c.meta["router.tau"] = tau.str();
    const ParameterSet<float> router = model.router->to_parameter_set();
    for (const auto& t : router.tensors()) c.params.add(t.name, t.dims, t.values);
  }
  return c;
}

AdapterModel model_from_checkpoint(const Checkpoint& ckpt) {
  AdapterModel m;
  m.config.channels = std::stoull(meta_at(ckpt, "model.channels"));
  m.config.hidden = std::stoull(meta_at(ckpt, "model.hidden"));
  m.config.embed_dim = std::stoull(meta_at(ckpt, "model.embed_dim"));
  m.base = zero_denoiser<float>(m.config);
  for (std::size_t i = 0; i < m.base.tensor_count(); ++i) {
    auto& t = m.base.at(i);
    const auto& src = ckpt.params.find(t.name);
    if (src.values.size() != t.values.size()) throw ShapeError("checkpoint tensor " + t.name + " has the wrong size");
    t.values = src.values;
  }
  m.bank = filter_bank_from_sigmas(split_reals(meta_at(ckpt, "spectrum.sigmas")));
  m.routing.mode = parse_routing_mode(meta_at(ckpt, "routing.mode"));
  m.routing.experts = std::stoull(meta_at(ckpt, "routing.experts"));
  m.routing.thresholds = split_sizes(meta_at(ckpt, "routing.thresholds"));
  if (meta_at(ckpt, "adapters.present") == "1") {
    const auto ids = split_sizes(meta_at(ckpt, "adapters.layers"));
    const auto layers = denoiser_layers(m.config);
    std::vector<ConvLayerSpec> attachment;
    for (std::size_t id : ids) {
      if (id >= layers.size()) throw DomainError("checkpoint attaches an adapter to unknown layer " + std::to_string(id));
      attachment.push_back(layers[id]);
    }
    m.experts = init_expert_bank<float>(m.routing.experts, std::stoull(meta_at(ckpt, "adapters.rank")),
                                        std::stod(meta_at(ckpt, "adapters.scale")), attachment, 0);
    m.experts->assign(ckpt.params);
  }
  if (meta_at(ckpt, "router.present") == "1") {
    m.router = zero_router<float>(std::stoull(meta_at(ckpt, "router.inputs")), m.routing.experts,
                                  std::stod(meta_at(ckpt, "router.tau")), std::stoull(meta_at(ckpt, "router.hidden")));
    m.router->assign(ckpt.params);
  }
  return m;
}

std::vector<std::size_t> sampling_timesteps(std::size_t steps, std::size_t total_steps) {
  if (steps == 0) throw DomainError("sampling needs at least one step");
  if (steps > total_steps) {
    throw DomainError("sampling steps (" + std::to_string(steps) + ") exceed the schedule length (" +
                      std::to_string(total_steps) + ")");
  }
  std::vector<std::size_t> out;
  for (std::size_t i = steps; i >= 1; --i) {
    out.push_back(static_cast<std::size_t>(
        std::llround(static_cast<double>(i) * static_cast<double>(total_steps) / static_cast<double>(steps))));
  }
  return out;
}

template <class T>
BasicField<T> ancestral_step(const BasicField<T>& x_t, const BasicField<T>& eps_hat, std::size_t t, std::size_t t_prev,
                             const NoiseSchedule& schedule, const BasicField<T>& z) {
  require_same_shape(x_t, eps_hat, "ancestral_step");
  schedule.check_step(t);
  schedule.check_step(t_prev);
  if (t_prev >= t) throw DomainError("ancestral step must move to an earlier step");
  const double ab = schedule.alpha_bar[t];
  const double ab_prev = schedule.alpha_bar[t_prev];
  const double beta = 1.0 - ab / ab_prev;
  const double c_eps = beta / std::sqrt(1.0 - ab);
  const double inv = 1.0 / std::sqrt(1.0 - beta);
  const double var = t_prev == 0 ? 0.0 : beta * (1.0 - ab_prev) / (1.0 - ab);
  const double sigma = std::sqrt(std::max(var, 0.0));
  BasicField<T> out(x_t.shape());
  auto o = out.data();
  auto x = x_t.data();
  auto e = eps_hat.data();
  if (sigma > 0.0) require_same_shape(x_t, z, "ancestral_step noise");
  for (std::size_t i = 0; i < o.size(); ++i) {
    double v = (static_cast<double>(x[i]) - c_eps * static_cast<double>(e[i])) * inv;
    if (sigma > 0.0) v += sigma * static_cast<double>(z.data()[i]);
    o[i] = static_cast<T>(v);
  }
  return out;
}

DiffusionSample sample(const AdapterModel& model, const NoiseSchedule& schedule, const SampleOptions& options) {
  const auto steps = sampling_timesteps(options.steps, schedule.total_steps);
  DiffusionSample s;
  s.seed = options.seed;
  CounterRng init(options.seed, 0x53414d50, 0);
  Field x = gaussian_field<float>(options.shape, init);
  if (options.keep_trajectory) s.trajectory.push_back(x);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::size_t t = steps[i];
    const std::size_t t_prev = i + 1 < steps.size() ? steps[i + 1] : 0;
    TraceRow row;
    row.t = t;
    try {
      row.e = fei(x, model.bank).e;
    } catch (const DegenerateInputError&) {
      row.e.assign(model.bank.n_bands, 1.0 / static_cast<double>(model.bank.n_bands));
    }
    RoutingWeights used;
    const Field eps = model.predict(x, t, schedule.total_steps, &used, &s.stats);
    row.alpha = used.alpha;
    s.trace.push_back(std::move(row));
    CounterRng noise(options.seed, 0x53414d50, i + 1);
    const Field z = t_prev == 0 ? Field() : gaussian_field<float>(options.shape, noise);
    x = ancestral_step(x, eps, t, t_prev, schedule, z);
    if (!all_finite(x)) throw NumericError("sampler produced non-finite values at step " + std::to_string(t));
    if (options.keep_trajectory) s.trajectory.push_back(x);
  }
  s.final = x;
  return s;
}

template Field ancestral_step<float>(const Field&, const Field&, std::size_t, std::size_t, const NoiseSchedule&,
                                     const Field&);
template FieldD ancestral_step<double>(const FieldD&, const FieldD&, std::size_t, std::size_t, const NoiseSchedule&,
                                       const FieldD&);

}  // namespace fera
