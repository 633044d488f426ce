#include "fera/routing.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "fera/csv.hpp"
#include "fera/errors.hpp"
#include "fera/log.hpp"
#include "fera/rng.hpp"

namespace fera {

RoutingMode parse_routing_mode(const std::string& name) {
  if (name == "none") return RoutingMode::none;
  if (name == "fei_soft") return RoutingMode::fei_soft;
  if (name == "fei_hard") return RoutingMode::fei_hard;
  if (name == "timestep_soft") return RoutingMode::timestep_soft;
  if (name == "timestep_hard") return RoutingMode::timestep_hard;
  if (name == "discrete") return RoutingMode::discrete;
  throw ConfigError("unknown routing mode '" + name + "'");
}

const char* routing_mode_name(RoutingMode mode) noexcept {
  switch (mode) {
    case RoutingMode::none: return "none";
    case RoutingMode::fei_soft: return "fei_soft";
    case RoutingMode::fei_hard: return "fei_hard";
    case RoutingMode::timestep_soft: return "timestep_soft";
    case RoutingMode::timestep_hard: return "timestep_hard";
    case RoutingMode::discrete: return "discrete";
  }
  return "unknown";
}

bool uses_router(RoutingMode mode) noexcept {
  return mode == RoutingMode::fei_soft || mode == RoutingMode::fei_hard || mode == RoutingMode::timestep_soft ||
         mode == RoutingMode::timestep_hard;
}

bool uses_fei(RoutingMode mode) noexcept { return mode == RoutingMode::fei_soft || mode == RoutingMode::fei_hard; }

bool is_hard(RoutingMode mode) noexcept {
  return mode == RoutingMode::fei_hard || mode == RoutingMode::timestep_hard;
}

template <class T>
void RouterParams<T>::validate() const {
  if (inputs == 0 || hidden == 0 || experts == 0) throw DomainError("router dimensions must be positive");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("router temperature must be positive");
  if (w1.size() != hidden * inputs || b1.size() != hidden || w2.size() != experts * hidden || b2.size() != experts) {
    throw ShapeError("router parameter sizes do not match its dimensions");
  }
  for (const auto* v : {&w1, &b1, &w2, &b2}) {
    for (T x : *v) {
      if (!std::isfinite(static_cast<double>(x))) throw NumericError("router parameters contain non-finite values");
    }
  }
}

template <class T>
ParameterSet<T> RouterParams<T>::to_parameter_set() const {
  ParameterSet<T> p;
  p.add("router/w1", {hidden, inputs}, w1);
  p.add("router/b1", {hidden}, b1);
  p.add("router/w2", {experts, hidden}, w2);
  p.add("router/b2", {experts}, b2);
  return p;
}

template <class T>
void RouterParams<T>::assign(const ParameterSet<T>& params) {
  w1 = params.find("router/w1").values;
  b1 = params.find("router/b1").values;
  w2 = params.find("router/w2").values;
  b2 = params.find("router/b2").values;
  validate();
}

template <class T>
RouterParams<T> zero_router(std::size_t inputs, std::size_t experts, double tau, std::size_t hidden) {
  RouterParams<T> r;
  r.inputs = inputs;
  r.hidden = hidden;
  r.experts = experts;
  r.tau = tau;
  r.w1.assign(hidden * inputs, T{0});
  r.b1.assign(hidden, T{0});
  r.w2.assign(experts * hidden, T{0});
  r.b2.assign(experts, T{0});
  r.validate();
  return r;
}

template <class T>
RouterParams<T> init_router(std::size_t inputs, std::size_t experts, double tau, std::uint64_t seed,
                            std::size_t hidden) {
  RouterParams<T> r = zero_router<T>(inputs, experts, tau, hidden);
  CounterRng rng(seed, 0x524f5554, 0);
  rng.fill_gaussian(std::span<T>(r.w1), std::sqrt(2.0 / static_cast<double>(inputs + hidden)));
  rng.fill_gaussian(std::span<T>(r.w2), std::sqrt(2.0 / static_cast<double>(hidden + experts)));
  return r;
}

namespace {

double silu(double v) { return v / (1.0 + std::exp(-v)); }

}  // namespace

template <class T>
std::vector<double> router_logits(const RouterParams<T>& params, std::span<const double> input) {
  if (input.size() != params.inputs) {
    throw ShapeError("router expects " + std::to_string(params.inputs) + " inputs, got " +
                     std::to_string(input.size()));
  }
  std::vector<double> h(params.hidden);
  for (std::size_t j = 0; j < params.hidden; ++j) {
    double acc = static_cast<double>(params.b1[j]);
    for (std::size_t i = 0; i < params.inputs; ++i) acc += static_cast<double>(params.w1[j * params.inputs + i]) * input[i];
    h[j] = silu(acc);
  }
  std::vector<double> logits(params.experts);
  for (std::size_t m = 0; m < params.experts; ++m) {
    double acc = static_cast<double>(params.b2[m]);
    for (std::size_t j = 0; j < params.hidden; ++j) acc += static_cast<double>(params.w2[m * params.hidden + j]) * h[j];
    logits[m] = acc;
  }
  return logits;
}

RoutingWeights softmax_weights(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) throw DomainError("softmax temperature must be positive");
  if (logits.empty()) throw ShapeError("softmax of an empty logit vector");
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericError("router produced a non-finite logit");
  }
  const double zmax = *std::max_element(logits.begin(), logits.end());
  RoutingWeights w{std::vector<double>(logits.size())};
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w.alpha[i] = std::exp((logits[i] - zmax) / tau);
    total += w.alpha[i];
  }
  for (double& a : w.alpha) a /= total;
  return w;
}

template <class T>
RoutingWeights route_soft(const RouterParams<T>& params, const FeiVector& e) {
  double total = 0.0;
  for (double v : e.e) {
    if (!(v >= 0.0)) throw DomainError("FEI components must be non-negative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) throw DomainError("FEI must sum to 1");
  return softmax_weights(router_logits(params, e.e), params.tau);
}

std::vector<double> timestep_input(std::size_t t, std::size_t total_steps, std::size_t width) {
  if (total_steps == 0 || t > total_steps) throw IndexError("timestep out of range");
  return std::vector<double>(width, static_cast<double>(t) / static_cast<double>(total_steps));
}

template <class T>
RoutingWeights route_timestep_soft(const RouterParams<T>& params, std::size_t t, std::size_t total_steps) {
  return softmax_weights(router_logits(params, timestep_input(t, total_steps, params.inputs)), params.tau);
}

std::vector<std::size_t> even_thresholds(std::size_t experts, std::size_t total_steps) {
  if (experts == 0) throw DomainError("need at least one expert");
  std::vector<std::size_t> out;
  for (std::size_t j = 1; j < experts; ++j) {
    out.push_back(static_cast<std::size_t>(
        std::llround(static_cast<double>(total_steps) * static_cast<double>(j) / static_cast<double>(experts))));
  }
  return out;
}

RoutingWeights route_discrete(std::span<const std::size_t> thresholds, std::size_t t, std::size_t total_steps) {
  if (t > total_steps) throw IndexError("step " + std::to_string(t) + " outside [0, " + std::to_string(total_steps) + "]");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (thresholds[i] == 0 || thresholds[i] >= total_steps) throw DomainError("thresholds must lie inside (0, T)");
    if (i > 0 && thresholds[i] <= thresholds[i - 1]) throw DomainError("thresholds must be strictly increasing");
  }
  const auto j = static_cast<std::size_t>(std::count_if(thresholds.begin(), thresholds.end(),
                                                        [t](std::size_t th) { return th >= t; }));
  return RoutingWeights::one_hot(thresholds.size() + 1, j);
}

template <class T>
Var router_forward(Tape<T>& tape, const RouterParams<T>& shape_source, std::span<const Var> param_vars, Var input,
                   bool hard) {
  if (param_vars.size() != 4) throw ShapeError("router needs four parameter tensors");
  const auto& r = shape_source;
  Var h = tape.add(tape.matvec(param_vars[0], input, r.hidden, r.inputs), param_vars[1]);
  h = tape.silu(h);
  Var logits = tape.add(tape.matvec(param_vars[2], h, r.experts, r.hidden), param_vars[3]);
  for (T z : tape.value(logits)) {
    if (!std::isfinite(static_cast<double>(z))) throw NumericError("router produced a non-finite logit");
  }
  Var probs = tape.softmax(logits, static_cast<T>(r.tau));
  return hard ? tape.hard_select(probs) : probs;
}

template <class T>
std::vector<double> router_input(RoutingMode mode, const BasicField<T>& x_t, std::size_t t, std::size_t total_steps,
                                 const FilterBank& bank, std::size_t width) {
  if (uses_fei(mode)) {
    FeiVector e = fei(x_t, bank);
    if (e.e.size() != width) throw ShapeError("FEI length does not match the router input width");
    return e.e;
  }
  return timestep_input(t, total_steps, width);
}

namespace {

RoutingWeights hard_of(const RoutingWeights& w) {
  const auto j = static_cast<std::size_t>(std::max_element(w.alpha.begin(), w.alpha.end()) - w.alpha.begin());
  return RoutingWeights::one_hot(w.size(), j);
}

}  // namespace

template <class T>
RoutingWeights route(const RoutingSpec& spec, const RouterParams<T>* router, const BasicField<T>& x_t, std::size_t t,
                     std::size_t total_steps, const FilterBank& bank, RoutingStats* stats) {
  switch (spec.mode) {
    case RoutingMode::none:
      return RoutingWeights::uniform(spec.experts);
    case RoutingMode::discrete: {
      const auto th = spec.thresholds.empty() ? even_thresholds(spec.experts, total_steps) : spec.thresholds;
      if (th.size() + 1 != spec.experts) throw ConfigError("discrete routing needs experts - 1 thresholds");
      return route_discrete(th, t, total_steps);
    }
    default:
      break;
  }
  if (router == nullptr) throw ConfigError(std::string("routing mode ") + routing_mode_name(spec.mode) + " needs a router");
  if (router->experts != spec.experts) throw ShapeError("router output width does not match the expert count");
  std::vector<double> input;
  try {
    input = router_input(spec.mode, x_t, t, total_steps, bank, router->inputs);
  } catch (const DegenerateInputError&) {
    if (stats != nullptr) ++stats->degenerate_fallbacks;
    log_warning_once("routing-degenerate", "zero-energy latent; routing falls back to uniform weights");
    return RoutingWeights::uniform(spec.experts);
  }
  RoutingWeights w = softmax_weights(router_logits(*router, input), router->tau);
  return is_hard(spec.mode) ? hard_of(w) : w;
}

double routing_entropy(const RoutingWeights& w) {
  double h = 0.0;
  for (double a : w.alpha) {
    if (a > 0.0) h -= a * std::log(a);
  }
  return h;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows) {
  std::vector<std::string> header{"t"};
  const std::size_t n = rows.empty() ? 0 : rows.front().e.size();
  const std::size_t m = rows.empty() ? 0 : rows.front().alpha.size();
  for (std::size_t k = 0; k < n; ++k) header.push_back("e" + std::to_string(k + 1));
  for (std::size_t k = 0; k < m; ++k) header.push_back("a" + std::to_string(k + 1));
  write_csv_row(os, header);
  for (const auto& r : rows) {
    std::vector<std::string> cells{std::to_string(r.t)};
    for (double v : r.e) cells.push_back(format_real(v));
    for (double v : r.alpha) cells.push_back(format_real(v));
    write_csv_row(os, cells);
  }
}

double max_adjacent_jump(const std::vector<TraceRow>& rows) {
  double jump = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    for (std::size_t m = 0; m < rows[i].alpha.size(); ++m) {
      jump = std::max(jump, std::abs(rows[i].alpha[m] - rows[i - 1].alpha[m]));
    }
  }
  return jump;
}

#define FERA_INSTANTIATE_ROUTING(T)                                                                                \
  template struct RouterParams<T>;                                                                                 \
  template RouterParams<T> zero_router<T>(std::size_t, std::size_t, double, std::size_t);                          \
  template RouterParams<T> init_router<T>(std::size_t, std::size_t, double, std::uint64_t, std::size_t);           \
  template std::vector<double> router_logits<T>(const RouterParams<T>&, std::span<const double>);                  \
  template RoutingWeights route_soft<T>(const RouterParams<T>&, const FeiVector&);                                 \
  template RoutingWeights route_timestep_soft<T>(const RouterParams<T>&, std::size_t, std::size_t);                \
  template Var router_forward<T>(Tape<T>&, const RouterParams<T>&, std::span<const Var>, Var, bool);               \
  template std::vector<double> router_input<T>(RoutingMode, const BasicField<T>&, std::size_t, std::size_t,        \
                                               const FilterBank&, std::size_t);                                    \
  template RoutingWeights route<T>(const RoutingSpec&, const RouterParams<T>*, const BasicField<T>&, std::size_t,  \
                                   std::size_t, const FilterBank&, RoutingStats*);

FERA_INSTANTIATE_ROUTING(float)
FERA_INSTANTIATE_ROUTING(double)

}  // namespace fera
