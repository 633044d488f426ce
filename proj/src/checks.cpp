#include "fera/checks.hpp"

#include <cmath>
#include <functional>

#include "fera/adapters.hpp"
#include "fera/denoiser.hpp"
#include "fera/errors.hpp"
#include "fera/objective.hpp"
#include "fera/rng.hpp"
#include "fera/routing.hpp"
#include "fera/spectrum.hpp"

namespace fera {

namespace {

constexpr Shape kSmall{1, 8, 8};

std::vector<double> gaussian_vector(std::size_t n, CounterRng& rng, double stddev = 1.0) {
  std::vector<double> v(n);
  rng.fill_gaussian(std::span<double>(v), stddev);
  return v;
}

/// Random weighted sum of a node, a generic way to scalarise a vector output.
Var scalarise(Tape<double>& tape, Var x, const std::vector<double>& c) {
  return tape.sum(tape.mul(x, tape.constant(c, tape.shape(x))));
}

GradCheckResult check_sum_squares(std::uint64_t seed) {
  CounterRng rng(seed, 1, 0);
  const auto point = gaussian_vector(12, rng);
  return grad_check([](Tape<double>& t, Var p) { return t.sum_squares(p); }, point);
}

GradCheckResult check_softmax(std::uint64_t seed) {
  CounterRng rng(seed, 2, 0);
  const auto point = gaussian_vector(4, rng);
  return grad_check(
      [](Tape<double>& t, Var z) {
        Var p = t.softmax(z, 1.0);
        Var picked = t.element(p, 2);
        Var d = t.sub(picked, t.scalar_constant(1.0));
        return t.mul(d, d);
      },
      point);
}

GradCheckResult check_router(std::uint64_t seed) {
  CounterRng rng(seed, 3, 0);
  RouterParams<double> shape = init_router<double>(3, 3, kDefaultTau, seed);
  const ParameterSet<double> ps = shape.to_parameter_set();
  std::vector<double> point = ps.flatten();
  const std::vector<double> fei_in{0.6, 0.3, 0.1};
  point.insert(point.end(), fei_in.begin(), fei_in.end());
  const auto c = gaussian_vector(3, rng);
  std::vector<std::string> names = ps.scalar_names();
  for (int i = 0; i < 3; ++i) names.push_back("fei[" + std::to_string(i) + "]");
  return grad_check(
      [&](Tape<double>& t, Var flat) {
        const auto vars = ps.bind_flat(t, flat);
        Var input = t.slice(flat, ps.parameter_count(), Shape{1, 1, 3});
        Var alpha = router_forward(t, shape, vars, input, false);
        return scalarise(t, alpha, c);
      },
      point, names);
}

ExpertBank<double> random_bank(std::size_t experts, std::size_t rank, std::uint64_t seed) {
  const DenoiserConfig cfg;
  const auto layers = denoiser_layers(cfg);
  ExpertBank<double> bank = init_expert_bank<double>(experts, rank, 1.0, {layers[1]}, seed);
  CounterRng rng(seed, 4, 0);
  for (auto& e : bank.experts) {
    for (auto& l : e.layers) {
      rng.fill_gaussian(std::span<double>(l.down), 0.3);
      rng.fill_gaussian(std::span<double>(l.up), 0.3);
    }
  }
  return bank;
}

GradCheckResult check_experts(std::uint64_t seed) {
  const ExpertBank<double> bank = random_bank(3, 4, seed);
  const ParameterSet<double> ps = bank.to_parameter_set();
  CounterRng rng(seed, 5, 0);
  FieldD input(Shape{16, 8, 8});
  rng.fill_gaussian(input.data());
  std::vector<double> point = ps.flatten();
  const std::vector<double> alpha{0.5, 0.3, 0.2};
  point.insert(point.end(), alpha.begin(), alpha.end());
  const auto c = gaussian_vector(16 * 64, rng);
  std::vector<std::string> names = ps.scalar_names();
  for (int i = 0; i < 3; ++i) names.push_back("alpha[" + std::to_string(i) + "]");
  return grad_check(
      [&](Tape<double>& t, Var flat) {
        const auto vars = ps.bind_flat(t, flat);
        Var a = t.slice(flat, ps.parameter_count(), Shape{1, 1, 3});
        Var delta = *blended_delta_on_tape(t, bank, vars, a, 1);
        Var out = t.conv3x3(t.input(input, false), delta, 16);
        return scalarise(t, out, c);
      },
      point, names);
}

GradCheckResult check_fecl(std::uint64_t seed) {
  CounterRng rng(seed, 6, 0);
  FieldD base(kSmall), truth(kSmall), lora(kSmall);
  rng.fill_gaussian(base.data());
  rng.fill_gaussian(truth.data());
  rng.fill_gaussian(lora.data());
  const FilterBank bank = build_filter_bank(3, 8, 8);
  const auto kernels = bank.kernels<double>(8, 8);
  const std::vector<double> w{0.5, 0.3, 0.2};
  return grad_check(
      [&](Tape<double>& t, Var z) {
        Var zl = t.slice(z, 0, kSmall);
        return fecl_on_tape(t, zl, t.input(base, false), t.input(truth, false), kernels, w);
      },
      lora.values());
}

GradCheckResult check_denoiser(std::uint64_t seed) {
  const DenoiserConfig cfg;
  const ParameterSet<double> ps = init_denoiser<double>(cfg, seed);
  CounterRng rng(seed, 7, 0);
  FieldD x(kSmall);
  rng.fill_gaussian(x.data());
  const auto emb = timestep_embedding(400, 1000, cfg.embed_dim);
  const auto c = gaussian_vector(kSmall.size(), rng);
  return grad_check(
      [&](Tape<double>& t, Var flat) {
        const auto vars = ps.bind_flat(t, flat);
        Var out = denoiser_forward(t, cfg, vars, t.input(x, false), t.vector(emb, false));
        return scalarise(t, out, c);
      },
      ps.flatten(), ps.scalar_names());
}

GradCheckResult check_total_loss(std::uint64_t seed) {
  const DenoiserConfig cfg;
  const ParameterSet<double> base = init_denoiser<double>(cfg, seed);
  ExpertBank<double> bank = random_bank(3, 4, seed);
  for (auto& e : bank.experts)
    for (auto& l : e.layers)
      for (auto& u : l.up) u *= 0.1;
  const RouterParams<double> router = init_router<double>(3, 3, kDefaultTau, seed);
  const FilterBank filters = build_filter_bank(3, 8, 8);
  const NoiseSchedule sched = make_schedule(ScheduleKind::linear, 1000);

  AdapterGraph<double> graph;
  graph.config = cfg;
  graph.base = &base;
  graph.bank = &bank;
  graph.router = &router;
  graph.mode = RoutingMode::fei_soft;
  graph.total_steps = 1000;
  graph.filters = &filters;
  graph.kernels = filters.kernels<double>(8, 8);

  CounterRng rng(seed, 8, 0);
  LossSample<double> s;
  s.x0 = FieldD(kSmall);
  s.eps = FieldD(kSmall);
  rng.fill_gaussian(s.x0.data());
  rng.fill_gaussian(s.eps.data());
  s.t = 300;
  s.alpha_bar = sched.alpha_bar[s.t];
  s.x_t = FieldD(kSmall);
  for (std::size_t i = 0; i < s.x_t.size(); ++i) {
    s.x_t.data()[i] = std::sqrt(s.alpha_bar) * s.x0.data()[i] + std::sqrt(1.0 - s.alpha_bar) * s.eps.data()[i];
  }
  s.eps_base = denoise(base, cfg, s.x_t, s.t, 1000);
  s.fecl_weights = fei(s.x_t, filters).e;
  s.router_input = s.fecl_weights;

  ParameterSet<double> trainable = bank.to_parameter_set();
  const ParameterSet<double> rp = router.to_parameter_set();
  for (const auto& t : rp.tensors()) trainable.add(t.name, t.dims, t.values);
  return grad_check(
      [&](Tape<double>& t, Var flat) {
        const auto vars = trainable.bind_flat(t, flat);
        return build_adapter_loss(t, graph, vars, s, 0.1).total;
      },
      trainable.flatten(), trainable.scalar_names());
}

using CheckFn = std::function<GradCheckResult(std::uint64_t)>;

const std::vector<std::pair<std::string, CheckFn>>& registry() {
  static const std::vector<std::pair<std::string, CheckFn>> r{
      {"sum_squares", check_sum_squares}, {"softmax", check_softmax},  {"router_mlp", check_router},
      {"expert_factors", check_experts},  {"fecl", check_fecl},             {"denoiser", check_denoiser},
      {"total_loss", check_total_loss},
  };
  return r;
}

}  // namespace

std::vector<std::string> registered_grad_checks() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry()) names.push_back(name);
  return names;
}

GradCheckEntry run_grad_check(const std::string& name, std::uint64_t seed, double tolerance) {
  for (const auto& [n, fn] : registry()) {
    if (n == name) return GradCheckEntry{n, fn(seed), tolerance};
  }
  throw LookupError("no gradient check named '" + name + "'");
}

std::vector<GradCheckEntry> run_all_grad_checks(std::uint64_t seed, double tolerance) {
  std::vector<GradCheckEntry> out;
  for (const auto& [n, fn] : registry()) out.push_back(GradCheckEntry{n, fn(seed), tolerance});
  return out;
}

}  // namespace fera
