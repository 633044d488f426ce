#include "fera/denoiser.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fera/errors.hpp"
#include "fera/rng.hpp"

namespace fera {

namespace {

std::string conv_name(std::size_t l, const char* what) { return "base/conv" + std::to_string(l) + "/" + what; }
std::string temb_name(std::size_t l) { return "base/temb" + std::to_string(l) + "/proj"; }

}  // namespace

std::vector<ConvLayerSpec> denoiser_layers(const DenoiserConfig& config) {
  if (config.channels == 0 || config.hidden == 0 || config.embed_dim == 0 || config.embed_dim % 2 != 0) {
    throw DomainError("denoiser needs positive channel counts and an even embedding dimension");
  }
  return {ConvLayerSpec{0, config.channels, config.hidden}, ConvLayerSpec{1, config.hidden, config.hidden},
          ConvLayerSpec{2, config.hidden, config.channels}};
}

template <class T>
ParameterSet<T> zero_denoiser(const DenoiserConfig& config) {
  ParameterSet<T> p;
  for (const auto& layer : denoiser_layers(config)) {
    p.add(conv_name(layer.id, "weight"), {layer.out_channels, layer.in_channels, 3, 3});
    p.add(conv_name(layer.id, "bias"), {layer.out_channels});
  }
  for (std::size_t l = 0; l + 1 < kDenoiserLayers; ++l) p.add(temb_name(l), {config.hidden, config.embed_dim});
  return p;
}

template <class T>
ParameterSet<T> init_denoiser(const DenoiserConfig& config, std::uint64_t seed) {
  ParameterSet<T> p = zero_denoiser<T>(config);
  for (const auto& layer : denoiser_layers(config)) {
    CounterRng rng(seed, 0x42415345, layer.id);
    const double stddev = std::sqrt(2.0 / static_cast<double>(layer.in_features()));
    auto& w = p.find(conv_name(layer.id, "weight")).values;
    rng.fill_gaussian(std::span<T>(w), stddev);
  }
  for (std::size_t l = 0; l + 1 < kDenoiserLayers; ++l) {
    CounterRng rng(seed, 0x54454d42, l);
    auto& proj = p.find(temb_name(l)).values;
    rng.fill_gaussian(std::span<T>(proj), 1.0 / std::sqrt(static_cast<double>(config.embed_dim)));
  }
  return p;
}

std::vector<double> timestep_embedding(std::size_t t, std::size_t total_steps, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw DomainError("timestep embedding dimension must be even and positive");
  if (total_steps == 0 || t > total_steps) throw IndexError("timestep out of range for embedding");
  const std::size_t half = dim / 2;
  // Position scaled to [0, 1000] so the frequencies match the usual DDPM embedding.
  const double pos = 1000.0 * static_cast<double>(t) / static_cast<double>(total_steps);
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(pos * freq);
    out[half + i] = std::cos(pos * freq);
  }
  return out;
}

template <class T>
Var denoiser_forward(Tape<T>& tape, const DenoiserConfig& config, std::span<const Var> base_vars, Var x, Var temb,
                     std::span<const std::optional<Var>> weight_deltas) {
  const auto layers = denoiser_layers(config);
  const std::size_t expected = 2 * kDenoiserLayers + (kDenoiserLayers - 1);
  if (base_vars.size() != expected) throw ShapeError("denoiser parameter count mismatch");
  if (!weight_deltas.empty() && weight_deltas.size() != kDenoiserLayers) {
    throw ShapeError("denoiser needs one optional weight delta per layer");
  }
  if (tape.shape(x).channels != config.channels) throw ShapeError("denoiser input channel count mismatch");
  Var h = x;
  for (const auto& layer : layers) {
    const std::size_t l = layer.id;
    Var w = base_vars[2 * l];
    if (!weight_deltas.empty() && weight_deltas[l]) w = tape.add(w, *weight_deltas[l]);
    h = tape.conv3x3(h, w, layer.out_channels);
    h = tape.add_channel_bias(h, base_vars[2 * l + 1]);
    if (l + 1 < kDenoiserLayers) {
      Var proj = base_vars[2 * kDenoiserLayers + l];
      h = tape.add_channel_bias(h, tape.matvec(proj, temb, config.hidden, config.embed_dim));
      h = tape.silu(h);
    }
    for (T v : tape.value(h)) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw NumericError("denoiser layer " + std::to_string(l) + " produced a non-finite activation");
      }
    }
  }
  return h;
}

template <class T>
BasicField<T> denoise(const ParameterSet<T>& params, const DenoiserConfig& config, const BasicField<T>& x_t,
                      std::size_t t, std::size_t total_steps, const AdapterContext<T>* adapters) {
  if (!all_finite(x_t)) throw NumericError("denoiser input contains non-finite values");
  Tape<T> tape;
  const std::vector<Var> base = params.bind(tape, false);
  const std::vector<double> emb = timestep_embedding(t, total_steps, config.embed_dim);
  const std::vector<T> emb_t(emb.begin(), emb.end());
  Var temb = tape.vector(emb_t, false);
  Var x = tape.input(x_t, false);
  std::vector<std::optional<Var>> deltas;
  if (adapters != nullptr && adapters->bank != nullptr) {
    adapters->weights.validate(adapters->bank->size());
    deltas.resize(kDenoiserLayers);
    for (std::size_t l = 0; l < kDenoiserLayers; ++l) {
      if (!adapters->bank->attached(l)) continue;
      const std::vector<T> d = merged_weight_delta(*adapters->bank, adapters->weights, l);
      deltas[l] = tape.vector(d, false);
    }
  }
  Var out = denoiser_forward(tape, config, base, x, temb, deltas);
  return tape.field(out);
}

#define FERA_INSTANTIATE_DENOISER(T)                                                                          \
  template ParameterSet<T> zero_denoiser<T>(const DenoiserConfig&);                                           \
  template ParameterSet<T> init_denoiser<T>(const DenoiserConfig&, std::uint64_t);                            \
  template Var denoiser_forward<T>(Tape<T>&, const DenoiserConfig&, std::span<const Var>, Var, Var,           \
                                   std::span<const std::optional<Var>>);                                      \
  template BasicField<T> denoise<T>(const ParameterSet<T>&, const DenoiserConfig&, const BasicField<T>&,      \
                                    std::size_t, std::size_t, const AdapterContext<T>*);

FERA_INSTANTIATE_DENOISER(float)
FERA_INSTANTIATE_DENOISER(double)

}  // namespace fera
