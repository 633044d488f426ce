#include "fera/datagen.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fera/csv.hpp"
#include "fera/errors.hpp"
#include "fera/fft.hpp"
#include "fera/rng.hpp"
#include "fera/tensor_io.hpp"

namespace fera {

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "powerlaw") return SyntheticKind::powerlaw;
  if (name == "band_boost") return SyntheticKind::band_boost;
  throw ConfigError("unknown synthetic kind '" + name + "' (expected powerlaw or band_boost)");
}

const char* synthetic_kind_name(SyntheticKind kind) noexcept {
  return kind == SyntheticKind::powerlaw ? "powerlaw" : "band_boost";
}

void SyntheticSpec::validate() const {
  if (!(gamma >= 0.0 && gamma <= 4.0)) throw DomainError("gamma must lie in [0, 4]");
  if (!(boost_factor > 0.0)) throw DomainError("boost_factor must be positive");
  if (size != 16 && size != 32 && size != 64 && size != 128) throw DomainError("size must be one of 16, 32, 64, 128");
  if (channels == 0) throw DomainError("channels must be positive");
}

namespace {

std::vector<double> unit_variance(std::vector<double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double scale = 1.0 / std::sqrt(ss / static_cast<double>(v.size()));
  for (double& x : v) x *= scale;
  return v;
}

FieldD powerlaw_double(const SyntheticSpec& spec) {
  const Shape shape{spec.channels, spec.size, spec.size};
  CounterRng rng(spec.seed, 0x504c4157);
  Spectrum2D s = fft2(gaussian_field<double>(shape, rng));
  for (std::size_t c = 0; c < shape.channels; ++c) {
    for (std::size_t ky = 0; ky < shape.height; ++ky) {
      const double fy = dft_frequency(ky, shape.height);
      for (std::size_t kx = 0; kx < shape.width; ++kx) {
        const double fx = dft_frequency(kx, shape.width);
        const double f = std::sqrt(fx * fx + fy * fy);
        auto& bin = s.bins[(c * shape.height + ky) * shape.width + kx];
        bin = f > 0.0 ? bin * std::pow(f, -spec.gamma / 2.0) : std::complex<double>{};
      }
    }
  }
  FieldD x = ifft2_real(s);
  return FieldD(shape, unit_variance(std::move(x.values())));
}

template <class T>
BasicField<T> to_precision(const FieldD& x) {
  if constexpr (std::is_same_v<T, double>) {
    return x;
  } else {
    return x.cast<T>();
  }
}

}  // namespace

template <class T>
BasicField<T> gen_powerlaw(const SyntheticSpec& spec) {
  spec.validate();
  return to_precision<T>(powerlaw_double(spec));
}

template <class T>
BasicField<T> gen_band_boost(const SyntheticSpec& spec, const FilterBank& bank) {
  spec.validate();
  if (spec.boost_band < 1 || spec.boost_band > bank.n_bands) {
    throw DomainError("boost_band " + std::to_string(spec.boost_band) + " outside 1.." + std::to_string(bank.n_bands));
  }
  const FieldD base = powerlaw_double(spec);
  if (spec.boost_factor == 1.0) return to_precision<T>(base);
  const auto d = decompose(base, bank);
  FieldD boosted = axpby(1.0, base, spec.boost_factor - 1.0, d.bands[spec.boost_band - 1]);
  return to_precision<T>(FieldD(base.shape(), unit_variance(std::move(boosted.values()))));
}

template <class T>
BasicField<T> generate(const SyntheticSpec& spec, const FilterBank& bank) {
  return spec.kind == SyntheticKind::powerlaw ? gen_powerlaw<T>(spec) : gen_band_boost<T>(spec, bank);
}

std::uint64_t dataset_member_seed(std::uint64_t base_seed, std::size_t index) noexcept {
  return mix64(base_seed ^ mix64(0x44415441ULL + index));
}

std::vector<Field> make_dataset(const SyntheticSpec& spec, const FilterBank& bank, std::size_t count,
                                std::uint64_t base_seed) {
  std::vector<Field> out;
  out.reserve(count);
  SyntheticSpec member = spec;
  for (std::size_t i = 0; i < count; ++i) {
    member.seed = dataset_member_seed(base_seed, i);
    out.push_back(generate<float>(member, bank));
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const SyntheticSpec& spec, std::uint64_t base_seed,
                   const std::vector<Field>& fields) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("cannot write dataset manifest in " + dir.string());
  manifest << "kind " << synthetic_kind_name(spec.kind) << '\n'
           << "gamma " << format_real(spec.gamma) << '\n'
           << "boost_band " << spec.boost_band << '\n'
           << "boost_factor " << format_real(spec.boost_factor) << '\n'
           << "size " << spec.size << '\n'
           << "channels " << spec.channels << '\n'
           << "base_seed " << base_seed << '\n'
           << "count " << fields.size() << '\n';
  for (std::size_t i = 0; i < fields.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%05zu.fera", i);
    save_field(dir / name, fields[i]);
    manifest << "file " << name << ' ' << dataset_member_seed(base_seed, i) << '\n';
  }
}

std::vector<Field> read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("missing dataset manifest in " + dir.string());
  std::vector<Field> out;
  std::string line;
  while (std::getline(manifest, line)) {
    std::istringstream ls(line);
    std::string key, name;
    ls >> key;
    if (key != "file") continue;
    ls >> name;
    out.push_back(load_field<float>(dir / name));
  }
  return out;
}

template BasicField<float> gen_powerlaw<float>(const SyntheticSpec&);
template BasicField<double> gen_powerlaw<double>(const SyntheticSpec&);
template BasicField<float> gen_band_boost<float>(const SyntheticSpec&, const FilterBank&);
template BasicField<double> gen_band_boost<double>(const SyntheticSpec&, const FilterBank&);
template BasicField<float> generate<float>(const SyntheticSpec&, const FilterBank&);
template BasicField<double> generate<double>(const SyntheticSpec&, const FilterBank&);

}  // namespace fera
