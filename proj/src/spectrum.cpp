#include "fera/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "fera/csv.hpp"
#include "fera/diffusion.hpp"
#include "fera/errors.hpp"
#include "fera/fft.hpp"
#include "fera/log.hpp"
#include "fera/rng.hpp"

namespace fera {

template <class T>
std::vector<Kernel2D<T>> FilterBank::kernels(std::size_t height, std::size_t width) const {
  std::vector<Kernel2D<T>> out;
  out.reserve(sigmas.size());
  for (double s : sigmas) out.push_back(gaussian_kernel<T>(s, gaussian_kernel_size(s, height, width)));
  return out;
}

FilterBank build_filter_bank(std::size_t n_bands, std::size_t height, std::size_t width) {
  if (n_bands < 2) throw DomainError("a filter bank needs at least 2 bands");
  if (height < 8 || width < 8) throw ShapeError("filter bank needs fields of at least 8x8");
  FilterBank bank;
  bank.n_bands = n_bands;
  bank.kappa = static_cast<double>(std::min(height, width)) / 128.0;
  if (bank.kappa < kMinKappa) {
    std::ostringstream msg;
    msg << "base scale " << bank.kappa << " for " << height << "x" << width << " clamped to " << kMinKappa;
    log_warning_once("kappa-clamp-" + std::to_string(height) + "x" + std::to_string(width), msg.str());
    bank.kappa = kMinKappa;
    bank.kappa_clamped = true;
  }
  for (std::size_t k = 0; k + 1 < n_bands; ++k) bank.sigmas.push_back(bank.kappa * std::ldexp(1.0, static_cast<int>(k)));
  return bank;
}

FilterBank filter_bank_from_sigmas(std::vector<double> sigmas) {
  if (sigmas.empty()) throw DomainError("a filter bank needs at least one scale");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] > 0.0)) throw DomainError("filter bank scales must be positive");
    if (i > 0 && !(sigmas[i] > sigmas[i - 1])) throw DomainError("filter bank scales must be strictly increasing");
  }
  FilterBank bank;
  bank.n_bands = sigmas.size() + 1;
  bank.kappa = sigmas.front();
  bank.sigmas = std::move(sigmas);
  return bank;
}

template <class T>
double BandDecomposition<T>::total_energy() const {
  double s = 0.0;
  for (double e : energies) s += e;
  return s;
}

namespace {

template <class T>
std::vector<BasicField<T>> blurred_stack(const BasicField<T>& x, const FilterBank& bank) {
  if (bank.sigmas.size() + 1 != bank.n_bands) throw DomainError("filter bank scale count does not match band count");
  std::vector<BasicField<T>> blurred;
  blurred.reserve(bank.sigmas.size());
  for (const auto& k : bank.kernels<T>(x.height(), x.width())) blurred.push_back(conv_depthwise(x, k));
  return blurred;
}

}  // namespace

template <class T>
BandDecomposition<T> decompose(const BasicField<T>& x, const FilterBank& bank) {
  std::vector<BasicField<T>> blurred = blurred_stack(x, bank);
  BandDecomposition<T> d;
  d.bands.reserve(bank.n_bands);
  d.bands.push_back(blurred.front());
  for (std::size_t k = 1; k < blurred.size(); ++k) d.bands.push_back(blurred[k] - blurred[k - 1]);
  d.bands.push_back(x - blurred.back());
  for (const auto& b : d.bands) d.energies.push_back(sum_squares(b));
  return d;
}

template <class T>
std::vector<double> band_energies(const BasicField<T>& x, const FilterBank& bank) {
  return decompose(x, bank).energies;
}

FeiVector fei_from_energies(const std::vector<double>& energies) {
  double total = 0.0;
  for (double e : energies) {
    if (e < 0.0 || !std::isfinite(e)) throw NumericError("band energies must be finite and non-negative");
    total += e;
  }
  if (!(total > kEnergyEpsilon)) throw DegenerateInputError("total band energy is zero; FEI undefined");
  FeiVector v;
  v.e.reserve(energies.size());
  for (double e : energies) v.e.push_back(e / total);
  return v;
}

namespace {

struct RadialBins {
  std::vector<double> centers;
  std::vector<std::size_t> index;  // bin per DFT cell, n_bins for DC
};

RadialBins radial_bins(std::size_t height, std::size_t width, std::size_t n_bins) {
  const double fmax = std::sqrt(0.5);
  const double w = fmax / static_cast<double>(n_bins);
  RadialBins rb;
  for (std::size_t b = 0; b < n_bins; ++b) rb.centers.push_back((static_cast<double>(b) + 0.5) * w);
  rb.index.resize(height * width);
  for (std::size_t ky = 0; ky < height; ++ky) {
    const double fy = dft_frequency(ky, height);
    for (std::size_t kx = 0; kx < width; ++kx) {
      const double fx = dft_frequency(kx, width);
      const double f = std::sqrt(fx * fx + fy * fy);
      std::size_t b = n_bins;
      if (f > 0.0) b = std::min(n_bins - 1, static_cast<std::size_t>(f / w));
      rb.index[ky * width + kx] = b;
    }
  }
  return rb;
}

}  // namespace

template <class T>
RadialSpectrum radial_spectrum(const BasicField<T>& x, std::size_t n_bins) {
  if (n_bins < 4) throw DomainError("radial spectrum needs at least 4 bins");
  const Spectrum2D s = fft2(x);
  const RadialBins rb = radial_bins(x.height(), x.width(), n_bins);
  RadialSpectrum out;
  out.bin_centers = rb.centers;
  out.amplitudes.assign(n_bins, 0.0);
  out.counts.assign(n_bins, 0);
  for (std::size_t i = 0; i < rb.index.size(); ++i) {
    if (rb.index[i] < n_bins) ++out.counts[rb.index[i]];
  }
  for (std::size_t c = 0; c < x.channels(); ++c) {
    auto plane = s.channel(c);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      const std::size_t b = rb.index[i];
      if (b < n_bins) out.amplitudes[b] += std::abs(plane[i]);
    }
  }
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (out.counts[b] > 0) out.amplitudes[b] /= static_cast<double>(out.counts[b] * x.channels());
  }
  return out;
}

double fit_loglog_slope(const std::vector<double>& centers, const std::vector<double>& values,
                        const std::vector<std::size_t>& counts, double f_lo, double f_hi) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < centers.size(); ++b) {
    if (centers[b] < f_lo || centers[b] > f_hi) continue;
    if (counts[b] < kMinBinPopulation) continue;
    if (!(values[b] > 0.0) || !std::isfinite(values[b])) continue;
    const double lx = std::log(centers[b]);
    const double ly = std::log(values[b]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) throw DegenerateInputError("slope fit needs at least two populated bins");
  const double nn = static_cast<double>(n);
  return (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
}

template <class T>
SnrProfile measure_snr(const BasicField<T>& x0, const NoiseSchedule& schedule, std::size_t t, std::size_t n_bins,
                       std::size_t n_noise_draws, std::uint64_t noise_seed) {
  schedule.check_step(t);
  if (n_noise_draws < 8) throw DomainError("SNR estimate needs at least 8 noise draws");
  if (n_bins < 4) throw DomainError("SNR profile needs at least 4 bins");
  const RadialBins rb = radial_bins(x0.height(), x0.width(), n_bins);
  std::vector<double> signal(n_bins, 0.0), noise(n_bins, 0.0);
  std::vector<std::size_t> counts(n_bins, 0);
  for (std::size_t i = 0; i < rb.index.size(); ++i) {
    if (rb.index[i] < n_bins) ++counts[rb.index[i]];
  }
  const Spectrum2D sx = fft2(x0);
  for (std::size_t i = 0; i < sx.bins.size(); ++i) {
    const std::size_t b = rb.index[i % x0.shape().plane()];
    if (b < n_bins) signal[b] += std::norm(sx.bins[i]);
  }
  for (std::size_t d = 0; d < n_noise_draws; ++d) {
    CounterRng rng(noise_seed, 0x534e52, d);
    const Spectrum2D se = fft2(gaussian_field<double>(x0.shape(), rng));
    for (std::size_t i = 0; i < se.bins.size(); ++i) {
      const std::size_t b = rb.index[i % x0.shape().plane()];
      if (b < n_bins) noise[b] += std::norm(se.bins[i]);
    }
  }
  const double ab = schedule.alpha_bar[t];
  SnrProfile p;
  p.bin_centers = rb.centers;
  p.counts = counts;
  p.snr.assign(n_bins, 0.0);
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (counts[b] == 0) continue;
    if (ab >= 1.0) {
      p.snr[b] = std::numeric_limits<double>::infinity();
      continue;
    }
    const double sig = signal[b];
    const double noi = noise[b] / static_cast<double>(n_noise_draws);
    p.snr[b] = (ab * sig) / ((1.0 - ab) * noi);
  }
  return p;
}

template <class T>
BandSnrTable band_snr_table(const BasicField<T>& x0, const NoiseSchedule& schedule, const FilterBank& bank,
                            std::size_t n_noise_draws, std::uint64_t noise_seed) {
  if (n_noise_draws < 8) throw DomainError("SNR estimate needs at least 8 noise draws");
  const std::vector<double> signal = band_energies(x0, bank);
  std::vector<double> noise(bank.n_bands, 0.0);
  for (std::size_t d = 0; d < n_noise_draws; ++d) {
    CounterRng rng(noise_seed, 0x534e52, d);
    const auto e = band_energies(gaussian_field<T>(x0.shape(), rng), bank);
    for (std::size_t k = 0; k < e.size(); ++k) noise[k] += e[k] / static_cast<double>(n_noise_draws);
  }
  BandSnrTable table;
  table.alpha_bar = schedule.alpha_bar;
  table.crossing_steps.assign(bank.n_bands, 0);
  std::vector<bool> crossed(bank.n_bands, false);
  table.snr.assign(schedule.total_steps + 1, std::vector<double>(bank.n_bands, 0.0));
  for (std::size_t t = 0; t <= schedule.total_steps; ++t) {
    const double ab = schedule.alpha_bar[t];
    for (std::size_t k = 0; k < bank.n_bands; ++k) {
      table.snr[t][k] = ab >= 1.0 ? std::numeric_limits<double>::infinity()
                                  : (ab * signal[k]) / ((1.0 - ab) * noise[k]);
    }
  }
  for (std::size_t t = schedule.total_steps + 1; t-- > 0;) {
    for (std::size_t k = 0; k < bank.n_bands; ++k) {
      if (!crossed[k] && table.snr[t][k] >= 1.0) {
        crossed[k] = true;
        table.crossing_steps[k] = t;
      }
    }
  }
  return table;
}

template <class T>
std::vector<EvolutionRow> energy_evolution(const BasicField<T>& x0, const NoiseSchedule& schedule,
                                           const FilterBank& bank, std::uint64_t seed) {
  std::vector<EvolutionRow> rows;
  rows.reserve(schedule.total_steps + 1);
  for (std::size_t t = 0; t <= schedule.total_steps; ++t) {
    CounterRng rng(seed, 0x45564f, t);
    const BasicField<T> noise = gaussian_field<T>(x0.shape(), rng);
    const BasicField<T> xt = forward_corrupt(x0, t, schedule, noise);
    rows.push_back(EvolutionRow{t, schedule.alpha_bar[t], fei(xt, bank).e});
  }
  return rows;
}

void write_evolution_csv(std::ostream& os, const std::vector<EvolutionRow>& rows) {
  const std::size_t n = rows.empty() ? 0 : rows.front().e.size();
  std::vector<std::string> header{"t", "alpha_bar"};
  for (std::size_t k = 0; k < n; ++k) header.push_back("e" + std::to_string(k + 1));
  write_csv_row(os, header);
  for (const auto& r : rows) {
    std::vector<std::string> cells{std::to_string(r.t), format_real(r.alpha_bar)};
    for (double v : r.e) cells.push_back(format_real(v));
    write_csv_row(os, cells);
  }
}

#define FERA_INSTANTIATE_SPECTRUM(T)                                                                           \
  template std::vector<Kernel2D<T>> FilterBank::kernels<T>(std::size_t, std::size_t) const;                  \
  template struct BandDecomposition<T>;                                                                        \
  template BandDecomposition<T> decompose<T>(const BasicField<T>&, const FilterBank&);                         \
  template std::vector<double> band_energies<T>(const BasicField<T>&, const FilterBank&);                      \
  template RadialSpectrum radial_spectrum<T>(const BasicField<T>&, std::size_t);                               \
  template SnrProfile measure_snr<T>(const BasicField<T>&, const NoiseSchedule&, std::size_t, std::size_t,     \
                                     std::size_t, std::uint64_t);                                              \
  template BandSnrTable band_snr_table<T>(const BasicField<T>&, const NoiseSchedule&, const FilterBank&,       \
                                          std::size_t, std::uint64_t);                                         \
  template std::vector<EvolutionRow> energy_evolution<T>(const BasicField<T>&, const NoiseSchedule&,           \
                                                         const FilterBank&, std::uint64_t);

FERA_INSTANTIATE_SPECTRUM(float)
FERA_INSTANTIATE_SPECTRUM(double)

}  // namespace fera
