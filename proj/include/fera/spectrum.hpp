#pragma once

// Frequency-energy analysis: difference-of-Gaussians band decomposition,
// band energies, the normalised frequency-energy indicator (FEI), radial
// amplitude spectra and per-frequency SNR under the forward process.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "fera/field.hpp"
#include "fera/kernel2d.hpp"
#include "fera/schedule.hpp"

namespace fera {

inline constexpr double kMinKappa = 0.3;
inline constexpr double kEnergyEpsilon = 1e-12;

/// Gaussian scales of an n-band decomposition. Only n-1 scales are needed:
/// the top band is the identity minus the widest blur.
struct FilterBank {
  std::size_t n_bands = 0;
  double kappa = 0.0;
  std::vector<double> sigmas;
  bool kappa_clamped = false;

  /// Truncated, renormalised Gaussian kernels for a field of the given size.
  template <class T>
  std::vector<Kernel2D<T>> kernels(std::size_t height, std::size_t width) const;
};

/// sigmas[k] = kappa * 2^k with kappa = max(min(height, width) / 128, kMinKappa).
FilterBank build_filter_bank(std::size_t n_bands, std::size_t height, std::size_t width);

/// Bank from explicit, strictly increasing scales.
FilterBank filter_bank_from_sigmas(std::vector<double> sigmas);

template <class T>
struct BandDecomposition {
  std::vector<BasicField<T>> bands;
  std::vector<double> energies;

  double total_energy() const;
};

template <class T>
BandDecomposition<T> decompose(const BasicField<T>& x, const FilterBank& bank);

/// Squared L2 norm of every band, without keeping the band fields.
template <class T>
std::vector<double> band_energies(const BasicField<T>& x, const FilterBank& bank);

struct FeiVector {
  std::vector<double> e;
};

/// Normalised band energies. Throws DegenerateInputError when the total is <= kEnergyEpsilon.
FeiVector fei_from_energies(const std::vector<double>& energies);

template <class T>
FeiVector fei(const BandDecomposition<T>& d) {
  return fei_from_energies(d.energies);
}

template <class T>
FeiVector fei(const BasicField<T>& x, const FilterBank& bank) {
  return fei_from_energies(band_energies(x, bank));
}

struct RadialSpectrum {
  std::vector<double> bin_centers;
  std::vector<double> amplitudes;
  std::vector<std::size_t> counts;
};

/// Mean |X(f)| over linear-width annuli covering (0, sqrt(2)/2], averaged over channels.
/// The DC bin is excluded. Needs power-of-two dimensions.
template <class T>
RadialSpectrum radial_spectrum(const BasicField<T>& x, std::size_t n_bins);

inline constexpr std::size_t kMinBinPopulation = 4;

/// Radial frequency range (cycles per pixel) used for spectral slope fits: clear of the
/// lowest bins, which hold few cells, and of the corner bins near Nyquist.
inline constexpr double kSlopeFitLow = 0.1;
inline constexpr double kSlopeFitHigh = 0.4;

/// Least-squares slope of log(value) against log(frequency) over bins whose centre lies in
/// [f_lo, f_hi], with at least kMinBinPopulation cells and a finite positive value.
double fit_loglog_slope(const std::vector<double>& centers, const std::vector<double>& values,
                        const std::vector<std::size_t>& counts, double f_lo, double f_hi);

struct SnrProfile {
  std::vector<double> bin_centers;
  std::vector<double> snr;  ///< +inf where alpha_bar == 1
  std::vector<std::size_t> counts;
};

/// Per radial bin: alpha_bar |x0^(f)|^2 / ((1 - alpha_bar) E|eps^(f)|^2), the noise power
/// estimated from n_noise_draws unit Gaussian fields keyed by noise_seed.
template <class T>
SnrProfile measure_snr(const BasicField<T>& x0, const NoiseSchedule& schedule, std::size_t t, std::size_t n_bins,
                       std::size_t n_noise_draws, std::uint64_t noise_seed = 0);

/// Per-band SNR table over all t (rows t = 0..T): alpha_bar E_k(x0) / ((1 - alpha_bar) E[E_k(eps)]).
struct BandSnrTable {
  std::vector<double> alpha_bar;
  std::vector<std::vector<double>> snr;  ///< [t][band]
  /// First step in denoising order (largest t) with SNR >= 1, per band.
  std::vector<std::size_t> crossing_steps;
};

template <class T>
BandSnrTable band_snr_table(const BasicField<T>& x0, const NoiseSchedule& schedule, const FilterBank& bank,
                            std::size_t n_noise_draws, std::uint64_t noise_seed = 0);

struct EvolutionRow {
  std::size_t t = 0;
  double alpha_bar = 1.0;
  std::vector<double> e;
};

/// For every t in [0, T], corrupts x0 with noise keyed by (seed, t) and records its FEI.
template <class T>
std::vector<EvolutionRow> energy_evolution(const BasicField<T>& x0, const NoiseSchedule& schedule,
                                           const FilterBank& bank, std::uint64_t seed);

/// Header `t,alpha_bar,e1,...,en`.
void write_evolution_csv(std::ostream& os, const std::vector<EvolutionRow>& rows);

}  // namespace fera
