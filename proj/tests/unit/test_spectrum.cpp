#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fera/datagen.hpp"
#include "fera/errors.hpp"
#include "fera/fft.hpp"
#include "fera/schedule.hpp"
#include "fera/spectrum.hpp"
#include "oracles.hpp"

using namespace fera;

namespace {

std::vector<double> fft_band_energies(const FieldD& x, const FilterBank& bank) {
  const auto h = oracle::band_transfers(bank, x.height(), x.width());
  const Spectrum2D s = fft2(x);
  const double n = static_cast<double>(x.shape().plane());
  std::vector<double> e(bank.n_bands, 0.0);
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (std::size_t i = 0; i < x.shape().plane(); ++i)
      for (std::size_t k = 0; k < bank.n_bands; ++k) e[k] += std::norm(h[k][i] * s.channel(c)[i]) / n;
  return e;
}

}  // namespace

TEST(FilterBank, ScaleRule) {
  const FilterBank b128 = build_filter_bank(3, 128, 128);
  EXPECT_DOUBLE_EQ(b128.kappa, 1.0);
  EXPECT_EQ(b128.sigmas, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(build_filter_bank(2, 128, 128).sigmas, (std::vector<double>{1.0}));
  const FilterBank b64 = build_filter_bank(3, 64, 64);
  EXPECT_EQ(b64.sigmas, (std::vector<double>{0.5, 1.0}));
  EXPECT_FALSE(b64.kappa_clamped);
  const FilterBank b32 = build_filter_bank(3, 32, 32);
  EXPECT_TRUE(b32.kappa_clamped);
  EXPECT_DOUBLE_EQ(b32.kappa, kMinKappa);
  EXPECT_THROW(build_filter_bank(1, 64, 64), DomainError);
  EXPECT_THROW(filter_bank_from_sigmas({2.0, 1.0}), DomainError);
}

TEST(Decompose, ReconstructionIdentity) {
  for (std::size_t n : {2u, 3u, 4u, 5u}) {
    for (std::size_t s : {16u, 32u}) {
      const Field x = oracle::random_field(Shape{3, s, s}, n * 100 + s);
      const FilterBank bank = build_filter_bank(n, s, s);
      const auto d = decompose(x, bank);
      Field sum(x.shape());
      for (const auto& b : d.bands) sum = sum + b;
      EXPECT_LT(max_abs_diff(sum, x), 1e-5);
      const FieldD xd = x.cast<double>();
      const auto dd = decompose(xd, bank);
      FieldD sd(x.shape());
      for (const auto& b : dd.bands) sd = sd + b;
      EXPECT_LT(max_abs_diff(sd, xd), 1e-10);
    }
  }
}

TEST(Decompose, ConstantFieldLivesInLowestBand) {
  const Field c(Shape{1, 32, 32}, 1.25f);
  const auto d = decompose(c, build_filter_bank(3, 32, 32));
  EXPECT_LT(max_abs_diff(d.bands[0], c), 1e-6);
  for (std::size_t k = 1; k < 3; ++k) EXPECT_LT(std::sqrt(sum_squares(d.bands[k])), 1e-4);
  const auto e = fei(d).e;
  EXPECT_NEAR(e[0], 1.0, 1e-9);
}

TEST(Decompose, ParsevalPerBand) {
  const FieldD x = oracle::random_field<double>(Shape{1, 64, 64}, 21);
  const FilterBank bank = build_filter_bank(3, 64, 64);
  const auto spatial = band_energies(x, bank);
  const auto freq = fft_band_energies(x, bank);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_LT(std::abs(spatial[k] - freq[k]) / freq[k], 1e-10);
  const Field xf = x.cast<float>();
  const auto spatial_f = band_energies(xf, bank);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_LT(std::abs(spatial_f[k] - freq[k]) / freq[k], 1e-5);
}

TEST(Fei, SimplexScaleInvarianceAndOracle) {
  const FieldD x = oracle::random_field<double>(Shape{1, 64, 64}, 22);
  const FilterBank bank = build_filter_bank(3, 64, 64);
  const auto e1 = fei(x, bank).e;
  EXPECT_NEAR(std::accumulate(e1.begin(), e1.end(), 0.0), 1.0, 1e-12);
  for (double c : {1e-3, 1e3}) {
    const auto ec = fei(FieldD(c * x), bank).e;
    for (std::size_t k = 0; k < 3; ++k) EXPECT_LT(std::abs(ec[k] - e1[k]), 1e-6);
  }
  const auto freq = fft_band_energies(x, bank);
  const double total = std::accumulate(freq.begin(), freq.end(), 0.0);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_LT(std::abs(e1[k] - freq[k] / total), 1e-4);
  EXPECT_THROW(fei(FieldD(Shape{1, 16, 16}), build_filter_bank(3, 16, 16)), DegenerateInputError);
}

TEST(Fei, ApproximateEnergyPartitionForWhiteNoise) {
  // The DoG bands overlap, so band energies only approximately partition the total. With the
  // default scale rule the overlap is large at 64x64 (sigmas 0.5 and 1) and small from 128x128 on.
  for (std::size_t n : {64u, 128u}) {
    const FieldD x = oracle::random_field<double>(Shape{1, n, n}, 23);
    const FilterBank bank = build_filter_bank(3, n, n);
    const auto e = band_energies(x, bank);
    const double sum = std::accumulate(e.begin(), e.end(), 0.0);
    const double gap = std::abs(sum - sum_squares(x)) / sum_squares(x);
    RecordProperty("energy_partition_gap_" + std::to_string(n), std::to_string(gap));
    const auto freq = fft_band_energies(x, bank);
    EXPECT_NEAR(sum, std::accumulate(freq.begin(), freq.end(), 0.0), 1e-8 * sum);
    if (n == 128) {
      EXPECT_LT(gap, 0.25);
    }
  }
}

TEST(FilterResponse, MiddleBandIsBandPass) {
  const std::size_t n = 128;
  const FilterBank bank = build_filter_bank(3, n, n);
  const auto h = oracle::band_transfers(bank, n, n);
  const auto& mid = h[1];
  EXPECT_LE(std::abs(mid[0]), 1e-3);
  EXPECT_LE(std::abs(mid[(n / 2) * n + n / 2]), 1e-3);
  // Along the diagonal the peak lies strictly inside (0, Nyquist).
  std::size_t best = 0;
  double peak = 0.0;
  for (std::size_t i = 0; i <= n / 2; ++i) {
    const double v = std::abs(mid[i * n + i]);
    if (v > peak) peak = v, best = i;
  }
  EXPECT_GT(best, 0u);
  EXPECT_LT(best, n / 2);
  EXPECT_GT(peak, 0.1);
}

TEST(RadialSpectrum, ImpulseConstantAndPowerLaw) {
  FieldD imp(Shape{1, 32, 32});
  imp.at(0, 0, 0) = 1.0;
  for (double a : radial_spectrum(imp, 8).amplitudes) EXPECT_NEAR(a, 1.0, 1e-9);
  const FieldD c(Shape{1, 32, 32}, 3.0);
  for (double a : radial_spectrum(c, 8).amplitudes) EXPECT_LT(a, 1e-9);

  double slope = 0.0;
  for (std::uint64_t s = 0; s < 16; ++s) {
    SyntheticSpec spec;
    spec.size = 64;
    spec.seed = s;
    const auto r = radial_spectrum(gen_powerlaw<double>(spec), 16);
    slope += fit_loglog_slope(r.bin_centers, r.amplitudes, r.counts, kSlopeFitLow, kSlopeFitHigh) / 16.0;
  }
  EXPECT_NEAR(slope, -1.0, 0.15);
  const auto r = radial_spectrum(c, 8);
  for (std::size_t b = 1; b < r.bin_centers.size(); ++b) EXPECT_GT(r.bin_centers[b], r.bin_centers[b - 1]);
  EXPECT_LE(r.bin_centers.back(), std::sqrt(2.0) / 2.0);
}

TEST(Snr, InfiniteAtCleanStepAndMonotone) {
  SyntheticSpec spec;
  spec.size = 32;
  const Field x0 = gen_powerlaw(spec);
  const NoiseSchedule sch = make_schedule(ScheduleKind::linear, 100);
  const auto p0 = measure_snr(x0, sch, 0, 8, 8);
  for (double v : p0.snr) EXPECT_TRUE(std::isinf(v));
  std::vector<double> prev;
  for (std::size_t t = 100; t-- > 1;) {
    const auto p = measure_snr(x0, sch, t, 8, 8);
    if (!prev.empty()) {
      for (std::size_t b = 0; b < p.snr.size(); ++b) EXPECT_GE(p.snr[b], prev[b]);
    }
    prev = p.snr;
  }
  EXPECT_THROW(measure_snr(x0, sch, 101, 8, 8), IndexError);
  EXPECT_THROW(measure_snr(x0, sch, 5, 8, 4), DomainError);
}

TEST(EnergyEvolution, EndpointsMatchCleanFieldAndWhiteNoise) {
  const std::size_t n = 64;
  const FilterBank bank = build_filter_bank(3, n, n);
  const NoiseSchedule sch = make_schedule(ScheduleKind::linear, 1000);
  const auto h = oracle::band_transfers(bank, n, n);
  std::vector<double> pass(3, 0.0);
  for (std::size_t k = 0; k < 3; ++k)
    for (const auto& v : h[k]) pass[k] += std::norm(v);
  const double total = std::accumulate(pass.begin(), pass.end(), 0.0);

  std::vector<double> mean_end(3, 0.0);
  for (std::uint64_t s = 0; s < 16; ++s) {
    SyntheticSpec spec;
    spec.size = n;
    spec.seed = s;
    const Field x0 = gen_powerlaw(spec);
    const auto rows = energy_evolution(x0, sch, bank, s);
    ASSERT_EQ(rows.size(), 1001u);
    const auto clean = fei(x0, bank).e;
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_NEAR(rows[0].e[k], clean[k], 1e-9);
      mean_end[k] += rows.back().e[k] / 16.0;
    }
  }
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(mean_end[k], pass[k] / total, 0.05);
}
