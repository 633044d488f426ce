#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fera/csv.hpp"
#include "fera/errors.hpp"
#include "fera/fft.hpp"
#include "fera/field.hpp"
#include "fera/kernel2d.hpp"
#include "fera/rng.hpp"
#include "fera/tensor_io.hpp"
#include "oracles.hpp"

using namespace fera;

TEST(Fft, MatchesNaiveDft) {
  const FieldD x = oracle::random_field<double>(Shape{2, 8, 4}, 1);
  const Spectrum2D s = fft2(x);
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<double> plane(x.channel(c).begin(), x.channel(c).end());
    const auto ref = oracle::dft2(plane, 8, 4);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_LT(std::abs(ref[i] - s.channel(c)[i]), 1e-10);
  }
}

TEST(Fft, RoundTripAndParseval) {
  const FieldD x = oracle::random_field<double>(Shape{1, 16, 16}, 2);
  const Spectrum2D s = fft2(x);
  const FieldD back = ifft2_real(s);
  EXPECT_LT(max_abs_diff(x, back), 1e-9 * std::sqrt(sum_squares(x)));
  double spec = 0.0;
  for (const auto& b : s.bins) spec += std::norm(b);
  EXPECT_NEAR(sum_squares(x), spec / 256.0, 1e-9 * sum_squares(x));
}

TEST(Fft, ConstantAndImpulse) {
  const FieldD c(Shape{1, 8, 8}, 2.5);
  const Spectrum2D s = fft2(c);
  EXPECT_NEAR(std::abs(s.at(0, 0, 0)), 2.5 * 64, 1e-9);
  for (std::size_t i = 1; i < s.bins.size(); ++i) EXPECT_LT(std::abs(s.bins[i]), 1e-9);
  FieldD imp(Shape{1, 8, 8});
  imp.at(0, 3, 5) = 1.0;
  for (const auto& b : fft2(imp).bins) EXPECT_NEAR(std::abs(b), 1.0, 1e-12);
}

TEST(Fft, RejectsNonPowerOfTwo) {
  EXPECT_THROW(fft2(FieldD(Shape{1, 12, 8})), UnsupportedShapeError);
  EXPECT_TRUE(is_power_of_two(64));
  EXPECT_FALSE(is_power_of_two(48));
}

TEST(Kernel, SizeRule) {
  EXPECT_EQ(gaussian_kernel_size(1.0, 64, 64), 7u);
  EXPECT_EQ(gaussian_kernel_size(0.5, 64, 64), 5u);   // 6*0.5+1 = 4 -> 5
  EXPECT_EQ(gaussian_kernel_size(2.0, 64, 64), 13u);
  EXPECT_EQ(gaussian_kernel_size(4.0, 16, 16), 15u);  // clamped to the largest odd <= 16
}

TEST(Kernel, GaussianTaps) {
  const auto k = gaussian_kernel<double>(1.0, 7);
  double norm = 0.0;
  for (int a = -3; a <= 3; ++a)
    for (int b = -3; b <= 3; ++b) norm += std::exp(-(a * a + b * b) / 2.0);
  EXPECT_NEAR(k.tap(3, 3), 1.0 / norm, 1e-15);
  EXPECT_NEAR(k.tap_sum(), 1.0, 1e-12);
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 7; ++c) {
      EXPECT_GE(k.tap(r, c), 0.0);
      EXPECT_DOUBLE_EQ(k.tap(r, c), k.tap(c, r));
      EXPECT_DOUBLE_EQ(k.tap(r, c), k.tap(6 - r, c));
      EXPECT_DOUBLE_EQ(k.tap(r, c), k.tap(6 - c, r));
    }
  const auto delta = gaussian_kernel<double>(0.01, 3);
  EXPECT_NEAR(delta.tap(1, 1), 1.0, 1e-12);
  EXPECT_THROW(gaussian_kernel<double>(0.0, 3), DomainError);
  EXPECT_THROW(gaussian_kernel<double>(1.0, 4), DomainError);
}

TEST(Conv, MatchesDirectOracleAndFft) {
  const FieldD x = oracle::random_field<double>(Shape{2, 8, 8}, 3);
  const auto k = gaussian_kernel<double>(1.0, 7);
  const FieldD y = conv_depthwise(x, k);
  EXPECT_LT(max_abs_diff(y, oracle::circular_conv(x, k)), 1e-12);

  const auto transfer = kernel_transfer(k, 8, 8);
  const Spectrum2D sx = fft2(x);
  Spectrum2D prod = sx;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 64; ++i) prod.bins[c * 64 + i] *= transfer[i];
  EXPECT_LT(max_abs_diff(y, ifft2_real(prod)), 1e-12);

  const Field xf = x.cast<float>();
  const Field yf = conv_depthwise(xf, gaussian_kernel<float>(1.0, 7));
  EXPECT_LT(max_abs_diff(yf.cast<double>(), y), 1e-6);
}

TEST(Conv, IdentityConstantLinearity) {
  const Field x = oracle::random_field(Shape{3, 16, 16}, 4);
  EXPECT_EQ(max_abs_diff(conv_depthwise(x, identity_kernel<float>()), x), 0.0);
  const Field c(Shape{1, 16, 16}, 0.75f);
  EXPECT_LT(max_abs_diff(conv_depthwise(c, gaussian_kernel<float>(2.0, 13)), c), 1e-6);

  const FieldD a = oracle::random_field<double>(Shape{1, 16, 16}, 5);
  const FieldD b = oracle::random_field<double>(Shape{1, 16, 16}, 6);
  const auto k = gaussian_kernel<double>(1.5, 11);
  const FieldD lhs = conv_depthwise(axpby(2.0, a, -3.0, b), k);
  const FieldD rhs = axpby(2.0, conv_depthwise(a, k), -3.0, conv_depthwise(b, k));
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
  EXPECT_THROW(conv_depthwise(FieldD(Shape{1, 8, 8}), gaussian_kernel<double>(2.0, 13)), ShapeError);
}

TEST(Conv, AdjointIdentity) {
  const FieldD x = oracle::random_field<double>(Shape{1, 16, 8}, 7);
  const FieldD g = oracle::random_field<double>(Shape{1, 16, 8}, 8);
  CounterRng rng(9);
  Kernel2D<double> k{5, std::vector<double>(25)};
  rng.fill_gaussian(std::span<double>(k.taps));
  const FieldD kx = conv_depthwise(x, k), ktg = conv_depthwise_adjoint(g, k);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lhs += kx.data()[i] * g.data()[i];
    rhs += x.data()[i] * ktg.data()[i];
  }
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs));
}

TEST(Conv, Conv3x3MatchesOracle) {
  const FieldD x = oracle::random_field<double>(Shape{3, 8, 6}, 10);
  std::vector<double> w(4 * 3 * 9);
  CounterRng rng(11);
  rng.fill_gaussian(std::span<double>(w));
  EXPECT_LT(max_abs_diff(conv3x3(x, w, 4), oracle::conv3x3(x, w, 4)), 1e-12);
  const Field xf = x.cast<float>();
  std::vector<float> wf(w.begin(), w.end());
  EXPECT_LT(max_abs_diff(conv3x3(xf, wf, 4).cast<double>(), oracle::conv3x3(x, w, 4)), 1e-5);
}

TEST(Rng, DeterministicAndIndependentStreams) {
  CounterRng a(42, 1, 2), b(42, 1, 2), c(42, 1, 3);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double va = a.gaussian();
    EXPECT_EQ(va, b.gaussian());
    differs |= va != c.gaussian();
  }
  EXPECT_TRUE(differs);
  CounterRng r(7);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double g = r.gaussian();
    s += g;
    s2 += g * g;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(r.below(7), 7u);
}

TEST(TensorIo, RoundTripAndHeader) {
  const Field x = oracle::random_field(Shape{2, 4, 8}, 12);
  std::stringstream ss;
  const std::vector<std::uint32_t> dims{2, 4, 8};
  write_tensor(ss, x.data(), dims);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "FERA");
  EXPECT_EQ(bytes.size(), tensor_record_bytes(DType::f32, 3, x.size()));
  EXPECT_EQ(bytes.size(), 4u + 4 + 1 + 4 + 12 + 4 * 64);
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);  // little-endian version 1
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 0u);  // f32
  const TensorRecord r = read_tensor(ss);
  ASSERT_EQ(r.dims, dims);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(static_cast<float>(r.values[i]), x.data()[i]);

  const auto path = std::filesystem::temp_directory_path() / "fera_tensor_io_test.fera";
  save_field(path, x);
  const Field y = load_field<float>(path);
  EXPECT_EQ(max_abs_diff(x, y), 0.0);
  std::filesystem::remove(path);
}

TEST(TensorIo, RejectsBadMagic) {
  std::stringstream ss("NOPE0000000000000");
  EXPECT_THROW(read_tensor(ss), Error);
}

TEST(Csv, NineSignificantDigits) {
  EXPECT_EQ(format_real(1.0 / 3.0), "0.333333333");
  EXPECT_EQ(format_real(std::numeric_limits<double>::infinity()), "inf");
  std::ostringstream os;
  const std::vector<double> row{1.5, 2.0};
  write_csv_row(os, row);
  EXPECT_EQ(os.str(), "1.5,2\n");
}

TEST(Field, ShapeChecks) {
  EXPECT_THROW(FieldD(Shape{1, 2, 2}, std::vector<double>(3)), ShapeError);
  EXPECT_THROW(FieldD(Shape{1, 2, 2}) + FieldD(Shape{1, 2, 3}), ShapeError);
}
