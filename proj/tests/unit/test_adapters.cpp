#include <gtest/gtest.h>

#include <cmath>

#include "fera/adapters.hpp"
#include "fera/denoiser.hpp"
#include "fera/errors.hpp"
#include "oracles.hpp"

using namespace fera;

namespace {

ExpertBank<double> random_bank(std::size_t experts, std::size_t rank, std::vector<ConvLayerSpec> layers,
                               std::uint64_t seed) {
  ExpertBank<double> bank = init_expert_bank<double>(experts, rank, 2.0, std::move(layers), seed);
  CounterRng rng(seed, 0xada, 0);
  for (auto& e : bank.experts)
    for (auto& l : e.layers) rng.fill_gaussian(std::span<double>(l.up));
  return bank;
}

/// Direct dense evaluation: (s/r) * U * (D * patch) with circularly padded 3x3 patches.
FieldD dense_oracle(const LoraExpert<double>& e, std::size_t layer_id, const FieldD& x) {
  const auto& l = e.layer(layer_id);
  const std::size_t cin = l.layer.in_channels, cout = l.layer.out_channels, r = e.rank;
  const std::size_t h = x.height(), w = x.width();
  FieldD out(Shape{cout, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx) {
      std::vector<double> patch(cin * 9);
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t ky = 0; ky < 3; ++ky)
          for (std::size_t kx = 0; kx < 3; ++kx)
            patch[c * 9 + ky * 3 + kx] = x.at(c, (y + h + ky - 1) % h, (xx + w + kx - 1) % w);
      std::vector<double> z(r, 0.0);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < patch.size(); ++j) z[i] += l.down[i * patch.size() + j] * patch[j];
      for (std::size_t o = 0; o < cout; ++o) {
        double v = 0.0;
        for (std::size_t i = 0; i < r; ++i) v += l.up[o * r + i] * z[i];
        out.at(o, y, xx) = e.scale / static_cast<double>(r) * v;
      }
    }
  return out;
}

const DenoiserConfig kConfig{};

}  // namespace

TEST(Experts, InitIsNeutralAndDeterministic) {
  const auto layers = denoiser_layers(kConfig);
  const auto bank = init_expert_bank<float>(3, 4, 1.0, {layers[1]}, 7);
  for (const auto& e : bank.experts)
    for (const auto& l : e.layers) {
      for (float u : l.up) EXPECT_EQ(u, 0.0f);
      double ss = 0.0;
      for (float d : l.down) ss += static_cast<double>(d) * d;
      EXPECT_NEAR(std::sqrt(ss / l.down.size()), 0.02, 0.004);
    }
  EXPECT_EQ(bank.to_parameter_set().flatten(), init_expert_bank<float>(3, 4, 1.0, {layers[1]}, 7).to_parameter_set().flatten());
  const Field x = oracle::random_field(Shape{16, 8, 8}, 1);
  EXPECT_EQ(sum_squares(blended_correction(bank, RoutingWeights{{0.3, 0.3, 0.4}}, 1, x)), 0.0);
}

TEST(Experts, ParameterCount) {
  const auto layers = denoiser_layers(kConfig);
  EXPECT_EQ(layers[1].in_features(), 144u);
  EXPECT_EQ(layers[1].out_features(), 16u);
  const auto bank = init_expert_bank<float>(3, 4, 1.0, {layers[1]}, 0);
  EXPECT_EQ(bank.parameter_count(), 1920u);
  EXPECT_EQ(bank.to_parameter_set().parameter_count(), 1920u);
  EXPECT_EQ(init_expert_bank<float>(1, 12, 1.0, {layers[1]}, 0).parameter_count(), 1920u);
  const auto names = bank.to_parameter_set();
  EXPECT_EQ(names.at(0).name, "expert0/layer1/down");
  EXPECT_EQ(names.at(5).name, "expert2/layer1/up");
}

TEST(Experts, InvalidRankAndAttachment) {
  const auto layers = denoiser_layers(kConfig);
  EXPECT_THROW(init_expert_bank<float>(3, 0, 1.0, {layers[1]}, 0), DomainError);
  EXPECT_THROW(init_expert_bank<float>(3, 17, 1.0, {layers[1]}, 0), DomainError);
  EXPECT_THROW(init_expert_bank<float>(3, 10, 1.0, {layers[0]}, 0), DomainError);
  EXPECT_THROW(init_expert_bank<float>(0, 2, 1.0, {layers[1]}, 0), DomainError);
  const auto bank = init_expert_bank<float>(2, 2, 1.0, {layers[1]}, 0);
  EXPECT_FALSE(bank.attached(0));
  EXPECT_THROW(bank.experts[0].layer(0), LookupError);
}

TEST(Experts, CorrectionMatchesDenseOracle) {
  const auto layers = denoiser_layers(kConfig);
  const auto bank = random_bank(3, 4, {layers[1]}, 3);
  const FieldD x = oracle::random_field<double>(Shape{16, 6, 5}, 4);
  for (const auto& e : bank.experts) EXPECT_LT(max_abs_diff(expert_correction(e, 1, x), dense_oracle(e, 1, x)), 1e-10);
}

TEST(Experts, OneHotSelectsSingleExpert) {
  const auto layers = denoiser_layers(kConfig);
  const auto bank = random_bank(3, 4, {layers[1]}, 5);
  const FieldD x = oracle::random_field<double>(Shape{16, 8, 8}, 6);
  for (std::size_t m = 0; m < 3; ++m) {
    const FieldD blended = blended_correction(bank, RoutingWeights::one_hot(3, m), 1, x);
    EXPECT_LT(max_abs_diff(blended, expert_correction(bank.experts[m], 1, x)), 1e-12);
  }
}

TEST(Experts, LinearInWeightsAndInput) {
  const auto layers = denoiser_layers(kConfig);
  const auto bank = random_bank(3, 4, {layers[1]}, 7);
  const FieldD x = oracle::random_field<double>(Shape{16, 8, 8}, 8);
  const FieldD y = oracle::random_field<double>(Shape{16, 8, 8}, 9);
  const RoutingWeights a{{0.2, 0.3, 0.5}};
  FieldD expected(Shape{16, 8, 8});
  for (std::size_t m = 0; m < 3; ++m) expected = expected + FieldD(a.alpha[m] * expert_correction(bank.experts[m], 1, x));
  EXPECT_LT(max_abs_diff(blended_correction(bank, a, 1, x), expected), 1e-12);
  const FieldD lhs = blended_correction(bank, a, 1, axpby(1.5, x, -0.5, y));
  const FieldD rhs = axpby(1.5, blended_correction(bank, a, 1, x), -0.5, blended_correction(bank, a, 1, y));
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-10);
}

TEST(Experts, MergedWeightEquivalence) {
  const auto layers = denoiser_layers(kConfig);
  const auto bank = random_bank(3, 4, {layers[1]}, 11);
  const RoutingWeights a{{0.1, 0.6, 0.3}};
  const FieldD x = oracle::random_field<double>(Shape{16, 16, 16}, 12);
  const auto delta = merged_weight_delta(bank, a, 1);
  ASSERT_EQ(delta.size(), 16u * 16u * 9u);
  const FieldD via_conv = conv3x3(x, delta, 16);
  const FieldD via_lora = blended_correction(bank, a, 1, x);
  EXPECT_LT(max_abs_diff(via_conv, via_lora) / std::sqrt(sum_squares(via_lora) / via_lora.size()), 1e-5);

  const auto fb = [&] {
    ExpertBank<float> f;
    f.attachment = bank.attachment;
    f.rank = bank.rank;
    f.scale = bank.scale;
    for (const auto& e : bank.experts) {
      LoraExpert<float> fe{e.rank, e.scale, {}};
      for (const auto& l : e.layers)
        fe.layers.push_back({l.layer, std::vector<float>(l.down.begin(), l.down.end()),
                             std::vector<float>(l.up.begin(), l.up.end())});
      f.experts.push_back(fe);
    }
    return f;
  }();
  const Field xf = x.cast<float>();
  const Field merged = conv3x3(xf, merged_weight_delta(fb, a, 1), 16);
  const Field lora = blended_correction(fb, a, 1, xf);
  EXPECT_LT(max_abs_diff(merged, lora) / std::sqrt(sum_squares(lora) / lora.size()), 1e-5);
}

TEST(Experts, WeightsAreValidated) {
  const auto layers = denoiser_layers(kConfig);
  const auto bank = random_bank(3, 2, {layers[1]}, 13);
  const FieldD x = oracle::random_field<double>(Shape{16, 4, 4}, 14);
  EXPECT_THROW(blended_correction(bank, RoutingWeights{{0.5, 0.5}}, 1, x), ShapeError);
  EXPECT_THROW(blended_correction(bank, RoutingWeights{{0.5, 0.6, 0.1}}, 1, x), DomainError);
}

TEST(Experts, ParameterSetRoundTrip) {
  const auto layers = denoiser_layers(kConfig);
  const auto a = random_bank(3, 4, {layers[1]}, 15);
  auto b = init_expert_bank<double>(3, 4, 2.0, {layers[1]}, 16);
  b.assign(a.to_parameter_set());
  EXPECT_EQ(b.to_parameter_set().flatten(), a.to_parameter_set().flatten());
}
