#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fera/diffusion.hpp"
#include "fera/errors.hpp"
#include "fera/model.hpp"
#include "fera/params.hpp"
#include "fera/schedule.hpp"
#include "oracles.hpp"

using namespace fera;

TEST(Schedule, LinearAndCosine) {
  const NoiseSchedule lin = make_schedule(ScheduleKind::linear, 1000);
  ASSERT_EQ(lin.alpha_bar.size(), 1001u);
  EXPECT_EQ(lin.alpha_bar[0], 1.0);
  EXPECT_LT(lin.alpha_bar[1000], 0.01);
  EXPECT_NEAR(lin.betas[1], 1e-4, 1e-12);
  EXPECT_NEAR(lin.betas[1000], 2e-2, 1e-12);
  double prod = 1.0;
  for (std::size_t t = 1; t <= 1000; ++t) {
    prod *= 1.0 - lin.betas[t];
    EXPECT_NEAR(lin.alpha_bar[t], prod, 1e-6);
    EXPECT_LT(lin.alpha_bar[t], lin.alpha_bar[t - 1]);
  }
  const NoiseSchedule cos = make_schedule(ScheduleKind::cosine, 100);
  EXPECT_EQ(cos.alpha_bar[0], 1.0);
  for (std::size_t t = 1; t <= 100; ++t) EXPECT_LT(cos.alpha_bar[t], cos.alpha_bar[t - 1]);
  EXPECT_THROW(make_schedule(ScheduleKind::linear, 9), DomainError);
  EXPECT_THROW(parse_schedule_kind("quadratic"), Error);
}

TEST(ForwardCorrupt, IdentitiesAndExpectation) {
  const NoiseSchedule sch = make_schedule(ScheduleKind::linear, 1000);
  const Field x0 = oracle::random_field(Shape{1, 16, 16}, 1);
  const Field eps = oracle::random_field(Shape{1, 16, 16}, 2);
  EXPECT_EQ(max_abs_diff(forward_corrupt(x0, 0, sch, eps), x0), 0.0);
  const Field zero(x0.shape());
  const Field pure = forward_corrupt(zero, 500, sch, eps);
  const float c = static_cast<float>(std::sqrt(1.0 - sch.alpha_bar[500]));
  EXPECT_LT(max_abs_diff(pure, Field(c * eps)), 1e-6);

  const std::size_t t = 300;
  double mean = 0.0;
  for (std::uint64_t s = 0; s < 64; ++s) mean += sum_squares(forward_corrupt(x0, t, sch, oracle::random_field(x0.shape(), 100 + s))) / 64.0;
  const double expected = sch.alpha_bar[t] * sum_squares(x0) + (1.0 - sch.alpha_bar[t]) * 256.0;
  EXPECT_NEAR(mean, expected, 0.05 * expected);
  EXPECT_THROW(forward_corrupt(x0, 10, sch, Field(Shape{1, 8, 8})), ShapeError);
  EXPECT_THROW(forward_corrupt(x0, 1001, sch, eps), IndexError);
}

TEST(X0Estimate, RoundTrip) {
  const NoiseSchedule sch = make_schedule(ScheduleKind::linear, 1000);
  CounterRng rng(3);
  for (int i = 0; i < 20; ++i) {
    const std::size_t t = 1 + rng.below(1000);
    const FieldD x0 = oracle::random_field<double>(Shape{1, 8, 8}, 10 + i);
    const FieldD eps = oracle::random_field<double>(Shape{1, 8, 8}, 50 + i);
    EXPECT_LT(max_abs_diff(x0_estimate(forward_corrupt(x0, t, sch, eps), eps, t, sch), x0), 1e-9) << "t=" << t;
  }
  const Field x0 = oracle::random_field(Shape{1, 8, 8}, 4);
  const Field eps = oracle::random_field(Shape{1, 8, 8}, 5);
  EXPECT_LT(max_abs_diff(x0_estimate(forward_corrupt(x0, 700, sch, eps), eps, 700, sch), x0), 1e-4);
  const Field xt = oracle::random_field(Shape{1, 8, 8}, 6);
  const float inv = static_cast<float>(1.0 / std::sqrt(sch.alpha_bar[40]));
  EXPECT_LT(max_abs_diff(x0_estimate(xt, Field(xt.shape()), 40, sch), Field(inv * xt)), 1e-5);
}

TEST(Denoiser, ZeroNetworkAndDeterministicInit) {
  const DenoiserConfig cfg;
  const Field x = oracle::random_field(Shape{1, 8, 8}, 7);
  const Field out = denoise(zero_denoiser<float>(cfg), cfg, x, 10, 1000);
  EXPECT_EQ(sum_squares(out), 0.0);
  const auto a = init_denoiser<float>(cfg, 5), b = init_denoiser<float>(cfg, 5);
  EXPECT_EQ(a.flatten(), b.flatten());
  EXPECT_NE(a.flatten(), init_denoiser<float>(cfg, 6).flatten());
  // 3 convs plus two embedding projections.
  const std::size_t expected = (16 * 1 * 9 + 16) + (16 * 16 * 9 + 16) + (1 * 16 * 9 + 1) + 2 * 16 * 32;
  EXPECT_EQ(a.parameter_count(), expected);
}

TEST(Denoiser, NeutralAdaptersLeaveOutputUnchanged) {
  const DenoiserConfig cfg;
  const auto params = init_denoiser<float>(cfg, 1);
  const auto layers = denoiser_layers(cfg);
  const ExpertBank<float> bank = init_expert_bank<float>(3, 1, 1.0, {layers[0], layers[1], layers[2]}, 9);
  AdapterContext<float> ctx{&bank, RoutingWeights{{0.2, 0.5, 0.3}}};
  const Field x = oracle::random_field(Shape{1, 16, 16}, 8);
  EXPECT_EQ(max_abs_diff(denoise(params, cfg, x, 250, 1000), denoise(params, cfg, x, 250, 1000, &ctx)), 0.0);
}

TEST(Denoiser, TimestepEmbedding) {
  const auto e = timestep_embedding(0, 1000, 32);
  ASSERT_EQ(e.size(), 32u);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(e[i], 0.0);
    EXPECT_EQ(e[16 + i], 1.0);
  }
  EXPECT_NE(timestep_embedding(10, 1000, 32), timestep_embedding(11, 1000, 32));
}

TEST(Sampler, TimestepsAndOneStepClosedForm) {
  EXPECT_EQ(sampling_timesteps(4, 1000), (std::vector<std::size_t>{1000, 750, 500, 250}));
  EXPECT_EQ(sampling_timesteps(30, 1000).size(), 30u);
  EXPECT_THROW(sampling_timesteps(1001, 1000), DomainError);

  AdapterModel m;
  m.config = DenoiserConfig{};
  m.base = zero_denoiser<float>(m.config);
  m.bank = build_filter_bank(3, 16, 16);
  const NoiseSchedule sch = make_schedule(ScheduleKind::linear, 1000);
  SampleOptions opt;
  opt.steps = 1;
  opt.seed = 11;
  opt.shape = Shape{1, 16, 16};
  opt.keep_trajectory = true;
  const DiffusionSample s = sample(m, sch, opt);
  ASSERT_EQ(s.trajectory.size(), 2u);
  const Field& xT = s.trajectory.front();
  CounterRng init(11, 0x53414d50, 0);
  EXPECT_EQ(max_abs_diff(xT, gaussian_field<float>(opt.shape, init)), 0.0);
  const float k = static_cast<float>(1.0 / std::sqrt(sch.alpha_bar[1000]));
  EXPECT_LT(max_abs_diff(s.final, Field(k * xT)), 1e-3);
}

TEST(Sampler, DeterministicTrajectoryLength) {
  AdapterModel m;
  m.config = DenoiserConfig{};
  m.base = init_denoiser<float>(m.config, 2);
  m.bank = build_filter_bank(3, 16, 16);
  const NoiseSchedule sch = make_schedule(ScheduleKind::linear, 1000);
  SampleOptions opt;
  opt.steps = 10;
  opt.seed = 4;
  opt.shape = Shape{1, 16, 16};
  opt.keep_trajectory = true;
  const DiffusionSample a = sample(m, sch, opt), b = sample(m, sch, opt);
  ASSERT_EQ(a.trajectory.size(), 11u);
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) EXPECT_EQ(a.trajectory[i].values(), b.trajectory[i].values());
  EXPECT_EQ(a.trace.size(), 10u);
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  AdapterModel m;
  m.config = DenoiserConfig{};
  m.base = init_denoiser<float>(m.config, 3);
  m.bank = build_filter_bank(3, 32, 32);
  const auto layers = denoiser_layers(m.config);
  m.experts = init_expert_bank<float>(3, 4, 1.0, {layers[1]}, 5);
  for (auto& e : m.experts->experts) e.layers[0].up.assign(e.layers[0].up.size(), 0.25f);
  m.router = init_router<float>(3, 3, 0.7, 5);
  m.routing = RoutingSpec{RoutingMode::fei_soft, 3, {}};

  const auto dir = std::filesystem::temp_directory_path() / "fera_ckpt_test";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir, model_checkpoint(m));
  const AdapterModel r = model_from_checkpoint(load_checkpoint(dir));
  EXPECT_EQ(r.base.flatten(), m.base.flatten());
  EXPECT_EQ(r.base.parameter_count(), m.base.parameter_count());
  EXPECT_EQ(r.experts->to_parameter_set().flatten(), m.experts->to_parameter_set().flatten());
  EXPECT_EQ(r.router->to_parameter_set().flatten(), m.router->to_parameter_set().flatten());
  EXPECT_EQ(r.bank.sigmas, m.bank.sigmas);
  EXPECT_EQ(r.routing.mode, RoutingMode::fei_soft);
  const Field x = oracle::random_field(Shape{1, 32, 32}, 6);
  EXPECT_EQ(max_abs_diff(r.predict(x, 400, 1000), m.predict(x, 400, 1000)), 0.0);
  std::filesystem::remove_all(dir);
}
