#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fera/datagen.hpp"
#include "fera/errors.hpp"
#include "fera/routing.hpp"
#include "oracles.hpp"

using namespace fera;

namespace {

void expect_simplex(const RoutingWeights& w) {
  for (double a : w.alpha) EXPECT_GE(a, 0.0);
  EXPECT_NEAR(std::accumulate(w.alpha.begin(), w.alpha.end(), 0.0), 1.0, 1e-9);
}

FeiVector fei_of(std::vector<double> e) {
  FeiVector v;
  v.e = std::move(e);
  return v;
}

}  // namespace

TEST(Softmax, MatchesOracleAndTemperature) {
  const std::vector<double> logits{0.3, -1.2, 2.5, 0.0};
  for (double tau : {0.1, 0.7, 1.0, 5.0}) {
    const auto w = softmax_weights(logits, tau);
    const auto ref = oracle::softmax(logits, tau);
    for (std::size_t i = 0; i < logits.size(); ++i) EXPECT_NEAR(w.alpha[i], ref[i], 1e-9);
    expect_simplex(w);
  }
  EXPECT_GT(softmax_weights(std::vector<double>{2, 0, 0}, 0.01).alpha[0], 0.999);
  const auto big = softmax_weights(std::vector<double>{1000.0, 999.0}, 1.0);
  EXPECT_NEAR(big.alpha[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_THROW(softmax_weights(std::vector<double>{NAN, 0.0}, 1.0), NumericError);
  EXPECT_THROW(softmax_weights(std::vector<double>{1.0, 0.0}, 0.0), DomainError);
}

TEST(Softmax, LowerTemperatureSharpens) {
  const std::vector<double> logits{0.4, 0.1, -0.3};
  double prev_max = 0.0, prev_entropy = 1e9;
  for (double tau : {4.0, 2.0, 1.0, 0.7, 0.3, 0.1}) {
    const auto w = softmax_weights(logits, tau);
    const double m = *std::max_element(w.alpha.begin(), w.alpha.end());
    EXPECT_GT(m, prev_max);
    EXPECT_LT(routing_entropy(w), prev_entropy);
    prev_max = m;
    prev_entropy = routing_entropy(w);
  }
}

TEST(Router, ZeroRouterIsUniform) {
  const auto r = zero_router<double>(3, 4, kDefaultTau);
  for (const auto& e : {std::vector<double>{1, 0, 0}, std::vector<double>{0.2, 0.3, 0.5}}) {
    const auto w = route_soft(r, fei_of(e));
    for (double a : w.alpha) EXPECT_NEAR(a, 0.25, 1e-12);
  }
  EXPECT_NEAR(routing_entropy(RoutingWeights::uniform(4)), std::log(4.0), 1e-12);
}

TEST(Router, LogitsMatchManualMlp) {
  const auto r = init_router<double>(3, 3, 0.7, 5);
  EXPECT_EQ(r.to_parameter_set().parameter_count(), 16u * 3 + 16 + 3 * 16 + 3);
  const std::vector<double> in{0.5, 0.3, 0.2};
  std::vector<double> h(16);
  for (std::size_t j = 0; j < 16; ++j) {
    double z = r.b1[j];
    for (std::size_t i = 0; i < 3; ++i) z += r.w1[j * 3 + i] * in[i];
    h[j] = z / (1.0 + std::exp(-z));
  }
  const auto logits = router_logits(r, in);
  for (std::size_t m = 0; m < 3; ++m) {
    double z = r.b2[m];
    for (std::size_t j = 0; j < 16; ++j) z += r.w2[m * 16 + j] * h[j];
    EXPECT_NEAR(logits[m], z, 1e-12);
  }
  const auto w = route_soft(r, fei_of(in));
  const auto ref = oracle::softmax(logits, 0.7);
  for (std::size_t m = 0; m < 3; ++m) EXPECT_NEAR(w.alpha[m], ref[m], 1e-12);
  EXPECT_THROW(route_soft(r, fei_of({0.5, 0.5})), ShapeError);
}

TEST(Router, PermutingOutputRowsPermutesWeights) {
  auto r = init_router<double>(3, 3, 0.7, 8);
  const FeiVector e = fei_of({0.6, 0.3, 0.1});
  const auto w = route_soft(r, e);
  const std::vector<std::size_t> perm{2, 0, 1};
  auto p = r;
  for (std::size_t m = 0; m < 3; ++m) {
    p.b2[m] = r.b2[perm[m]];
    for (std::size_t j = 0; j < 16; ++j) p.w2[m * 16 + j] = r.w2[perm[m] * 16 + j];
  }
  const auto wp = route_soft(p, e);
  for (std::size_t m = 0; m < 3; ++m) EXPECT_NEAR(wp.alpha[m], w.alpha[perm[m]], 1e-14);
}

TEST(Discrete, TwoExpertsAndTieRule) {
  const auto th = even_thresholds(2, 1000);
  EXPECT_EQ(th, (std::vector<std::size_t>{500}));
  EXPECT_EQ(route_discrete(th, 999, 1000).alpha, (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(route_discrete(th, 501, 1000).alpha, (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(route_discrete(th, 500, 1000).alpha, (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(route_discrete(th, 1, 1000).alpha, (std::vector<double>{0.0, 1.0}));
}

TEST(Discrete, ThreeExpertSweepIsMonotone) {
  const auto th = even_thresholds(3, 1000);
  EXPECT_EQ(th, (std::vector<std::size_t>{333, 667}));
  std::size_t prev = 0, switches = 0;
  for (std::size_t t = 1000; t >= 1; --t) {
    const auto w = route_discrete(th, t, 1000);
    expect_simplex(w);
    const auto j = static_cast<std::size_t>(std::max_element(w.alpha.begin(), w.alpha.end()) - w.alpha.begin());
    EXPECT_GE(j, prev);
    switches += j != prev;
    prev = j;
  }
  EXPECT_EQ(switches, 2u);
  EXPECT_EQ(route_discrete(th, 1000, 1000).alpha[0], 1.0);
  EXPECT_EQ(route_discrete(th, 1, 1000).alpha[2], 1.0);
}

TEST(TimestepRouter, InputAndSmoothness) {
  const auto in = timestep_input(250, 1000, 3);
  EXPECT_EQ(in, (std::vector<double>{0.25, 0.25, 0.25}));
  const auto r = init_router<double>(3, 3, 0.7, 2);
  auto prev = route_timestep_soft(r, 1000, 1000);
  for (std::size_t t = 999; t >= 1; --t) {
    const auto w = route_timestep_soft(r, t, 1000);
    expect_simplex(w);
    for (std::size_t m = 0; m < 3; ++m) EXPECT_LT(std::abs(w.alpha[m] - prev.alpha[m]), 0.01);
    prev = w;
  }
}

TEST(Route, DispatchHardModesAndDegenerateFallback) {
  const auto r = init_router<float>(3, 3, 0.7, 4);
  const FilterBank bank = build_filter_bank(3, 16, 16);
  const Field x = oracle::random_field(Shape{1, 16, 16}, 5);
  RoutingSpec soft{RoutingMode::fei_soft, 3, {}};
  RoutingSpec hard{RoutingMode::fei_hard, 3, {}};
  const auto ws = route(soft, &r, x, 400, 1000, bank);
  const auto wh = route(hard, &r, x, 400, 1000, bank);
  const auto arg = std::max_element(ws.alpha.begin(), ws.alpha.end()) - ws.alpha.begin();
  EXPECT_EQ(wh.alpha, RoutingWeights::one_hot(3, static_cast<std::size_t>(arg)).alpha);
  EXPECT_EQ(route(RoutingSpec{RoutingMode::none, 1, {}}, static_cast<const RouterParams<float>*>(nullptr), x, 400, 1000,
                  bank).alpha,
            (std::vector<double>{1.0}));
  EXPECT_EQ(route(RoutingSpec{RoutingMode::discrete, 3, {}}, &r, x, 1000, 1000, bank).alpha[0], 1.0);

  RoutingStats stats;
  const auto wz = route(soft, &r, Field(Shape{1, 16, 16}), 400, 1000, bank, &stats);
  EXPECT_EQ(stats.degenerate_fallbacks, 1u);
  for (double a : wz.alpha) EXPECT_NEAR(a, 1.0 / 3.0, 1e-12);
  EXPECT_THROW(route(soft, static_cast<const RouterParams<float>*>(nullptr), x, 400, 1000, bank), Error);
}

TEST(Route, FeiRoutingIsScaleInvariant) {
  const auto r = init_router<double>(3, 3, 0.7, 6);
  const FilterBank bank = build_filter_bank(3, 32, 32);
  const FieldD x = oracle::random_field<double>(Shape{1, 32, 32}, 7);
  const RoutingSpec soft{RoutingMode::fei_soft, 3, {}};
  const auto w = route(soft, &r, x, 100, 1000, bank);
  for (double c : {1e-3, 7.0, 1e4}) {
    const auto wc = route(soft, &r, FieldD(c * x), 100, 1000, bank);
    for (std::size_t m = 0; m < 3; ++m) EXPECT_NEAR(wc.alpha[m], w.alpha[m], 1e-9);
  }
}

TEST(Trace, CsvAndJumps) {
  std::vector<TraceRow> rows{{10, {0.5, 0.5}, {1.0, 0.0}}, {5, {0.4, 0.6}, {0.7, 0.3}}, {1, {0.3, 0.7}, {0.0, 1.0}}};
  EXPECT_NEAR(max_adjacent_jump(rows), 0.7, 1e-12);
  std::ostringstream os;
  write_trace_csv(os, rows);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "t,e1,e2,a1,a2");
  for (const auto& row : rows) {
    EXPECT_NEAR(std::accumulate(row.alpha.begin(), row.alpha.end(), 0.0), 1.0, 1e-12);
  }
  EXPECT_EQ(parse_routing_mode("timestep_hard"), RoutingMode::timestep_hard);
  EXPECT_STREQ(routing_mode_name(RoutingMode::fei_soft), "fei_soft");
  EXPECT_THROW(parse_routing_mode("argmax"), Error);
  EXPECT_THROW(RoutingWeights({0.5, 0.6}).validate(2), DomainError);
  EXPECT_THROW(RoutingWeights({0.5, 0.5}).validate(3), ShapeError);
}
