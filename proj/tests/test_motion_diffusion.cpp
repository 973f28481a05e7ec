#include <gtest/gtest.h>

#include <cmath>

#include "maadv/motion_diffusion.hpp"
#include "test_support.hpp"

using namespace maadv;
using maadv::fixtures::make_stream;
using maadv::fixtures::random_unit_stream;

TEST(Velocity, HandExample) {
  const auto s = make_stream({{0, 0, 0}, {0.1, 0, 0.1}, {0.9, 0.9, 0.9}});
  const auto v = event_velocity(s);
  EXPECT_DOUBLE_EQ(v.v[0], 0.0);
  EXPECT_DOUBLE_EQ(v.v[1], 0.0);
  EXPECT_DOUBLE_EQ(v.v[2], 1.0);
  // Raw speeds before min-max: 1, 1, sqrt(0.8^2 + 0.9^2) / 0.8.
  EXPECT_NEAR(std::sqrt(0.64 + 0.81) / 0.8, 1.5052, 1e-4);
}

TEST(Velocity, ConstantSpeedIsZero) {
  EventStream s = make_stream({});
  for (int i = 0; i < 10; ++i) s.events.push_back({0.05 * i, 0.02 * i, 0.1 * i, 1.0});
  for (double v : event_velocity(s).v) EXPECT_EQ(v, 0.0);
}

TEST(Velocity, DuplicateTimestampsStayFinite) {
  const auto s = make_stream({{0, 0, 0.5}, {0.2, 0, 0.5}, {0.3, 0, 0.7}});
  for (double v : event_velocity(s).v) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(DiffusionWeights, ScalarValues) {
  const auto s = make_stream({{0, 0, 0}, {0.01, 0, 0}, {0.01, 0, 0}});
  const auto index = build_neighbor_index(s, 2);
  VelocityField zero{{0.0, 0.0, 0.0}};
  const auto w = diffusion_weights(index, zero, 0.01, 0.1);
  // Row 1: neighbour 2 at distance 0, neighbour 0 at distance sigma_s.
  EXPECT_EQ(w.w_s[2], 1.0);
  EXPECT_NEAR(w.w_s[3], 0.367879, 1e-6);
  for (double t : w.w_t) EXPECT_EQ(t, 1.0);
  EXPECT_THROW(diffusion_weights(index, zero, 0.0, 0.1), Error);
}

TEST(Diffuse, TwoEventHandCase) {
  const auto s = make_stream({{0, 0, 0.5}, {0, 0, 0.5}});
  const auto index = build_neighbor_index(s, 1);
  const auto w = diffusion_weights(index, event_velocity(s), 0.01, 0.1);
  ASSERT_EQ(w.w_s[0], 1.0);
  ASSERT_EQ(w.w_t[0], 1.0);
  Perturbation p = Perturbation::zeros(2);
  p.delta[0] = {1.0, 0.0, 0.0};
  const auto out = diffuse(p, index, w);
  for (int i = 0; i < 2; ++i) {
    EXPECT_DOUBLE_EQ(out.delta[i][0], 0.5);
    EXPECT_DOUBLE_EQ(out.delta[i][1], 0.0);
    EXPECT_DOUBLE_EQ(out.delta[i][2], 0.0);
  }
}

TEST(Diffuse, ZeroStaysZero) {
  const auto s = random_unit_stream(50, 2);
  const auto index = build_neighbor_index(s, 10);
  const auto w = diffusion_weights(index, event_velocity(s), 0.01, 0.1);
  const auto out = diffuse(Perturbation::zeros(50), index, w);
  for (const auto& row : out.delta) {
    for (double v : row) EXPECT_EQ(v, 0.0);
  }
}

TEST(Diffuse, ModesUseTheirBranchOnly) {
  const auto s = random_unit_stream(30, 12);
  const auto index = build_neighbor_index(s, 4);
  const auto w = diffusion_weights(index, event_velocity(s), 0.05, 0.1);
  std::mt19937_64 rng(1);
  const auto p = Perturbation::gaussian(30, 0.1, rng);
  const auto both = diffuse(p, index, w, DiffusionMode::Both);
  const auto sp = diffuse(p, index, w, DiffusionMode::SpatialOnly);
  const auto tm = diffuse(p, index, w, DiffusionMode::TemporalOnly);
  for (std::size_t i = 0; i < 30; ++i) {
    for (int d = 0; d < 3; ++d) EXPECT_NEAR(both.delta[i][d], 0.5 * (sp.delta[i][d] + tm.delta[i][d]), 1e-15);
  }
}

TEST(Diffuse, SizeMismatchThrows) {
  const auto s = random_unit_stream(10, 2);
  const auto index = build_neighbor_index(s, 3);
  const auto w = diffusion_weights(index, event_velocity(s), 0.01, 0.1);
  EXPECT_THROW(diffuse(Perturbation::zeros(9), index, w), Error);
}

TEST(Perturbation, GaussianDeterministic) {
  std::mt19937_64 a(5), b(5);
  EXPECT_EQ(Perturbation::gaussian(20, 1e-3, a), Perturbation::gaussian(20, 1e-3, b));
  std::mt19937_64 c(5);
  EXPECT_EQ(Perturbation::gaussian(20, 0.0, c), Perturbation::zeros(20));
}
