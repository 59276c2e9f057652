/* Copyright 2026 The sifuse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include "sifuse/iea.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

namespace sifuse {
namespace {

// Identity extrinsics: camera depth equals the grid z coordinate.
CalibratedCamera axis_camera() {
  CalibratedCamera cam;
  cam.fx = cam.fy = 3.0;
  cam.cx = cam.cy = 2.0;
  cam.width = cam.height = 5;
  return cam;
}

struct SemCase {
  CalibratedCamera cam = forward_camera(8, 10);
  VoxelGrid grid = gen::small_grid(1.0, 4, 4, 3, 2.0);
  DepthBinning bins{2.0, 8.0, 6};
  FeatureGrid act, depth, ctx;
  DeformConfig cfg;

  explicit SemCase(std::uint64_t seed) {
    SeededRng rng(seed);
    act = gen::random_grid(rng, 4, 4, 3);
    depth = gen::random_depth(rng, 8, 10, 6);
    ctx = gen::random_grid(rng, 8, 10, 3);
    cfg = DeformConfig::seeded(3, rng.fork(1));
  }
};

TEST(Sem, ZeroContextGivesZero) {
  SemCase c(1);
  c.ctx = FeatureGrid::zeros({{"H", 8}, {"W", 10}, {"C", 3}});
  EXPECT_TRUE(sem_forward(c.act, c.depth, c.ctx, c.cam, c.grid, c.bins, c.cfg).all_zero());
}

TEST(Sem, ZeroDepthGivesZero) {
  SemCase c(2);
  c.depth = FeatureGrid::zeros({{"H", 8}, {"W", 10}, {"D", 6}});
  EXPECT_TRUE(sem_forward(c.act, c.depth, c.ctx, c.cam, c.grid, c.bins, c.cfg).all_zero());
}

TEST(Sem, NonTrivialOnRandomInputs) {
  SemCase c(3);
  EXPECT_GT(sem_forward(c.act, c.depth, c.ctx, c.cam, c.grid, c.bins, c.cfg).count_nonzero(), 0u);
}

TEST(Sem, SingleSampleHandCase) {
  // One level, one point, zero offsets: the sample sits on pixel (2, 2) at
  // depth 4, halfway between bin centers 3.5 and 4.5.
  const auto cam = axis_camera();
  const VoxelGrid grid{-0.5, 0.5, -0.5, 0.5, 1.0, 7.0, 1.0};
  const DepthBinning bins{1.0, 7.0, 6};
  SeededRng rng(4);
  const auto act = gen::random_grid(rng, 1, 1, 3);
  const auto ctx = gen::random_grid(rng, 5, 5, 3);
  const auto depth = gen::random_depth(rng, 5, 5, 6);
  auto cfg = DeformConfig::seeded(3, rng.fork(1), 1, 1);
  cfg.offsets = Dense::zeros(2, 3);
  const auto out = sem_forward(act, depth, ctx, cam, grid, bins, cfg);
  const double prob = 0.5 * (depth(2, 2, 2) + depth(2, 2, 3));
  std::vector<double> acc(3);
  for (std::size_t k = 0; k < 3; ++k) acc[k] = prob * ctx(2, 2, k);
  const auto y = oracle::matvec(cfg.output, acc);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(out(0, 0, k), y[k], 1e-12);
}

TEST(Sem, ChannelMismatchThrows) {
  SemCase c(5);
  EXPECT_THROW(sem_forward(c.act, c.depth, FeatureGrid::zeros({{"H", 8}, {"W", 10}, {"C", 2}}), c.cam, c.grid, c.bins,
                           c.cfg),
               ShapeError);
}

TEST(Gem, ZeroRadarGivesZero) {
  SeededRng rng(6);
  const auto act = gen::random_grid(rng, 6, 5, 3);
  const auto cfg = NeighborhoodConfig::seeded(3, rng.fork(1));
  EXPECT_TRUE(gem_forward(act, FeatureGrid::zeros({{"X", 6}, {"Y", 5}, {"C", 3}}), cfg).all_zero());
}

TEST(Gem, RadiusZeroIsPerCellProjection) {
  SeededRng rng(7);
  const auto act = gen::random_grid(rng, 4, 4, 3), radar = gen::random_grid(rng, 4, 4, 3);
  const auto cfg = NeighborhoodConfig::seeded(3, rng.fork(1), 0, 1);
  const auto out = gem_forward(act, radar, cfg);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const auto cell = radar.cell(i, j);
      const auto y = oracle::matvec(cfg.output, oracle::matvec(cfg.value, {cell.begin(), cell.end()}));
      for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(out(i, j, k), y[k], 1e-12);
    }
  }
}

TEST(Gem, OutputDependsOnlyOnReceptiveField) {
  SeededRng rng(8);
  const auto act = gen::random_grid(rng, 8, 8, 3), radar = gen::random_grid(rng, 8, 8, 3);
  const auto cfg = NeighborhoodConfig::seeded(3, rng.fork(1));
  const auto base = gem_forward(act, radar, cfg);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t pi = rng.index(8), pj = rng.index(8);
    auto moved = radar;
    moved(pi, pj, rng.index(3)) += 1.0;
    const auto out = gem_forward(act, moved, cfg);
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t j = 0; j < 8; ++j) {
        if (cfg.in_receptive_field(i, j, pi, pj)) continue;
        for (std::size_t k = 0; k < 3; ++k) ASSERT_EQ(out(i, j, k), base(i, j, k));
      }
    }
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NE(out(pi, pj, k), base(pi, pj, k));
  }
}

TEST(Gem, ShapeMismatchThrows) {
  const auto cfg = NeighborhoodConfig::seeded(3, SeededRng(9));
  EXPECT_THROW(gem_forward(FeatureGrid::zeros({{"X", 2}, {"Y", 2}, {"C", 3}}),
                           FeatureGrid::zeros({{"X", 3}, {"Y", 2}, {"C", 3}}), cfg),
               ShapeError);
}

TEST(AveragePool, PartialBlocks) {
  FeatureGrid g = FeatureGrid::zeros({{"X", 3}, {"Y", 1}, {"C", 1}});
  g(0, 0, 0) = 1.0;
  g(1, 0, 0) = 3.0;
  g(2, 0, 0) = 7.0;
  const auto p = average_pool(g, 1);
  EXPECT_EQ(p(0, 0, 0), 2.0);
  EXPECT_EQ(p(1, 0, 0), 7.0);
}

TEST(Iea, SumOfBranches) {
  SemCase c(10);
  SeededRng rng(11);
  const auto radar = gen::random_grid(rng, 4, 4, 3);
  const IeaWeights w{c.cfg, NeighborhoodConfig::seeded(3, rng.fork(1))};
  const auto sem = sem_forward(c.act, c.depth, c.ctx, c.cam, c.grid, c.bins, w.sem);
  const auto gem = gem_forward(c.act, radar, w.gem);
  const auto both = iea_forward(c.act, c.depth, c.ctx, radar, c.cam, c.grid, c.bins, w);
  for (std::size_t n = 0; n < both.size(); ++n) EXPECT_NEAR(both.values()[n], sem.values()[n] + gem.values()[n], 1e-12);
  EXPECT_EQ(iea_forward(c.act, c.depth, c.ctx, radar, c.cam, c.grid, c.bins, w, true, false), sem);
  EXPECT_EQ(iea_forward(c.act, c.depth, c.ctx, radar, c.cam, c.grid, c.bins, w, false, true), gem);
  EXPECT_TRUE(iea_forward(c.act, c.depth, c.ctx, radar, c.cam, c.grid, c.bins, w, false, false).all_zero());
}

}  // namespace
}  // namespace sifuse
