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

#include "sifuse/view_transform.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

namespace sifuse {
namespace {

FeatureGrid pixel_distribution(std::vector<double> v) {
  FeatureGrid g = FeatureGrid::zeros({{"H", 1}, {"W", 1}, {"D", v.size()}});
  std::copy(v.begin(), v.end(), g.data().begin());
  return g;
}

std::vector<double> cell_values(const FeatureGrid& g) { return {g.data().begin(), g.data().end()}; }

TEST(Sgw, AllOnesIsIdentity) {
  SeededRng rng(1);
  const auto ctx = gen::random_grid(rng, 4, 5, 3);
  FeatureGrid m = FeatureGrid::zeros({{"H", 4}, {"W", 5}});
  for (auto& v : m.data()) v = 1.0;
  EXPECT_EQ(ssi_sgw(ctx, m), ctx);
}

TEST(Sgw, AllZerosAndSinglePixel) {
  SeededRng rng(2);
  const auto ctx = gen::random_grid(rng, 4, 5, 3, 0.5, 1.0);
  FeatureGrid m = FeatureGrid::zeros({{"H", 4}, {"W", 5}});
  EXPECT_TRUE(ssi_sgw(ctx, m).all_zero());
  m(2, 3) = 1.0;
  const auto out = ssi_sgw(ctx, m);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 5; ++c)
      for (double v : out.cell(r, c)) EXPECT_EQ(v != 0.0, r == 2 && c == 3);
}

TEST(Sgw, ShapeMismatchThrows) {
  EXPECT_THROW(ssi_sgw(FeatureGrid::zeros({{"H", 2}, {"W", 2}, {"C", 1}}), FeatureGrid::zeros({{"H", 3}, {"W", 2}})),
               ShapeError);
}

TEST(Dgw, TopTwoOfFour) {
  SSIConfig cfg;
  cfg.keep_fraction = 0.5;
  EXPECT_EQ(cell_values(ssi_dgw(pixel_distribution({0.1, 0.2, 0.3, 0.4}), cfg)), (std::vector<double>{0, 0, 0, 1}));
}

TEST(Dgw, UniformTieBreaksToLowIndex) {
  SSIConfig cfg;
  cfg.keep_fraction = 0.5;
  EXPECT_EQ(cell_values(ssi_dgw(pixel_distribution({0.25, 0.25, 0.25, 0.25}), cfg)), (std::vector<double>{1, 1, 0, 0}));
}

TEST(Dgw, KeepAllIsMinmax) {
  SSIConfig cfg;
  cfg.keep_fraction = 1.0;
  const std::vector<double> v = {0.1, 0.5, 0.2, 0.2};
  EXPECT_EQ(cell_values(ssi_dgw(pixel_distribution(v), cfg)), minmax_normalize(v));
}

TEST(Dgw, KeepCount) {
  SSIConfig cfg;
  EXPECT_EQ(cfg.keep_count(14), 4u);
  EXPECT_EQ(cfg.keep_count(56), 14u);
  EXPECT_EQ(cfg.keep_count(4), 1u);
  cfg.keep_fraction = 0.0;
  EXPECT_THROW(cfg.keep_count(4), DomainError);
}

TEST(LiftSplat, ZeroDepthGivesZero) {
  SeededRng rng(3);
  const auto cam = gen::random_camera(rng, 8, 8);
  const auto ctx = gen::random_grid(rng, 8, 8, 4);
  const auto depth = FeatureGrid::zeros({{"H", 8}, {"W", 8}, {"D", 6}});
  EXPECT_TRUE(lift_splat_pool(ctx, depth, cam, gen::small_grid(0.8, 12, 12, 5), {2.0, 11.0, 6}).all_zero());
}

TEST(LiftSplat, SingleRayLandsInOneCell) {
  const auto cam = forward_camera(8, 8);
  const auto grid = gen::small_grid(0.8, 12, 12, 5);
  const DepthBinning bins{2.0, 11.0, 6};
  FeatureGrid ctx = FeatureGrid::zeros({{"H", 8}, {"W", 8}, {"C", 3}});
  FeatureGrid depth = FeatureGrid::zeros({{"H", 8}, {"W", 8}, {"D", 6}});
  ctx(3, 4, 0) = 1.0;
  depth(3, 4, 2) = 1.0;
  const auto bev = lift_splat_pool(ctx, depth, cam, grid, bins);
  const auto p = unproject(cam, 4.0, 3.0, bins.center(2));
  const auto cell = grid.bev_cell(p[0], p[1]);
  ASSERT_TRUE(cell.has_value());
  EXPECT_EQ(bev.count_nonzero(), 1u);
  EXPECT_EQ(bev((*cell)[0], (*cell)[1], 0), 1.0);
}

TEST(LiftSplat, MatchesTripleLoop) {
  SeededRng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cam = gen::random_camera(rng, 8, 8);
    const auto grid = gen::small_grid(0.8, 12, 12, 5);
    const DepthBinning bins{2.0, 11.0, 6};
    const auto ctx = gen::random_grid(rng, 8, 8, 4);
    const auto depth = gen::random_depth(rng, 8, 8, 6);
    const auto bev = lift_splat_pool(ctx, depth, cam, grid, bins);
    const auto ref = oracle::lift_splat(ctx, depth, cam, grid, bins);
    for (std::size_t n = 0; n < ref.v.size(); ++n) ASSERT_NEAR(bev.values()[n], ref.v[n], 1e-9);
  }
}

TEST(LiftSplat, ShapeMismatchThrows) {
  const auto cam = forward_camera(8, 8);
  EXPECT_THROW(lift_splat_pool(FeatureGrid::zeros({{"H", 8}, {"W", 8}, {"C", 2}}),
                               FeatureGrid::zeros({{"H", 8}, {"W", 8}, {"D", 5}}), cam, gen::small_grid(1, 2, 2, 2),
                               {2.0, 11.0, 6}),
               ShapeError);
}

TEST(SampleVirtual, BehindCameraIsZero) {
  // Camera looks along +x; the grid sits behind it.
  const auto cam = forward_camera(8, 8);
  VoxelGrid grid = gen::small_grid(0.5, 4, 4, 3, -10.0);
  SeededRng rng(5);
  const auto vol = sample_virtual_volume(gen::random_grid(rng, 8, 8, 3), gen::random_depth(rng, 8, 8, 6), cam, grid,
                                         {2.0, 11.0, 6});
  EXPECT_TRUE(vol.all_zero());
}

TEST(SampleVirtual, PixelAndBinCenterReadsStoredProbability) {
  CalibratedCamera cam;  // identity extrinsics: radar frame = camera frame
  cam.fx = cam.fy = 3.0;
  cam.cx = cam.cy = 2.0;
  cam.width = cam.height = 5;
  VoxelGrid grid{-0.5, 0.5, -0.5, 0.5, 1.0, 7.0, 1.0};  // z centers 1.5 ... 6.5
  const DepthBinning bins{1.0, 7.0, 6};                 // same centers
  SeededRng rng(6);
  const auto f2d = gen::random_grid(rng, 5, 5, 3);
  const auto depth = gen::random_depth(rng, 5, 5, 6);
  const auto vol = sample_virtual_volume(f2d, depth, cam, grid, bins);
  for (std::size_t k = 0; k < 6; ++k)
    for (std::size_t q = 0; q < 3; ++q) EXPECT_DOUBLE_EQ(vol(0, 0, k, q), depth(2, 2, k) * f2d(2, 2, q));
}

TEST(SampleVirtual, VolumeMatchesPerVoxelOracle) {
  SeededRng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cam = gen::random_camera(rng, 8, 10);
    const auto grid = gen::small_grid(1.2, 4, 4, 3, 2.0);
    const DepthBinning bins{2.0, 8.0, 6};
    const auto f2d = gen::random_grid(rng, 8, 10, 3);
    const auto depth = gen::random_depth(rng, 8, 10, 6);
    const auto vol = sample_virtual_volume(f2d, depth, cam, grid, bins);
    const auto ref = oracle::virtual_volume(f2d, depth, cam, grid, bins);
    std::size_t nonzero = 0;
    for (std::size_t n = 0; n < ref.size(); ++n) {
      ASSERT_NEAR(vol.values()[n], ref[n], 1e-9);
      nonzero += ref[n] != 0.0;
    }
    EXPECT_GT(nonzero, 0u);
  }
}

TEST(SampleVirtual, HeightCollapseUsesVolume) {
  SeededRng rng(8);
  const auto cam = gen::random_camera(rng, 8, 10);
  const auto grid = gen::small_grid(1.2, 4, 4, 3, 2.0);
  const DepthBinning bins{2.0, 8.0, 6};
  const auto f2d = gen::random_grid(rng, 8, 10, 3);
  const auto depth = gen::random_depth(rng, 8, 10, 6);
  auto mlp_rng = rng.fork(1);
  const Dense mlp = Dense::seeded(3, 9, mlp_rng);
  const auto vol = sample_virtual_volume(f2d, depth, cam, grid, bins);
  const auto bev = sample_virtual(f2d, depth, cam, grid, bins, mlp);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      std::vector<double> column(vol.data().begin() + static_cast<long>((i * 4 + j) * 9),
                                 vol.data().begin() + static_cast<long>((i * 4 + j + 1) * 9));
      const auto y = oracle::matvec(mlp, column);
      for (std::size_t q = 0; q < 3; ++q) EXPECT_NEAR(bev(i, j, q), y[q], 1e-12);
    }
  }
  EXPECT_THROW(sample_virtual(f2d, depth, cam, grid, bins, Dense::zeros(3, 8)), ShapeError);
}

TEST(Fusion, ZeroInZeroOut) {
  const auto grid = gen::small_grid(1.0, 3, 3, 2);
  const auto z = grid.bev_grid(4);
  const Dense f = seeded_fusion(4, SeededRng(1), 1.0, 1.0, 1.0);
  const auto out = fuse_rc_bev(z, z, z, f);
  EXPECT_TRUE(out.all_zero());
  EXPECT_EQ(out.dim(2), 4u);
}

TEST(Fusion, NotSymmetricInImageInputs) {
  SeededRng rng(9);
  const auto a = gen::random_grid(rng, 3, 3, 4), b = gen::random_grid(rng, 3, 3, 4), r = gen::random_grid(rng, 3, 3, 4);
  const Dense f = seeded_fusion(4, SeededRng(2), 1.0, 1.0, 1.0);
  EXPECT_NE(fuse_rc_bev(a, b, r, f), fuse_rc_bev(b, a, r, f));
}

TEST(Fusion, BlockGainsScaleColumns) {
  const Dense base = seeded_fusion(3, SeededRng(3), 1.0, 1.0, 1.0);
  const Dense scaled = seeded_fusion(3, SeededRng(3), 0.5, 2.0, 4.0);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_DOUBLE_EQ(scaled.at(r, c), 0.5 * base.at(r, c));
      EXPECT_DOUBLE_EQ(scaled.at(r, 3 + c), 2.0 * base.at(r, 3 + c));
      EXPECT_DOUBLE_EQ(scaled.at(r, 6 + c), 4.0 * base.at(r, 6 + c));
    }
  }
}

TEST(DepthHeads, RadarReturnVotesForItsBin) {
  const DepthBinning bins{2.0, 16.0, 14};
  const auto heads = DepthContextHeads::seeded(16, bins, {}, SeededRng(4));
  const auto f2d = FeatureGrid::zeros({{"H", 2}, {"W", 2}, {"C", 16}});
  FeatureGrid s = FeatureGrid::zeros({{"H", 2}, {"W", 2}});
  s(1, 1) = 9.3;
  const auto p = depth_probabilities(heads.depth_logits(f2d, s));
  const auto cell = p.cell(1, 1);
  EXPECT_EQ(static_cast<std::size_t>(std::max_element(cell.begin(), cell.end()) - cell.begin()), bins.bin_index(9.3));
  double sum = 0.0;
  for (double v : p.cell(0, 0)) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-15);
}

TEST(ImageFeatures, TooFewChannelsRejected) {
  EXPECT_THROW(ImageFeatureLayout{6}.validate(), ConfigError);
}

}  // namespace
}  // namespace sifuse
