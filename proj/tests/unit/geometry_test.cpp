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

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "sifuse/geometry.hpp"
#include "sifuse/robustness.hpp"
#include "support/generators.hpp"

namespace sifuse {
namespace {

CalibratedCamera identity_camera() {
  CalibratedCamera cam;
  cam.fx = cam.fy = 100.0;
  cam.cx = 40.0;
  cam.cy = 30.0;
  cam.width = 80;
  cam.height = 60;
  return cam;
}

TEST(Project, OpticalAxisHitsPrincipalPoint) {
  const auto pr = project(identity_camera(), {0, 0, 5});
  EXPECT_EQ(pr.u, 40.0);
  EXPECT_EQ(pr.v, 30.0);
  EXPECT_EQ(pr.depth, 5.0);
  EXPECT_TRUE(pr.in_front);
}

TEST(Project, BehindCamera) {
  EXPECT_FALSE(project(identity_camera(), {0, 0, -1}).in_front);
  EXPECT_FALSE(project(identity_camera(), {1, 1, 0}).in_front);
}

TEST(Project, OffAxisPinhole) { EXPECT_DOUBLE_EQ(project(identity_camera(), {1, 0, 5}).u, 60.0); }

TEST(Project, UnprojectRoundTrip) {
  SeededRng rng(3);
  for (int n = 0; n < 200; ++n) {
    const auto cam = gen::random_camera(rng, 32, 48);
    const double u = rng.uniform(-10, 60), v = rng.uniform(-10, 40), d = rng.uniform(0.1, 80);
    const auto pr = project(cam, unproject(cam, u, v, d));
    ASSERT_TRUE(pr.in_front);
    EXPECT_NEAR(pr.u, u, 1e-9);
    EXPECT_NEAR(pr.v, v, 1e-9);
    EXPECT_NEAR(pr.depth, d, 1e-9);
  }
}

TEST(Camera, ValidateRejectsBadInputs) {
  auto cam = identity_camera();
  cam.fx = 0.0;
  EXPECT_THROW(cam.validate(), DomainError);
  cam = identity_camera();
  cam.rotation[0] = 2.0;
  EXPECT_THROW(cam.validate(), DomainError);
  cam = identity_camera();
  cam.rotation = {-1, 0, 0, 0, 1, 0, 0, 0, 1};  // reflection
  EXPECT_THROW(cam.validate(), DomainError);
}

TEST(VirtualPoints, UnitCube) {
  VoxelGrid g{0, 1, 0, 1, 0, 1, 1.0};
  const auto pts = virtual_points(g);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0], (Vec3{0.5, 0.5, 0.5}));
}

TEST(VirtualPoints, DefaultGridCount) {
  const VoxelGrid g = VoxelGrid::vod();
  EXPECT_EQ(g.nx(), 320u);
  EXPECT_EQ(g.ny(), 320u);
  EXPECT_EQ(g.nz(), 36u);
}

TEST(VirtualPoints, TwoCellsAlongX) {
  VoxelGrid g{0, 2, 0, 1, 0, 1, 1.0};
  const auto pts = virtual_points(g);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0][0], 0.5);
  EXPECT_EQ(pts[1][0], 1.5);
}

TEST(VirtualPoints, StrictlyInsideOwnVoxel) {
  const auto g = gen::small_grid(0.7, 5, 4, 3);
  const auto pts = virtual_points(g);
  ASSERT_EQ(pts.size(), 5u * 4u * 3u);
  std::size_t n = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      for (std::size_t k = 0; k < 3; ++k, ++n) {
        const auto& p = pts[n];
        EXPECT_GT(p[0], g.x_min + 0.7 * static_cast<double>(i));
        EXPECT_LT(p[0], g.x_min + 0.7 * static_cast<double>(i + 1));
        EXPECT_GT(p[1], g.y_min + 0.7 * static_cast<double>(j));
        EXPECT_LT(p[1], g.y_min + 0.7 * static_cast<double>(j + 1));
        EXPECT_GT(p[2], g.z_min + 0.7 * static_cast<double>(k));
        EXPECT_LT(p[2], g.z_min + 0.7 * static_cast<double>(k + 1));
      }
    }
  }
}

TEST(VoxelGrid, InvalidGridThrows) {
  VoxelGrid g;
  g.voxel_size = 0.0;
  EXPECT_THROW(virtual_points(g), DomainError);
}

TEST(DepthToBin, ExactAtCenters) {
  const DepthBinning b{2.0, 58.0, 14};
  for (std::size_t k = 0; k + 1 < b.bins; ++k) {
    const auto pos = depth_to_bin(b, b.center(k));
    EXPECT_EQ(pos.lower, k);
    EXPECT_EQ(pos.weight, 0.0);
    EXPECT_FALSE(pos.out_of_range);
  }
}

TEST(DepthToBin, MidwayBetweenCenters) {
  const DepthBinning b{2.0, 58.0, 14};
  const auto pos = depth_to_bin(b, 0.5 * (b.center(3) + b.center(4)));
  EXPECT_EQ(pos.lower, 3u);
  EXPECT_DOUBLE_EQ(pos.weight, 0.5);
}

TEST(DepthToBin, BelowRangeFlagged) {
  const DepthBinning b{2.0, 58.0, 14};
  EXPECT_TRUE(depth_to_bin(b, 1.0).out_of_range);
  EXPECT_TRUE(depth_to_bin(b, 60.0).out_of_range);
  EXPECT_FALSE(depth_to_bin(b, 2.0).out_of_range);
}

TEST(DepthToBin, Monotone) {
  const DepthBinning b{2.0, 58.0, 14};
  double prev = -1.0;
  for (double d = 0.0; d < 60.0; d += 0.01) {
    const auto pos = depth_to_bin(b, d);
    const double coord = static_cast<double>(pos.lower) + pos.weight;
    EXPECT_GE(coord, prev);
    prev = coord;
  }
}

TEST(PerturbCalibration, ZeroBoundsIsIdentity) {
  SeededRng rng(5);
  const auto cam = gen::random_camera(rng, 32, 48);
  EXPECT_EQ(perturb_calibration(cam, rng, 0.0, 0.0), cam);
}

TEST(PerturbCalibration, StaysOrthonormal) {
  SeededRng rng(6);
  for (int n = 0; n < 100; ++n) {
    const auto cam = perturb_calibration(forward_camera(32, 48), rng, 20.0, 1.5);
    EXPECT_LT(orthonormality_error(cam.rotation), 1e-9);
    EXPECT_NO_THROW(cam.validate());
  }
}

TEST(PerturbCalibration, YawShiftMatchesSmallAngleGeometry) {
  // Rotating the camera about its own vertical axis by delta moves an
  // optical-axis point by fx * tan(delta) horizontally.
  auto cam = identity_camera();
  const double delta = 0.02;
  CalibratedCamera rotated = cam;
  rotated.rotation = axis_angle_rotation({0, 1, 0}, delta);
  const auto a = project(cam, {0, 0, 10}), b = project(rotated, {0, 0, 10});
  EXPECT_NEAR(std::abs(b.u - a.u), cam.fx * std::tan(delta), 1e-9);
}

TEST(PerturbCalibration, NegativeBoundThrows) {
  SeededRng rng(7);
  EXPECT_THROW(perturb_calibration(forward_camera(8, 8), rng, -1.0, 0.0), DomainError);
}

TEST(PerturbCalibration, LargerBoundGivesLargerReprojectionError) {
  SeededRng rng(8);
  auto scene_rng = rng.fork(1);
  SceneSpec spec;
  spec.num_boxes = 3;
  const auto scene = generate_scene(scene_rng, spec, forward_camera(32, 48), VoxelGrid::vod());
  double small = 0.0, large = 0.0;
  std::size_t ns = 0, nl = 0;
  for (int trial = 0; trial < 20; ++trial) {
    // Same draws for both bounds.
    SeededRng a(100 + static_cast<std::uint64_t>(trial)), b(100 + static_cast<std::uint64_t>(trial));
    const auto [es, ks] = reprojection_error(scene, scene.camera, perturb_calibration(scene.camera, a, 2.0, 0.2));
    const auto [el, kl] = reprojection_error(scene, scene.camera, perturb_calibration(scene.camera, b, 20.0, 1.5));
    small += es;
    ns += ks;
    large += el;
    nl += kl;
  }
  ASSERT_GT(ns, 0u);
  ASSERT_GT(nl, 0u);
  EXPECT_GT(large / static_cast<double>(nl), small / static_cast<double>(ns));
}

TEST(Rotation, AxisAngleIsProper) {
  const auto r = axis_angle_rotation({0, 0, 1}, std::numbers::pi / 2.0);
  const auto p = mul(r, Vec3{1, 0, 0});
  EXPECT_NEAR(p[0], 0.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0, 1e-15);
  EXPECT_NEAR(determinant(r), 1.0, 1e-15);
}

}  // namespace
}  // namespace sifuse
