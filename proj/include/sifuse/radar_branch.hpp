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

#ifndef SIFUSE_RADAR_BRANCH_HPP_
#define SIFUSE_RADAR_BRANCH_HPP_

#include <cmath>
#include <limits>
#include <vector>

#include "sifuse/geometry.hpp"
#include "sifuse/numerics.hpp"
#include "sifuse/scene_synth.hpp"

namespace sifuse {

// x, y, z, rcs, v_rc, and the offsets dx, dy, dz to the pillar center.
inline constexpr std::size_t kPillarRawFeatures = 8;

struct PillarConfig {
  VoxelGrid grid;
  std::size_t channels = 16;
  Dense point_map;  // channels x kPillarRawFeatures, with bias

  static PillarConfig seeded(const VoxelGrid& grid, std::size_t channels, SeededRng rng) {
    PillarConfig cfg{grid, channels, Dense::seeded(channels, kPillarRawFeatures, rng, 1.0, true)};
    for (auto& b : cfg.point_map.bias) b = rng.normal(0.0, 0.1);
    return cfg;
  }
};

inline std::array<double, kPillarRawFeatures> pillar_raw_feature(const RadarPoint& p, const VoxelGrid& grid,
                                                                 std::size_t i, std::size_t j) {
  const Vec3 c = grid.center(i, j, 0);
  const double zc = 0.5 * (grid.z_min + grid.z_max);
  // Scaled so every entry is O(1) on the default grids.
  return {p.x / 10.0, p.y / 10.0, p.z, p.rcs / 10.0, p.v_rc / 5.0,
          (p.x - c[0]) / grid.voxel_size, (p.y - c[1]) / grid.voxel_size, p.z - zc};
}

/// Per-point linear + ReLU feature, max-pooled per BEV pillar. Empty pillars
/// stay zero. This is R.
inline FeatureGrid pillar_encode(const RadarPointCloud& points, const PillarConfig& cfg) {
  cfg.grid.validate();
  FeatureGrid bev = cfg.grid.bev_grid(cfg.channels);
  std::vector<double> feat(cfg.channels);
  for (const auto& p : points) {
    const auto cell = cfg.grid.bev_cell(p.x, p.y);
    if (!cell) continue;
    const auto [i, j] = *cell;
    const auto raw = pillar_raw_feature(p, cfg.grid, i, j);
    cfg.point_map.apply(raw, feat);
    auto out = bev.cell(i, j);
    // ReLU output is >= 0, so max-pooling into a zero-initialized pillar is exact.
    for (std::size_t k = 0; k < cfg.channels; ++k) out[k] = std::max(out[k], std::max(feat[k], 0.0));
  }
  return bev;
}

/// Sparse radar depth S: each in-front point lands on its nearest pixel; the
/// smallest depth wins. Untouched pixels are 0.
inline FeatureGrid render_sparse_depth(const RadarPointCloud& points, const CalibratedCamera& cam, std::size_t height,
                                       std::size_t width) {
  FeatureGrid s = FeatureGrid::zeros({{"H", height}, {"W", width}});
  for (const auto& p : points) {
    const auto pr = project(cam, p.position());
    if (!pr.in_front) continue;
    const double col = std::round(pr.u), row = std::round(pr.v);
    if (col < 0.0 || row < 0.0 || col > static_cast<double>(width - 1) || row > static_cast<double>(height - 1)) {
      continue;
    }
    double& cell = s(static_cast<std::size_t>(row), static_cast<std::size_t>(col));
    if (cell == 0.0 || pr.depth < cell) cell = pr.depth;
  }
  return s;
}

}  // namespace sifuse

#endif  // SIFUSE_RADAR_BRANCH_HPP_
