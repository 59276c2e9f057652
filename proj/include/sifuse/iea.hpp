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

#ifndef SIFUSE_IEA_HPP_
#define SIFUSE_IEA_HPP_

#include <cmath>
#include <vector>

#include "sifuse/errors.hpp"
#include "sifuse/geometry.hpp"
#include "sifuse/numerics.hpp"
#include "sifuse/view_transform.hpp"

namespace sifuse {

/// Toy 3D deformable cross-attention settings for the semantic branch.
struct DeformConfig {
  std::size_t points = 4;   // P, samples per pillar level
  std::size_t levels = 4;   // Z_q, pillar levels per BEV query
  double offset_scale = 1.5;  // pixels per unit head output
  Dense offsets;            // (levels * points * 2) x C
  Dense attention;          // (levels * points) x C
  Dense output;             // C x C

  static DeformConfig seeded(std::size_t channels, SeededRng rng, std::size_t points = 4, std::size_t levels = 4) {
    DeformConfig cfg;
    cfg.points = points;
    cfg.levels = levels;
    cfg.offsets = Dense::seeded(levels * points * 2, channels, rng);
    cfg.attention = Dense::seeded(levels * points, channels, rng);
    cfg.output = Dense::seeded(channels, channels, rng);
    return cfg;
  }

  std::size_t samples() const { return points * levels; }

  double level_height(const VoxelGrid& grid, std::size_t l) const {
    return grid.z_min + (static_cast<double>(l) + 0.5) * (grid.z_max - grid.z_min) / static_cast<double>(levels);
  }
};

/// Softmax attention weights over all P * Z_q samples of one query.
inline std::vector<double> sem_attention_weights(std::span<const double> query, const DeformConfig& cfg) {
  auto w = cfg.attention(query);
  softmax_inplace(w);
  return w;
}

/// Semantic enhancement: each BEV query is lifted to Z_q pillar heights,
/// projected, displaced by P learned offsets per level, and aggregates
/// bilinear context scaled by the interpolated depth probability at the
/// replica's camera depth. Samples that land off-image or behind the camera
/// contribute a zero value but keep their softmax weight.
inline FeatureGrid sem_forward(const FeatureGrid& activated, const FeatureGrid& depth, const FeatureGrid& context,
                               const CalibratedCamera& cam, const VoxelGrid& grid, const DepthBinning& binning,
                               const DeformConfig& cfg) {
  require_rank(activated, 3, "sem_forward");
  require_rank(depth, 3, "sem_forward");
  require_rank(context, 3, "sem_forward");
  const std::size_t ch = activated.dim(2);
  if (context.dim(2) != ch || cfg.output.in != ch) throw ShapeError("sem_forward: channel mismatch");
  if (depth.dim(2) != binning.bins) throw ShapeError("sem_forward: depth bins mismatch");
  FeatureGrid out(activated.axes());
  std::vector<double> acc(ch), feat(ch), dist(binning.bins);
  for (std::size_t i = 0; i < activated.dim(0); ++i) {
    for (std::size_t j = 0; j < activated.dim(1); ++j) {
      auto q = activated.cell(i, j);
      const auto weights = sem_attention_weights(q, cfg);
      const auto offs = cfg.offsets(q);
      const Vec3 base = grid.center(i, j, 0);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t l = 0; l < cfg.levels; ++l) {
        const auto pr = project(cam, {base[0], base[1], cfg.level_height(grid, l)});
        if (!pr.in_front) continue;
        for (std::size_t p = 0; p < cfg.points; ++p) {
          const std::size_t s = l * cfg.points + p;
          const double u = pr.u + cfg.offset_scale * offs[2 * s];
          const double v = pr.v + cfg.offset_scale * offs[2 * s + 1];
          bilinear_sample_into(context, u, v, feat);
          bilinear_sample_into(depth, u, v, dist);
          const double prob = interpolate_depth_probability(dist, binning, pr.depth);
          const double wgt = weights[s] * prob;
          if (wgt == 0.0) continue;
          for (std::size_t k = 0; k < ch; ++k) acc[k] += wgt * feat[k];
        }
      }
      cfg.output.apply(acc, out.cell(i, j));
    }
  }
  return out;
}

/// Toy U-Net + neighborhood cross-attention settings for the geometric branch.
struct NeighborhoodConfig {
  int radius = 1;
  std::size_t scales = 2;
  Dense query, key, value, output;  // C x C each

  static NeighborhoodConfig seeded(std::size_t channels, SeededRng rng, int radius = 1, std::size_t scales = 2) {
    NeighborhoodConfig cfg;
    cfg.radius = radius;
    cfg.scales = scales;
    cfg.query = Dense::seeded(channels, channels, rng);
    cfg.key = Dense::seeded(channels, channels, rng);
    cfg.value = Dense::seeded(channels, channels, rng);
    cfg.output = Dense::seeded(channels, channels, rng);
    return cfg;
  }

  // Whether BEV cell (i, j) can influence the query at (qi, qj) at any scale.
  bool in_receptive_field(std::size_t qi, std::size_t qj, std::size_t i, std::size_t j) const {
    for (std::size_t s = 0; s < scales; ++s) {
      const long di = static_cast<long>(i >> s) - static_cast<long>(qi >> s);
      const long dj = static_cast<long>(j >> s) - static_cast<long>(qj >> s);
      if (std::abs(di) <= radius && std::abs(dj) <= radius) return true;
    }
    return false;
  }
};

// Average pooling by 2^s; partial border blocks average the cells they have.
inline FeatureGrid average_pool(const FeatureGrid& g, std::size_t s) {
  if (s == 0) return g;
  const std::size_t f = std::size_t{1} << s;
  const std::size_t nx = (g.dim(0) + f - 1) / f, ny = (g.dim(1) + f - 1) / f, ch = g.dim(2);
  FeatureGrid out({Axis{"X", nx, std::nullopt}, Axis{"Y", ny, std::nullopt}, Axis{"C", ch, std::nullopt}});
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      auto o = out.cell(i, j);
      std::size_t n = 0;
      for (std::size_t a = i * f; a < std::min(g.dim(0), (i + 1) * f); ++a) {
        for (std::size_t b = j * f; b < std::min(g.dim(1), (j + 1) * f); ++b) {
          auto in = g.cell(a, b);
          for (std::size_t k = 0; k < ch; ++k) o[k] += in[k];
          ++n;
        }
      }
      for (auto& v : o) v /= static_cast<double>(n);
    }
  }
  return out;
}

/// Geometric enhancement: at each scale, activated-BEV queries attend to
/// radar-BEV keys inside a (2r+1)^2 window (zero-padded), results are
/// nearest-upsampled, summed over scales and projected.
inline FeatureGrid gem_forward(const FeatureGrid& activated, const FeatureGrid& radar_bev, const NeighborhoodConfig& cfg) {
  require_rank(activated, 3, "gem_forward");
  if (!activated.same_shape(radar_bev)) throw ShapeError("gem_forward: activated and radar BEV shapes differ");
  const std::size_t nx = activated.dim(0), ny = activated.dim(1), ch = activated.dim(2);
  const double scale = 1.0 / std::sqrt(static_cast<double>(ch));
  FeatureGrid sum(activated.axes());
  const int r = cfg.radius;
  const std::size_t window = static_cast<std::size_t>((2 * r + 1) * (2 * r + 1));
  std::vector<double> logits(window), att(ch);
  for (std::size_t s = 0; s < cfg.scales; ++s) {
    const FeatureGrid fa = average_pool(activated, s);
    const FeatureGrid rb = average_pool(radar_bev, s);
    const FeatureGrid q = apply_per_cell(fa, cfg.query, false);
    const FeatureGrid k = apply_per_cell(rb, cfg.key, false);
    const FeatureGrid v = apply_per_cell(rb, cfg.value, false);
    FeatureGrid attended(fa.axes());
    const long px = static_cast<long>(fa.dim(0)), py = static_cast<long>(fa.dim(1));
    for (long i = 0; i < px; ++i) {
      for (long j = 0; j < py; ++j) {
        auto qv = q.cell(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        std::size_t n = 0;
        for (int di = -r; di <= r; ++di) {
          for (int dj = -r; dj <= r; ++dj, ++n) {
            const long a = i + di, b = j + dj;
            const bool inside = a >= 0 && b >= 0 && a < px && b < py;
            logits[n] = inside ? dot(qv, k.cell(static_cast<std::size_t>(a), static_cast<std::size_t>(b))) * scale : 0.0;
          }
        }
        softmax_inplace(logits);
        std::fill(att.begin(), att.end(), 0.0);
        n = 0;
        for (int di = -r; di <= r; ++di) {
          for (int dj = -r; dj <= r; ++dj, ++n) {
            const long a = i + di, b = j + dj;
            if (a < 0 || b < 0 || a >= px || b >= py) continue;
            auto vv = v.cell(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
            for (std::size_t c = 0; c < ch; ++c) att[c] += logits[n] * vv[c];
          }
        }
        std::copy(att.begin(), att.end(), attended.cell(static_cast<std::size_t>(i), static_cast<std::size_t>(j)).begin());
      }
    }
    for (std::size_t i = 0; i < nx; ++i) {
      for (std::size_t j = 0; j < ny; ++j) {
        auto src = attended.cell(i >> s, j >> s);
        auto dst = sum.cell(i, j);
        for (std::size_t c = 0; c < ch; ++c) dst[c] += src[c];
      }
    }
  }
  return apply_per_cell(sum, cfg.output, false);
}

struct IeaWeights {
  DeformConfig sem;
  NeighborhoodConfig gem;
};

/// F_Final = SEM(F_act, D, C) + GEM(F_act, R). Either branch may be disabled
/// for ablations; a disabled branch contributes zero.
inline FeatureGrid iea_forward(const FeatureGrid& activated, const FeatureGrid& depth, const FeatureGrid& context,
                               const FeatureGrid& radar_bev, const CalibratedCamera& cam, const VoxelGrid& grid,
                               const DepthBinning& binning, const IeaWeights& weights, bool use_sem = true,
                               bool use_gem = true) {
  FeatureGrid out(activated.axes());
  if (use_sem) {
    const auto sem = sem_forward(activated, depth, context, cam, grid, binning, weights.sem);
    for (std::size_t n = 0; n < out.size(); ++n) out.values()[n] += sem.values()[n];
  }
  if (use_gem) {
    const auto gem = gem_forward(activated, radar_bev, weights.gem);
    for (std::size_t n = 0; n < out.size(); ++n) out.values()[n] += gem.values()[n];
  }
  return out;
}

}  // namespace sifuse

#endif  // SIFUSE_IEA_HPP_
