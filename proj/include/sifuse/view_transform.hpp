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

#ifndef SIFUSE_VIEW_TRANSFORM_HPP_
#define SIFUSE_VIEW_TRANSFORM_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "sifuse/errors.hpp"
#include "sifuse/geometry.hpp"
#include "sifuse/numerics.hpp"
#include "sifuse/scene_synth.hpp"

namespace sifuse {

// ---------------------------------------------------------------------------
// Toy image branch
//
// Stands in for a pretrained image backbone: F2D carries a foreground plane,
// class one-hot planes, a radial-basis code of (noisy) scene depth on object
// pixels, and spatially smoothed noise texture everywhere.
// ---------------------------------------------------------------------------

struct ImageFeatureLayout {
  std::size_t channels = 16;

  static constexpr std::size_t kForeground = 0;
  static constexpr std::size_t kClassBegin = 1;
  static constexpr std::size_t kDepthBegin = kClassBegin + kNumClasses;
  static constexpr std::size_t kMinChannels = kDepthBegin + 3;

  std::size_t depth_codes() const { return std::min<std::size_t>(8, channels - kDepthBegin); }
  std::size_t texture_begin() const { return kDepthBegin + depth_codes(); }

  void validate() const {
    if (channels < kMinChannels) {
      throw ConfigError("image features need at least " + std::to_string(kMinChannels) + " channels");
    }
  }
};

struct ImageFeatureParams {
  double depth_noise = 0.5;       // meters, per pixel
  double texture_gain = 1.0;
  double code_width = 0.75;       // basis width as a fraction of basis spacing

  friend bool operator==(const ImageFeatureParams&, const ImageFeatureParams&) = default;
};

struct DepthCode {
  std::vector<double> centers;
  double width = 1.0;

  static DepthCode make(const DepthBinning& binning, std::size_t count, double width_fraction) {
    DepthCode code;
    const double step = (binning.d_max - binning.d_min) / static_cast<double>(count);
    for (std::size_t j = 0; j < count; ++j) code.centers.push_back(binning.d_min + (static_cast<double>(j) + 0.5) * step);
    code.width = width_fraction * step;
    return code;
  }

  double basis(std::size_t j, double d) const {
    const double z = (d - centers[j]) / width;
    return std::exp(-0.5 * z * z);
  }
};

/// Synthetic F2D (H x W x C) for a scene.
inline FeatureGrid synthesize_image_features(const SceneTruth& scene, const DepthBinning& binning,
                                             std::size_t channels, const ImageFeatureParams& params, SeededRng rng) {
  const ImageFeatureLayout layout{channels};
  layout.validate();
  const std::size_t h = scene.gt_depth.dim(0), w = scene.gt_depth.dim(1);
  const auto code = DepthCode::make(binning, layout.depth_codes(), params.code_width);
  FeatureGrid f2d({Axis{"H", h, std::nullopt}, Axis{"W", w, std::nullopt}, Axis{"C", channels, std::nullopt}});

  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      auto f = f2d.cell(r, c);
      const double noise = rng.normal(0.0, params.depth_noise);
      const double jitter = rng.normal(0.0, 0.05);
      f[ImageFeatureLayout::kForeground] = scene.fg_mask(r, c) + jitter;
      if (scene.fg_mask(r, c) > 0.5) {
        const auto id = static_cast<std::size_t>(scene.instance_map(r, c));
        if (id >= 1 && id <= scene.boxes.size()) {
          f[ImageFeatureLayout::kClassBegin + static_cast<std::size_t>(scene.boxes[id - 1].cls)] = 1.0;
        }
        const double d = scene.gt_depth(r, c) + noise;
        for (std::size_t j = 0; j < code.centers.size(); ++j) f[ImageFeatureLayout::kDepthBegin + j] = code.basis(j, d);
      }
    }
  }

  // Texture: white noise through a 3x3 box filter.
  const std::size_t t0 = layout.texture_begin();
  if (t0 < channels) {
    const std::size_t nt = channels - t0;
    std::vector<double> white(h * w * nt);
    for (auto& v : white) v = rng.normal();
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        for (std::size_t k = 0; k < nt; ++k) {
          double acc = 0.0;
          for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
              const long rr = static_cast<long>(r) + dr, cc = static_cast<long>(c) + dc;
              if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) continue;
              acc += white[(static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc)) * nt + k];
            }
          }
          f2d(r, c, t0 + k) = params.texture_gain * acc / 3.0;
        }
      }
    }
  }
  return f2d;
}

/// Fixed context and depth heads.
///
/// context = W_ctx F2D; depth logits = W_feat F2D + W_radar onehot(bin(S)).
/// W_feat decodes the depth-code channels of the toy image features (plus
/// seeded noise over all channels); W_radar is a noisy scaled identity so a
/// radar return votes for its own bin.
struct DepthContextHeads {
  Dense context;
  Dense depth_from_image;
  Dense depth_from_radar;
  DepthBinning binning;

  static DepthContextHeads seeded(std::size_t channels, const DepthBinning& binning, const ImageFeatureParams& params,
                                  SeededRng rng, double decode_gain = 12.0, double radar_gain = 3.0) {
    const ImageFeatureLayout layout{channels};
    layout.validate();
    binning.validate();
    const std::size_t d = binning.bins;
    DepthContextHeads heads;
    heads.binning = binning;
    heads.context = Dense::seeded(channels, channels, rng);
    heads.depth_from_image = Dense::seeded(d, channels, rng, 0.1);
    const auto code = DepthCode::make(binning, layout.depth_codes(), params.code_width);
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t j = 0; j < code.centers.size(); ++j) {
        heads.depth_from_image.at(k, ImageFeatureLayout::kDepthBegin + j) += decode_gain * code.basis(j, binning.center(k));
      }
    }
    heads.depth_from_radar = Dense::seeded(d, d, rng, 0.1);
    for (std::size_t k = 0; k < d; ++k) heads.depth_from_radar.at(k, k) += radar_gain;
    return heads;
  }

  FeatureGrid context_map(const FeatureGrid& f2d) const { return apply_per_cell(f2d, context, false, "C"); }

  FeatureGrid depth_logits(const FeatureGrid& f2d, const FeatureGrid& sparse_depth) const {
    require_rank(f2d, 3, "depth_logits");
    require_rank(sparse_depth, 2, "depth_logits");
    if (f2d.dim(0) != sparse_depth.dim(0) || f2d.dim(1) != sparse_depth.dim(1)) {
      throw ShapeError("depth_logits: F2D and S spatial shapes differ");
    }
    FeatureGrid logits = apply_per_cell(f2d, depth_from_image, false, "D");
    const std::size_t d = binning.bins;
    for (std::size_t r = 0; r < f2d.dim(0); ++r) {
      for (std::size_t c = 0; c < f2d.dim(1); ++c) {
        const double s = sparse_depth(r, c);
        if (s <= 0.0 || s < binning.d_min || s > binning.d_max) continue;
        const std::size_t bin = binning.bin_index(s);
        auto out = logits.cell(r, c);
        for (std::size_t k = 0; k < d; ++k) out[k] += depth_from_radar.at(k, bin);
      }
    }
    return logits;
  }
};

/// Softmax over the trailing (depth) axis.
inline FeatureGrid depth_probabilities(const FeatureGrid& logits) {
  require_rank(logits, 3, "depth_probabilities");
  FeatureGrid p = logits;
  for (std::size_t r = 0; r < p.dim(0); ++r)
    for (std::size_t c = 0; c < p.dim(1); ++c) softmax_inplace(p.cell(r, c));
  return p;
}

/// Seeded toy foreground predictor: sigmoid(w . F2D + b), with w leaning on
/// the foreground plane.
struct MaskHead {
  Dense layer;  // 1 x C with bias

  static MaskHead seeded(std::size_t channels, SeededRng rng) {
    MaskHead head{Dense::seeded(1, channels, rng, 0.2, true)};
    head.layer.at(0, ImageFeatureLayout::kForeground) += 8.0;
    head.layer.bias[0] = -4.0;
    return head;
  }

  FeatureGrid predict(const FeatureGrid& f2d) const {
    require_rank(f2d, 3, "MaskHead::predict");
    FeatureGrid m = FeatureGrid::zeros({{"H", f2d.dim(0)}, {"W", f2d.dim(1)}});
    std::vector<double> y(1);
    for (std::size_t r = 0; r < f2d.dim(0); ++r) {
      for (std::size_t c = 0; c < f2d.dim(1); ++c) {
        layer.apply(f2d.cell(r, c), y);
        m(r, c) = sigmoid(y[0]);
      }
    }
    return m;
  }
};

// ---------------------------------------------------------------------------
// Sparse scene integration
// ---------------------------------------------------------------------------

enum class MaskSource { kOracle, kPredicted };

struct SSIConfig {
  double keep_fraction = 0.25;
  MaskSource mask_source = MaskSource::kOracle;

  std::size_t keep_count(std::size_t bins) const {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw DomainError("SSI keep fraction must be in (0, 1]");
    const auto k = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(bins) - 1e-9));
    return std::clamp<std::size_t>(k, 1, bins);
  }
};

/// Segmentation-guided weighting: context scaled per pixel by the mask.
inline FeatureGrid ssi_sgw(const FeatureGrid& context, const FeatureGrid& mask) {
  require_rank(context, 3, "ssi_sgw");
  require_rank(mask, 2, "ssi_sgw");
  if (context.dim(0) != mask.dim(0) || context.dim(1) != mask.dim(1)) {
    throw ShapeError("ssi_sgw: context and mask spatial shapes differ");
  }
  FeatureGrid out = context;
  for (std::size_t r = 0; r < out.dim(0); ++r) {
    for (std::size_t c = 0; c < out.dim(1); ++c) {
      const double m = mask(r, c);
      for (auto& v : out.cell(r, c)) v *= m;
    }
  }
  return out;
}

/// Depth-guided weighting: keep the K = ceil(rho * D) largest bins per pixel
/// (ties go to the smaller index), zero the rest, min-max normalize the kept
/// values.
inline FeatureGrid ssi_dgw(const FeatureGrid& depth, const SSIConfig& cfg) {
  require_rank(depth, 3, "ssi_dgw");
  const std::size_t d = depth.dim(2);
  const std::size_t k = cfg.keep_count(d);
  FeatureGrid out(depth.axes());
  std::vector<std::size_t> order(d);
  std::vector<double> kept(k);
  for (std::size_t r = 0; r < depth.dim(0); ++r) {
    for (std::size_t c = 0; c < depth.dim(1); ++c) {
      auto in = depth.cell(r, c);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return in[a] > in[b]; });
      for (std::size_t i = 0; i < k; ++i) kept[i] = in[order[i]];
      const auto norm = minmax_normalize(kept);
      auto o = out.cell(r, c);
      for (std::size_t i = 0; i < k; ++i) o[order[i]] = norm[i];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hybrid view transformation
// ---------------------------------------------------------------------------

/// Lift-splat: every (pixel, bin) places context * probability at the bin
/// center depth on the pixel ray; contributions are summed per BEV cell in
/// (row, column, bin) order. Points outside the voxel grid are dropped.
inline FeatureGrid lift_splat_pool(const FeatureGrid& context, const FeatureGrid& depth, const CalibratedCamera& cam,
                                   const VoxelGrid& grid, const DepthBinning& binning) {
  require_rank(context, 3, "lift_splat_pool");
  require_rank(depth, 3, "lift_splat_pool");
  if (context.dim(0) != depth.dim(0) || context.dim(1) != depth.dim(1) || depth.dim(2) != binning.bins) {
    throw ShapeError("lift_splat_pool: context/depth/binning mismatch");
  }
  grid.validate();
  const std::size_t ch = context.dim(2);
  FeatureGrid bev = grid.bev_grid(ch);
  for (std::size_t r = 0; r < context.dim(0); ++r) {
    for (std::size_t c = 0; c < context.dim(1); ++c) {
      auto ctx = context.cell(r, c);
      auto prob = depth.cell(r, c);
      for (std::size_t k = 0; k < binning.bins; ++k) {
        const double p = prob[k];
        if (p == 0.0) continue;
        const Vec3 pt = unproject(cam, static_cast<double>(c), static_cast<double>(r), binning.center(k));
        const auto vox = grid.voxel(pt);
        if (!vox) continue;
        auto out = bev.cell((*vox)[0], (*vox)[1]);
        for (std::size_t q = 0; q < ch; ++q) out[q] += p * ctx[q];
      }
    }
  }
  return bev;
}

/// Depth probability for camera depth `d` read from an already sampled
/// per-pixel distribution by linear interpolation between bin centers.
inline double interpolate_depth_probability(std::span<const double> dist, const DepthBinning& binning, double d) {
  const auto pos = depth_to_bin(binning, d);
  if (pos.out_of_range) return 0.0;
  return (1.0 - pos.weight) * dist[pos.lower] + pos.weight * dist[pos.lower + 1];
}

/// Fills `column` (Z * C, z-major) with the probability-weighted sampled
/// features of the virtual points above BEV cell (i, j).
inline void virtual_column(const FeatureGrid& f2d, const FeatureGrid& depth, const CalibratedCamera& cam,
                           const VoxelGrid& grid, const DepthBinning& binning, std::size_t i, std::size_t j,
                           std::span<double> column) {
  const std::size_t ch = f2d.dim(2);
  std::vector<double> feat(ch), dist(binning.bins);
  std::fill(column.begin(), column.end(), 0.0);
  for (std::size_t k = 0; k < grid.nz(); ++k) {
    const auto pr = project(cam, grid.center(i, j, k));
    if (!pr.in_front) continue;
    bilinear_sample_into(f2d, pr.u, pr.v, feat);
    bilinear_sample_into(depth, pr.u, pr.v, dist);
    const double p = interpolate_depth_probability(dist, binning, pr.depth);
    if (p == 0.0) continue;
    for (std::size_t q = 0; q < ch; ++q) column[k * ch + q] = p * feat[q];
  }
}

/// V * V_prob as an X x Y x Z x C volume (before the height collapse).
inline FeatureGrid sample_virtual_volume(const FeatureGrid& f2d, const FeatureGrid& depth, const CalibratedCamera& cam,
                                         const VoxelGrid& grid, const DepthBinning& binning) {
  require_rank(f2d, 3, "sample_virtual");
  require_rank(depth, 3, "sample_virtual");
  grid.validate();
  const std::size_t ch = f2d.dim(2), nz = grid.nz();
  FeatureGrid vol({Axis{"X", grid.nx(), std::make_pair(grid.x_min, grid.x_max)},
                   Axis{"Y", grid.ny(), std::make_pair(grid.y_min, grid.y_max)},
                   Axis{"Z", nz, std::make_pair(grid.z_min, grid.z_max)}, Axis{"C", ch, std::nullopt}});
  std::vector<double> column(nz * ch);
  for (std::size_t i = 0; i < grid.nx(); ++i) {
    for (std::size_t j = 0; j < grid.ny(); ++j) {
      virtual_column(f2d, depth, cam, grid, binning, i, j, column);
      std::copy(column.begin(), column.end(), vol.data().begin() + static_cast<long>((i * grid.ny() + j) * nz * ch));
    }
  }
  return vol;
}

/// Virtual-point sampling path: per voxel center, bilinear F2D feature times
/// the interpolated depth probability, then the Z * C -> C height collapse.
inline FeatureGrid sample_virtual(const FeatureGrid& f2d, const FeatureGrid& depth, const CalibratedCamera& cam,
                                  const VoxelGrid& grid, const DepthBinning& binning, const Dense& height_mlp) {
  require_rank(f2d, 3, "sample_virtual");
  require_rank(depth, 3, "sample_virtual");
  if (depth.dim(2) != binning.bins) throw ShapeError("sample_virtual: depth bins mismatch");
  grid.validate();
  const std::size_t ch = f2d.dim(2), nz = grid.nz();
  if (height_mlp.in != nz * ch) throw ShapeError("sample_virtual: height MLP expects Z*C inputs");
  FeatureGrid bev = grid.bev_grid(height_mlp.out);
  std::vector<double> column(nz * ch);
  for (std::size_t i = 0; i < grid.nx(); ++i) {
    for (std::size_t j = 0; j < grid.ny(); ++j) {
      virtual_column(f2d, depth, cam, grid, binning, i, j, column);
      height_mlp.apply(column, bev.cell(i, j));
    }
  }
  return bev;
}

/// Cross-modality fusion: ReLU(W [lss ; sampled ; R]) per cell, W is C x 3C
/// without bias.
inline FeatureGrid fuse_rc_bev(const FeatureGrid& img_bev_lss, const FeatureGrid& img_bev_sample,
                               const FeatureGrid& radar_bev, const Dense& fusion) {
  require_rank(img_bev_lss, 3, "fuse_rc_bev");
  if (!img_bev_lss.same_shape(img_bev_sample) || !img_bev_lss.same_shape(radar_bev)) {
    throw ShapeError("fuse_rc_bev: input shapes differ");
  }
  const std::size_t ch = img_bev_lss.dim(2);
  if (fusion.in != 3 * ch) throw ShapeError("fuse_rc_bev: fusion layer expects 3C inputs");
  std::vector<Axis> axes = img_bev_lss.axes();
  axes[2].size = fusion.out;
  FeatureGrid out(std::move(axes));
  std::vector<double> cat(3 * ch);
  for (std::size_t i = 0; i < out.dim(0); ++i) {
    for (std::size_t j = 0; j < out.dim(1); ++j) {
      auto a = img_bev_lss.cell(i, j), b = img_bev_sample.cell(i, j), r = radar_bev.cell(i, j);
      std::copy(a.begin(), a.end(), cat.begin());
      std::copy(b.begin(), b.end(), cat.begin() + static_cast<long>(ch));
      std::copy(r.begin(), r.end(), cat.begin() + static_cast<long>(2 * ch));
      auto y = out.cell(i, j);
      fusion.apply(cat, y);
      for (auto& v : y) v = std::max(v, 0.0);
    }
  }
  return out;
}

/// Fusion weights with a separate gain per input block (lift-splat sums grow
/// with the number of contributing rays, so that block is usually damped).
inline Dense seeded_fusion(std::size_t channels, SeededRng rng, double lss_gain, double sample_gain, double radar_gain) {
  Dense f = Dense::seeded(channels, 3 * channels, rng);
  for (std::size_t r = 0; r < channels; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      f.at(r, c) *= lss_gain;
      f.at(r, channels + c) *= sample_gain;
      f.at(r, 2 * channels + c) *= radar_gain;
    }
  }
  return f;
}

}  // namespace sifuse

#endif  // SIFUSE_VIEW_TRANSFORM_HPP_
