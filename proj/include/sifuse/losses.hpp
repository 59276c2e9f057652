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

#ifndef SIFUSE_LOSSES_HPP_
#define SIFUSE_LOSSES_HPP_

#include <algorithm>
#include <cmath>
#include <vector>

#include "sifuse/errors.hpp"
#include "sifuse/geometry.hpp"
#include "sifuse/numerics.hpp"

namespace sifuse {

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kDiceSmooth = 1.0;

struct LossWeights {
  double lambda1 = 1.0;  // depth
  double lambda2 = 1.0;  // similarity (L_neg)
  double lambda3 = 1.0;  // segmentation

  void validate() const {
    for (double l : {lambda1, lambda2, lambda3}) {
      if (!std::isfinite(l) || l < 0.0) throw DomainError("loss weights must be finite and non-negative");
    }
  }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossValue {
  double value = 0.0;
  std::vector<double> grad;
};

/// L = -(1/C) sum_i log sigmoid(v_i);  dL/dv_i = -(1/C) sigmoid(-v_i).
inline LossValue loss_neg(std::span<const double> v) {
  if (v.empty()) throw DomainError("loss_neg: empty similarity vector");
  const double inv = 1.0 / static_cast<double>(v.size());
  LossValue out{0.0, std::vector<double>(v.size())};
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw NumericError("loss_neg: non-finite input");
    out.value -= inv * log_sigmoid(v[i]);
    out.grad[i] = -inv * sigmoid(-v[i]);
  }
  return out;
}

/// Mean binary cross-entropy plus soft Dice (smoothing 1), with predictions
/// clamped to [1e-7, 1 - 1e-7]. Clamped entries get zero gradient.
inline LossValue loss_seg(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size()) throw ShapeError("loss_seg: prediction and target sizes differ");
  if (pred.empty()) throw DomainError("loss_seg: empty input");
  const double n = static_cast<double>(pred.size());
  double bce = 0.0, inter = 0.0, psum = 0.0, gsum = 0.0;
  std::vector<double> p(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    p[i] = std::clamp(pred[i], kProbClamp, 1.0 - kProbClamp);
    bce -= gt[i] * std::log(p[i]) + (1.0 - gt[i]) * std::log(1.0 - p[i]);
    inter += p[i] * gt[i];
    psum += p[i];
    gsum += gt[i];
  }
  bce /= n;
  const double num = 2.0 * inter + kDiceSmooth;
  const double den = psum + gsum + kDiceSmooth;
  LossValue out{bce + 1.0 - num / den, std::vector<double>(pred.size(), 0.0)};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] != p[i]) continue;
    const double d_bce = (-gt[i] / p[i] + (1.0 - gt[i]) / (1.0 - p[i])) / n;
    const double d_dice = -(2.0 * gt[i] * den - num) / (den * den);
    out.grad[i] = d_bce + d_dice;
  }
  return out;
}

inline LossValue loss_seg(const FeatureGrid& pred, const FeatureGrid& gt) {
  if (!pred.same_shape(gt)) throw ShapeError("loss_seg: prediction and target shapes differ");
  return loss_seg(pred.data(), gt.data());
}

struct DepthLoss {
  double value = 0.0;
  std::size_t supervised_pixels = 0;  // 0 means the loss is 0 by convention
};

/// Per-pixel cross-entropy between softmax(logits) and the one-hot bin of the
/// ground-truth depth, averaged over pixels with depth > 0.
inline DepthLoss loss_depth(const FeatureGrid& logits, const FeatureGrid& gt_depth, const DepthBinning& binning) {
  require_rank(logits, 3, "loss_depth");
  require_rank(gt_depth, 2, "loss_depth");
  if (logits.dim(0) != gt_depth.dim(0) || logits.dim(1) != gt_depth.dim(1) || logits.dim(2) != binning.bins) {
    throw ShapeError("loss_depth: shape mismatch");
  }
  DepthLoss out;
  for (std::size_t r = 0; r < logits.dim(0); ++r) {
    for (std::size_t c = 0; c < logits.dim(1); ++c) {
      const double d = gt_depth(r, c);
      if (!(d > 0.0)) continue;
      auto z = logits.cell(r, c);
      const double m = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (double v : z) sum += std::exp(v - m);
      out.value += m + std::log(sum) - z[binning.bin_index(d)];
      ++out.supervised_pixels;
    }
  }
  if (out.supervised_pixels > 0) out.value /= static_cast<double>(out.supervised_pixels);
  return out;
}

struct LossParts {
  double det3d = 0.0;
  double det2d = 0.0;
  double depth = 0.0;
  double neg = 0.0;
  double seg_per = 0.0;
  double seg_bev = 0.0;
};

inline double total_loss(const LossParts& p, const LossWeights& w) {
  w.validate();
  for (double v : {p.det3d, p.det2d, p.depth, p.neg, p.seg_per, p.seg_bev}) {
    if (!std::isfinite(v)) throw NumericError("total_loss: non-finite part");
  }
  return p.det3d + p.det2d + w.lambda1 * p.depth + w.lambda2 * p.neg + w.lambda3 * (p.seg_per + p.seg_bev);
}

}  // namespace sifuse

#endif  // SIFUSE_LOSSES_HPP_
