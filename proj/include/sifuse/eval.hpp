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

#ifndef SIFUSE_EVAL_HPP_
#define SIFUSE_EVAL_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sifuse/errors.hpp"
#include "sifuse/geometry.hpp"
#include "sifuse/numerics.hpp"
#include "sifuse/scene_synth.hpp"

namespace sifuse {

using Point2 = std::array<double, 2>;
using Polygon = std::vector<Point2>;

inline double polygon_area(const Polygon& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    a += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * std::abs(a);
}

/// Sutherland-Hodgman: clips `subject` against the convex, counter-clockwise
/// polygon `clip`.
inline Polygon clip_polygon(const Polygon& subject, const Polygon& clip) {
  Polygon out = subject;
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Point2 a = clip[e], b = clip[(e + 1) % clip.size()];
    const auto side = [&](const Point2& p) { return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]); };
    Polygon in = std::move(out);
    out.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Point2& cur = in[i];
      const Point2& prev = in[(i + in.size() - 1) % in.size()];
      const double sc = side(cur), sp = side(prev);
      if (sc >= 0.0) {
        if (sp < 0.0) {
          const double t = sp / (sp - sc);
          out.push_back({prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])});
        }
        out.push_back(cur);
      } else if (sp >= 0.0) {
        const double t = sp / (sp - sc);
        out.push_back({prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])});
      }
    }
  }
  return out;
}

inline Polygon bev_polygon(const Box3D& b) {
  const auto c = b.bev_corners();
  return Polygon(c.begin(), c.end());
}

struct IouResult {
  double value = 0.0;
  bool degenerate = false;  // a zero-area operand; value is 0
};

inline constexpr double kMinBoxExtent = 1e-9;

inline double bev_intersection_area(const Box3D& a, const Box3D& b) {
  return polygon_area(clip_polygon(bev_polygon(a), bev_polygon(b)));
}

/// IoU of the yaw-rotated BEV rectangles.
inline IouResult rotated_iou_bev(const Box3D& a, const Box3D& b) {
  if (a.size[0] <= kMinBoxExtent || a.size[1] <= kMinBoxExtent || b.size[0] <= kMinBoxExtent ||
      b.size[1] <= kMinBoxExtent) {
    return {0.0, true};
  }
  // Clip in both orders and average so the result is symmetric to rounding.
  const double inter = 0.5 * (bev_intersection_area(a, b) + bev_intersection_area(b, a));
  const double uni = a.bev_area() + b.bev_area() - inter;
  return {uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0, false};
}

inline IouResult iou_3d(const Box3D& a, const Box3D& b) {
  if (a.size[0] <= kMinBoxExtent || a.size[1] <= kMinBoxExtent || a.size[2] <= kMinBoxExtent ||
      b.size[0] <= kMinBoxExtent || b.size[1] <= kMinBoxExtent || b.size[2] <= kMinBoxExtent) {
    return {0.0, true};
  }
  const double dz = std::min(a.z_top(), b.z_top()) - std::max(a.z_bottom(), b.z_bottom());
  if (dz <= 0.0) return {0.0, false};
  const double inter = 0.5 * (bev_intersection_area(a, b) + bev_intersection_area(b, a)) * dz;
  const double uni = a.volume() + b.volume() - inter;
  return {uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0, false};
}

struct DetectionSet {
  std::string frame;
  std::vector<Box3D> boxes;
};

enum class ApMode { kR40, kR11 };
enum class IouMetric { k3D, kBEV };

inline std::string_view mode_name(ApMode m) { return m == ApMode::kR40 ? "R40" : "R11"; }
inline std::string_view metric_name(IouMetric m) { return m == IouMetric::k3D ? "3D" : "BEV"; }

struct ApOptions {
  // Per-class IoU thresholds: car, pedestrian, cyclist, truck.
  std::array<double, kNumClasses> thresholds = {0.5, 0.25, 0.25, 0.5};
  ApMode mode = ApMode::kR40;
  IouMetric metric = IouMetric::k3D;
};

struct ClassAp {
  ObjectClass cls = ObjectClass::kCar;
  std::optional<double> ap;  // absent when the class has no ground truth
  double threshold = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
};

struct APReport {
  ApMode mode = ApMode::kR40;
  IouMetric metric = IouMetric::k3D;
  std::vector<ClassAp> classes;

  const ClassAp& at(ObjectClass c) const {
    for (const auto& e : classes)
      if (e.cls == c) return e;
    throw DomainError("APReport: class missing");
  }

  // Mean over classes that have ground truth; nullopt if none do.
  std::optional<double> mean_ap() const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& e : classes) {
      if (e.ap) {
        sum += *e.ap;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  }
};

/// Interpolated AP from a score-ordered TP/FP sequence.
/// R40 samples recall at 1/40 ... 1, R11 at 0, 0.1, ..., 1; precision at
/// recall r is the maximum precision at any recall >= r.
inline double interpolated_ap(const std::vector<bool>& is_tp, std::size_t num_gt, ApMode mode) {
  if (num_gt == 0) throw DomainError("interpolated_ap: no ground truth");
  std::vector<double> recall, precision;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < is_tp.size(); ++i) {
    if (is_tp[i]) ++tp;
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
  }
  // Running maximum from the right.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  const std::size_t samples = mode == ApMode::kR40 ? 40 : 11;
  double sum = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double r = mode == ApMode::kR40 ? static_cast<double>(s + 1) / 40.0 : static_cast<double>(s) / 10.0;
    for (std::size_t i = 0; i < recall.size(); ++i) {
      if (recall[i] >= r - 1e-12) {
        sum += precision[i];
        break;
      }
    }
  }
  return sum / static_cast<double>(samples);
}

inline double box_iou(const Box3D& a, const Box3D& b, IouMetric metric) {
  return metric == IouMetric::k3D ? iou_3d(a, b).value : rotated_iou_bev(a, b).value;
}

/// Score-descending greedy matching per class (each prediction takes the
/// best-overlapping unmatched ground truth of its frame at or above the class
/// threshold), then interpolated AP. Frames are paired by index.
inline APReport average_precision(const std::vector<DetectionSet>& preds, const std::vector<DetectionSet>& gts,
                                  const ApOptions& opts = {}) {
  if (preds.size() != gts.size()) throw ShapeError("average_precision: prediction and ground-truth frame counts differ");
  APReport report;
  report.mode = opts.mode;
  report.metric = opts.metric;
  for (auto cls : kAllClasses) {
    ClassAp entry;
    entry.cls = cls;
    entry.threshold = opts.thresholds[static_cast<std::size_t>(cls)];
    struct Candidate {
      double score;
      std::size_t frame, index;
    };
    std::vector<Candidate> cands;
    std::size_t num_gt = 0;
    for (std::size_t f = 0; f < preds.size(); ++f) {
      for (std::size_t i = 0; i < preds[f].boxes.size(); ++i) {
        const auto& b = preds[f].boxes[i];
        if (b.cls != cls) continue;
        if (!(b.score >= 0.0 && b.score <= 1.0)) throw DomainError("average_precision: score outside [0,1]");
        cands.push_back({b.score, f, i});
      }
      for (const auto& g : gts[f].boxes) num_gt += g.cls == cls ? 1 : 0;
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::vector<std::vector<bool>> used(gts.size());
    for (std::size_t f = 0; f < gts.size(); ++f) used[f].assign(gts[f].boxes.size(), false);
    std::vector<bool> is_tp;
    for (const auto& c : cands) {
      const auto& pb = preds[c.frame].boxes[c.index];
      double best = -1.0;
      std::size_t best_g = 0;
      for (std::size_t g = 0; g < gts[c.frame].boxes.size(); ++g) {
        const auto& gb = gts[c.frame].boxes[g];
        if (gb.cls != cls || used[c.frame][g]) continue;
        const double iou = box_iou(pb, gb, opts.metric);
        if (iou >= entry.threshold && iou > best) {
          best = iou;
          best_g = g;
        }
      }
      if (best >= 0.0) {
        used[c.frame][best_g] = true;
        is_tp.push_back(true);
        ++entry.tp;
      } else {
        is_tp.push_back(false);
        ++entry.fp;
      }
    }
    entry.fn = num_gt - entry.tp;
    if (num_gt > 0) entry.ap = interpolated_ap(is_tp, num_gt, opts.mode);
    report.classes.push_back(entry);
  }
  return report;
}

enum class Region { kEAA, kDC, kFAR };
inline constexpr std::array<Region, 3> kAllRegions = {Region::kEAA, Region::kDC, Region::kFAR};
inline std::string_view region_name(Region r) {
  switch (r) {
    case Region::kEAA: return "EAA";
    case Region::kDC: return "DC";
    case Region::kFAR: return "FAR";
  }
  return "EAA";
}

struct RegionResult {
  Region region = Region::kEAA;
  std::optional<double> map;          // absent when no class has ground truth in the region
  std::vector<ObjectClass> skipped;   // classes without ground truth in the region
  std::size_t num_gt = 0;
  APReport report;
};

inline bool in_region(const Box3D& b, Region r, const VoxelGrid& grid, const DrivingCorridor& corridor) {
  const auto m = region_split(b, grid, corridor);
  switch (r) {
    case Region::kEAA: return m.eaa;
    case Region::kDC: return m.dc;
    case Region::kFAR: return m.far;
  }
  return false;
}

inline std::vector<DetectionSet> restrict_to_region(const std::vector<DetectionSet>& sets, Region r, const VoxelGrid& grid,
                                                    const DrivingCorridor& corridor) {
  std::vector<DetectionSet> out;
  for (const auto& s : sets) {
    DetectionSet d{s.frame, {}};
    for (const auto& b : s.boxes)
      if (in_region(b, r, grid, corridor)) d.boxes.push_back(b);
    out.push_back(std::move(d));
  }
  return out;
}

/// Class-mean AP with ground truth and predictions restricted to each region
/// by box center. Classes absent from a region are skipped in its mean.
inline std::vector<RegionResult> map_regions(const std::vector<DetectionSet>& preds, const std::vector<DetectionSet>& gts,
                                             const VoxelGrid& grid, const DrivingCorridor& corridor = {},
                                             const ApOptions& opts = {}) {
  std::vector<RegionResult> out;
  for (auto region : kAllRegions) {
    RegionResult rr;
    rr.region = region;
    const auto g = restrict_to_region(gts, region, grid, corridor);
    const auto p = restrict_to_region(preds, region, grid, corridor);
    for (const auto& s : g) rr.num_gt += s.boxes.size();
    rr.report = average_precision(p, g, opts);
    for (const auto& e : rr.report.classes)
      if (!e.ap) rr.skipped.push_back(e.cls);
    rr.map = rr.report.mean_ap();
    out.push_back(std::move(rr));
  }
  return out;
}

inline const RegionResult& region_result(const std::vector<RegionResult>& results, Region r) {
  for (const auto& e : results)
    if (e.region == r) return e;
  throw DomainError("region result missing");
}

struct Anchor {
  Vec3 size;
  double z_center;
};

inline std::array<Anchor, kNumClasses> default_anchors(double ground_z = -1.0) {
  std::array<Anchor, kNumClasses> a{};
  for (auto c : kAllClasses) {
    const auto s = class_prior(c).size;
    a[static_cast<std::size_t>(c)] = {s, ground_z + s[2] / 2.0};
  }
  return a;
}

using CellClassifier = std::function<ObjectClass(const Vec3& center)>;

/// Non-learned box extractor: cells that are strict maxima of their
/// 8-neighborhood and exceed `threshold` become anchor-sized, yaw-0 boxes
/// scored by the map value.
inline DetectionSet extract_boxes(const FeatureGrid& heat, const VoxelGrid& grid,
                                  const std::array<Anchor, kNumClasses>& anchors, double threshold,
                                  const CellClassifier& classify = {}, std::string frame = {}) {
  require_rank(heat, 2, "extract_boxes");
  if (!(threshold > 0.0 && threshold < 1.0)) throw DomainError("extract_boxes: threshold must be in (0,1)");
  DetectionSet out{std::move(frame), {}};
  const long nx = static_cast<long>(heat.dim(0)), ny = static_cast<long>(heat.dim(1));
  for (long i = 0; i < nx; ++i) {
    for (long j = 0; j < ny; ++j) {
      const double v = heat(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      if (!(v > threshold)) continue;
      bool peak = true;
      for (long di = -1; di <= 1 && peak; ++di) {
        for (long dj = -1; dj <= 1 && peak; ++dj) {
          if (di == 0 && dj == 0) continue;
          const long a = i + di, b = j + dj;
          if (a < 0 || b < 0 || a >= nx || b >= ny) continue;
          peak = v > heat(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
        }
      }
      if (!peak) continue;
      const Vec3 c = grid.center(static_cast<std::size_t>(i), static_cast<std::size_t>(j), 0);
      const ObjectClass cls = classify ? classify({c[0], c[1], anchors[0].z_center}) : ObjectClass::kCar;
      const auto& anchor = anchors[static_cast<std::size_t>(cls)];
      Box3D b;
      b.center = {c[0], c[1], anchor.z_center};
      b.size = anchor.size;
      b.yaw = 0.0;
      b.cls = cls;
      b.score = std::clamp(v, 0.0, 1.0);
      out.boxes.push_back(b);
    }
  }
  return out;
}

struct RecallResult {
  std::size_t matched = 0;
  std::size_t total = 0;
  double recall() const { return total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total); }
};

/// Class-agnostic recall: greedy score-descending one-to-one matching at BEV
/// IoU >= threshold.
inline RecallResult recall_at_iou(const std::vector<DetectionSet>& preds, const std::vector<DetectionSet>& gts,
                                  double threshold) {
  if (preds.size() != gts.size()) throw ShapeError("recall_at_iou: frame counts differ");
  RecallResult r;
  for (std::size_t f = 0; f < gts.size(); ++f) {
    r.total += gts[f].boxes.size();
    std::vector<std::size_t> order(preds[f].boxes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return preds[f].boxes[a].score > preds[f].boxes[b].score; });
    std::vector<bool> used(gts[f].boxes.size(), false);
    for (std::size_t i : order) {
      double best = -1.0;
      std::size_t best_g = 0;
      for (std::size_t g = 0; g < gts[f].boxes.size(); ++g) {
        if (used[g]) continue;
        const double iou = rotated_iou_bev(preds[f].boxes[i], gts[f].boxes[g]).value;
        if (iou >= threshold && iou > best) {
          best = iou;
          best_g = g;
        }
      }
      if (best >= 0.0) {
        used[best_g] = true;
        ++r.matched;
      }
    }
  }
  return r;
}

}  // namespace sifuse

#endif  // SIFUSE_EVAL_HPP_
