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

#ifndef SIFUSE_ROBUSTNESS_HPP_
#define SIFUSE_ROBUSTNESS_HPP_

// Calibration-disturbance, modality-dropout and depth-bin sweeps over a fixed
// scene suite.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "sifuse/config.hpp"
#include "sifuse/eval.hpp"
#include "sifuse/parallel.hpp"
#include "sifuse/pipeline.hpp"
#include "sifuse/scene_io.hpp"

namespace sifuse {

/// 64-bit FNV-1a, used to compare prediction files bit for bit.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Per-scene seed derived from the run seed (splitmix64 finalizer).
inline std::uint64_t scene_seed(std::uint64_t run_seed, std::size_t index) {
  std::uint64_t z = run_seed + 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

struct SuiteRun {
  std::vector<DetectionSet> predictions;
  std::vector<DetectionSet> ground_truth;
  std::vector<PipelineResult> results;  // kept only when requested
  bool radar_zero = true;               // R and S zero in every scene
  bool sparse_zero = true;
  bool f2d_zero = true;
};

/// Runs the pipeline on every scene. `camera_for` may replace each scene's
/// calibration.
template <typename CameraFor>
SuiteRun run_suite(const RunConfig& cfg, const PipelineWeights& w, const std::vector<StoredScene>& scenes,
                   RunOptions base, CameraFor&& camera_for, bool keep_results = false) {
  SuiteRun out;
  std::vector<PipelineResult> results(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) {
    RunOptions opt = base;
    opt.camera = camera_for(i);
    const auto& s = scenes[i];
    results[i] = run_scene(cfg, w, s.truth, scene_rng(s.record.seed, s.record.stream), opt);
  });
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    auto& r = results[i];
    r.detections.frame = scenes[i].record.name;
    out.predictions.push_back(r.detections);
    out.ground_truth.push_back({scenes[i].record.name, scenes[i].truth.boxes});
    out.radar_zero = out.radar_zero && r.radar_bev.all_zero();
    out.sparse_zero = out.sparse_zero && r.sparse_depth.all_zero();
    out.f2d_zero = out.f2d_zero && r.f2d.all_zero();
  }
  if (keep_results) out.results = std::move(results);
  return out;
}

inline SuiteRun run_suite(const RunConfig& cfg, const PipelineWeights& w, const std::vector<StoredScene>& scenes,
                          const RunOptions& base = {}) {
  return run_suite(cfg, w, scenes, base, [](std::size_t) { return std::optional<CalibratedCamera>{}; });
}

/// Mean pixel distance between projections through `truth` and `perturbed`.
/// The point set (box corners and radar returns) is fixed by the true camera:
/// inside the image and at least `min_depth` ahead. Points that fall behind
/// the perturbed camera are skipped. Returns the sum and the count so scenes
/// can be pooled.
inline std::pair<double, std::size_t> reprojection_error(const SceneTruth& scene, const CalibratedCamera& truth,
                                                         const CalibratedCamera& perturbed, double min_depth = 1.0) {
  double sum = 0.0;
  std::size_t n = 0;
  const auto add = [&](const Vec3& p) {
    const auto a = project(truth, p);
    if (a.depth < min_depth || a.u < -0.5 || a.v < -0.5 || a.u >= truth.width - 0.5 || a.v >= truth.height - 0.5) return;
    const auto b = project(perturbed, p);
    if (!b.in_front) return;
    sum += std::hypot(a.u - b.u, a.v - b.v);
    ++n;
  };
  for (const auto& box : scene.boxes)
    for (const auto& c : box.corners()) add(c);
  for (const auto& p : scene.radar) add(p.position());
  return {sum, n};
}

struct RobustRow {
  std::string group;    // baseline | calibration | dropout | depth_bins
  std::string setting;
  double max_angle_deg = 0.0;
  double max_trans = 0.0;
  std::optional<double> keep_fraction;  // nullopt: selection disabled
  Dropout dropout = Dropout::kNone;
  std::optional<double> map_eaa, map_dc, map_far;
  double recall = 0.0;
  double reprojection_px = 0.0;
  bool radar_zero = false, sparse_zero = false, f2d_zero = false;
  bool contract_ok = true;
  std::size_t detections = 0;
  std::uint64_t digest = 0;
};

inline RobustRow summarize(const RunConfig& cfg, const SuiteRun& run, std::string group, std::string setting) {
  RobustRow row;
  row.group = std::move(group);
  row.setting = std::move(setting);
  const auto regions = map_regions(run.predictions, run.ground_truth, cfg.grid, cfg.corridor, cfg.ap);
  row.map_eaa = region_result(regions, Region::kEAA).map;
  row.map_dc = region_result(regions, Region::kDC).map;
  row.map_far = region_result(regions, Region::kFAR).map;
  row.recall = recall_at_iou(run.predictions, run.ground_truth, cfg.recall_iou).recall();
  row.radar_zero = run.radar_zero;
  row.sparse_zero = run.sparse_zero;
  row.f2d_zero = run.f2d_zero;
  for (const auto& p : run.predictions) row.detections += p.boxes.size();
  row.digest = fnv1a(detections_jsonl(run.predictions, true));
  row.keep_fraction = cfg.ssi.keep_fraction;
  return row;
}

inline CalibratedCamera perturbed_camera(const StoredScene& s, const CalibrationSetting& c) {
  SeededRng rng = scene_rng(s.record.seed, s.record.stream).fork(streams::kCalibration);
  return perturb_calibration(s.truth.camera, rng, c.max_angle_deg, c.max_trans);
}

/// Baseline row, then one row per calibration bound, dropout mode and keep
/// fraction. Every calibration setting reuses the same per-scene random
/// draws, so only the bound changes between rows.
inline std::vector<RobustRow> robustness_suite(const RunConfig& cfg, const PipelineWeights& w,
                                               const std::vector<StoredScene>& scenes, const RunFlags& flags = {}) {
  std::vector<RobustRow> rows;
  RunOptions base;
  base.flags = flags;
  rows.push_back(summarize(cfg, run_suite(cfg, w, scenes, base), "baseline", "default"));

  for (const auto& c : cfg.robust.calibration) {
    auto run = run_suite(cfg, w, scenes, base, [&](std::size_t i) {
      return std::optional<CalibratedCamera>(perturbed_camera(scenes[i], c));
    });
    auto row = summarize(cfg, run, "calibration", fmt::format("{}deg_{}m", c.max_angle_deg, c.max_trans));
    row.max_angle_deg = c.max_angle_deg;
    row.max_trans = c.max_trans;
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : scenes) {
      const auto [e, k] = reprojection_error(s.truth, s.truth.camera, perturbed_camera(s, c), cfg.binning.d_min);
      sum += e;
      n += k;
    }
    row.reprojection_px = n > 0 ? sum / static_cast<double>(n) : 0.0;
    rows.push_back(std::move(row));
  }

  for (auto d : cfg.robust.dropout) {
    RunOptions opt = base;
    opt.dropout = d;
    auto row = summarize(cfg, run_suite(cfg, w, scenes, opt), "dropout", std::string(dropout_name(d)));
    row.dropout = d;
    if (d == Dropout::kCameraOnly) row.contract_ok = row.radar_zero && row.sparse_zero;
    if (d == Dropout::kRadarOnly) row.contract_ok = row.f2d_zero;
    rows.push_back(std::move(row));
  }

  for (double k : cfg.robust.keep_fractions) {
    RunOptions opt = base;
    opt.keep_fraction = k;
    auto row = summarize(cfg, run_suite(cfg, w, scenes, opt), "depth_bins", k > 0.0 ? fmt::format("{}", k) : "none");
    row.keep_fraction = k > 0.0 ? std::optional<double>(k) : std::nullopt;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string optional_cell(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : ""; }

inline std::string robust_csv(const std::vector<RobustRow>& rows) {
  std::string out =
      "group,setting,max_angle_deg,max_trans_m,keep_fraction,dropout,mAP_EAA,mAP_DC,mAP_FAR,recall,"
      "reproj_err_px,R_zero,S_zero,F2D_zero,contract,num_detections,pred_digest\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:016x}\n", r.group, r.setting, r.max_angle_deg,
                       r.max_trans, r.keep_fraction ? fmt::format("{}", *r.keep_fraction) : "none",
                       dropout_name(r.dropout), optional_cell(r.map_eaa), optional_cell(r.map_dc),
                       optional_cell(r.map_far), r.recall, r.reprojection_px, r.radar_zero ? 1 : 0,
                       r.sparse_zero ? 1 : 0, r.f2d_zero ? 1 : 0, r.contract_ok ? "ok" : "violated", r.detections,
                       r.digest);
  }
  return out;
}

}  // namespace sifuse

#endif  // SIFUSE_ROBUSTNESS_HPP_
