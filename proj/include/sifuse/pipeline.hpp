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

#ifndef SIFUSE_PIPELINE_HPP_
#define SIFUSE_PIPELINE_HPP_

// Full per-scene composition: image/radar branches, SSI, hybrid view
// transformation, fusion, CVC with optional FDL, IEA and box extraction.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sifuse/config.hpp"
#include "sifuse/cvc.hpp"
#include "sifuse/eval.hpp"
#include "sifuse/fdl.hpp"
#include "sifuse/geometry.hpp"
#include "sifuse/iea.hpp"
#include "sifuse/losses.hpp"
#include "sifuse/numerics.hpp"
#include "sifuse/radar_branch.hpp"
#include "sifuse/scene_synth.hpp"
#include "sifuse/view_transform.hpp"

namespace sifuse {

// RNG stream ids. Model weights come from the run seed; per-scene noise
// from the scene's own seed.
namespace streams {
inline constexpr std::uint32_t kPillar = 1;
inline constexpr std::uint32_t kHeads = 2;
inline constexpr std::uint32_t kMaskHead = 3;
inline constexpr std::uint32_t kHeightMlp = 4;
inline constexpr std::uint32_t kFusion = 5;
inline constexpr std::uint32_t kProposalEncoder = 6;
inline constexpr std::uint32_t kAttention = 7;
inline constexpr std::uint32_t kEncoders = 8;
inline constexpr std::uint32_t kToken = 9;
inline constexpr std::uint32_t kSem = 10;
inline constexpr std::uint32_t kGem = 11;
inline constexpr std::uint32_t kSceneBase = 100;
inline constexpr std::uint32_t kImageFeatures = 1001;
inline constexpr std::uint32_t kProposals = 1002;
inline constexpr std::uint32_t kCalibration = 1003;
}  // namespace streams

/// Every fixed or initial weight of the pipeline.
struct PipelineWeights {
  PillarConfig pillar;
  DepthContextHeads heads;
  MaskHead mask_head;
  Dense height_mlp;
  Dense fusion;
  ProposalEncoder proposal_encoder;
  TokenAttentionWeights attention;
  CvcEncoders encoders;  // initial values; FDL trains copies
  Token token;           // initial value
  IeaWeights iea;

  static PipelineWeights seeded(const RunConfig& cfg) {
    const SeededRng root(cfg.seed);
    const std::size_t c = cfg.channels;
    PipelineWeights w;
    w.pillar = PillarConfig::seeded(cfg.grid, c, root.fork(streams::kPillar));
    w.heads = DepthContextHeads::seeded(c, cfg.binning, cfg.image_features, root.fork(streams::kHeads), cfg.decode_gain,
                                        cfg.radar_gain);
    w.mask_head = MaskHead::seeded(c, root.fork(streams::kMaskHead));
    auto hr = root.fork(streams::kHeightMlp);
    w.height_mlp = Dense::seeded(c, cfg.grid.nz() * c, hr);
    w.fusion = seeded_fusion(c, root.fork(streams::kFusion), cfg.fusion_lss_gain, cfg.fusion_sample_gain,
                             cfg.fusion_radar_gain);
    w.proposal_encoder = ProposalEncoder::seeded(c, root.fork(streams::kProposalEncoder));
    w.attention = TokenAttentionWeights::seeded(c, root.fork(streams::kAttention));
    w.encoders = CvcEncoders::seeded(c, root.fork(streams::kEncoders), cfg.encoder_gain);
    w.token = Token::seeded(c, root.fork(streams::kToken));
    w.iea.sem = DeformConfig::seeded(c, root.fork(streams::kSem));
    w.iea.gem = NeighborhoodConfig::seeded(c, root.fork(streams::kGem));
    return w;
  }
};

/// Ablation switches. `ssi` gates both SGW and DGW.
struct RunFlags {
  bool ssi = true;
  bool sgw = true;
  bool dgw = true;
  bool cvc = true;
  bool fdl = true;
  bool iea = true;
  bool sem = true;
  bool gem = true;
  bool det2d = true;
};

struct RunOptions {
  RunFlags flags;
  Dropout dropout = Dropout::kNone;
  std::optional<CalibratedCamera> camera;  // calibration seen by the pipeline
  std::optional<double> keep_fraction;     // 0 disables DGW
};

struct PipelineResult {
  CalibratedCamera camera;
  FeatureGrid f2d;
  FeatureGrid sparse_depth;  // S
  FeatureGrid radar_bev;     // R
  FeatureGrid context;
  FeatureGrid depth_logits;
  FeatureGrid depth;         // softmax(logits)
  FeatureGrid mask;          // M used by SGW
  FeatureGrid context_ssi;
  FeatureGrid depth_ssi;
  FeatureGrid img_bev_lss;
  FeatureGrid img_bev_sample;
  FeatureGrid rc_bev;        // F_RC
  std::vector<Box2D> proposals2d;
  ProposalSet proposals;
  std::optional<CvcOutput> cvc;
  std::optional<FdlTrace> fdl;
  FeatureGrid final_bev;     // F_Final (F_Activated if IEA is off)
  FeatureGrid heatmap;
  DetectionSet detections;
  LossParts losses;
};

/// Per-cell L2 norm of a feature grid, min-max normalized to [0, 1].
inline FeatureGrid feature_energy(const FeatureGrid& f) {
  require_rank(f, 3, "feature_energy");
  std::vector<Axis> axes(f.axes().begin(), f.axes().begin() + 2);
  std::vector<double> n(f.dim(0) * f.dim(1));
  for (std::size_t i = 0; i < f.dim(0); ++i)
    for (std::size_t j = 0; j < f.dim(1); ++j) n[i * f.dim(1) + j] = norm2(f.cell(i, j));
  return FeatureGrid(std::move(axes), minmax_normalize(n));
}

/// Class of the highest-scoring proposal whose box contains the projection
/// of `p`; car if none does.
inline ObjectClass classify_by_proposals(const Vec3& p, const std::vector<Box2D>& proposals,
                                         const CalibratedCamera& cam) {
  const auto pr = project(cam, p);
  if (!pr.in_front) return ObjectClass::kCar;
  const Box2D* best = nullptr;
  for (const auto& b : proposals) {
    if (pr.u >= b.u_min && pr.u <= b.u_max && pr.v >= b.v_min && pr.v <= b.v_max && (!best || b.score > best->score)) {
      best = &b;
    }
  }
  return best ? best->cls : ObjectClass::kCar;
}

inline FdlProblem make_fdl_problem(const FeatureGrid& rc_bev, const ProposalSet& proposals, const PipelineWeights& w,
                                   const SceneTruth& scene, const LossWeights& lw) {
  return {rc_bev, proposals, w.attention, scene.occ_object, scene.occ_background, lw};
}

inline FdlParameters initial_fdl_parameters(const PipelineWeights& w) {
  return {w.token.value, w.encoders.object, w.encoders.background};
}

inline void check_scene_matches(const RunConfig& cfg, const SceneTruth& scene) {
  if (!(scene.grid == cfg.grid)) throw ConfigError("scene grid does not match the config grid");
  if (scene.camera.height != cfg.image_height || scene.camera.width != cfg.image_width) {
    throw ConfigError("scene image size does not match the config");
  }
  if (scene.gt_depth.dim(0) != cfg.image_height || scene.gt_depth.dim(1) != cfg.image_width) {
    throw ConfigError("scene depth map does not match the config image size");
  }
  if (!scene.occ_object.same_shape(cfg.grid.bev_map())) throw ConfigError("scene occupancy does not match the grid");
}

/// Runs the full pipeline on one scene. `scene_rng` seeds the per-scene image
/// features and proposal jitter.
inline PipelineResult run_scene(const RunConfig& cfg, const PipelineWeights& w, const SceneTruth& scene,
                                const SeededRng& scene_rng, const RunOptions& opt = {}) {
  check_scene_matches(cfg, scene);
  const RunFlags& f = opt.flags;
  PipelineResult r;
  r.camera = opt.camera ? *opt.camera : scene.camera;
  const auto& cam = r.camera;
  const std::size_t h = cfg.image_height, wd = cfg.image_width;

  // Image branch; a failed camera yields an all-zero F2D.
  r.f2d = synthesize_image_features(scene, cfg.binning, cfg.channels, cfg.image_features,
                                    scene_rng.fork(streams::kImageFeatures));
  if (opt.dropout == Dropout::kRadarOnly) r.f2d = FeatureGrid(r.f2d.axes());

  // Radar branch; a failed radar returns no points.
  const RadarPointCloud no_points;
  const RadarPointCloud& points = opt.dropout == Dropout::kCameraOnly ? no_points : scene.radar;
  r.radar_bev = pillar_encode(points, w.pillar);
  r.sparse_depth = render_sparse_depth(points, cam, h, wd);

  r.context = w.heads.context_map(r.f2d);
  r.depth_logits = w.heads.depth_logits(r.f2d, r.sparse_depth);
  r.depth = depth_probabilities(r.depth_logits);
  r.mask = cfg.ssi.mask_source == MaskSource::kOracle ? scene.fg_mask : w.mask_head.predict(r.f2d);

  // Sparse scene integration.
  SSIConfig ssi = cfg.ssi;
  bool dgw = f.ssi && f.dgw;
  if (opt.keep_fraction) {
    if (*opt.keep_fraction <= 0.0) {
      dgw = false;
    } else {
      ssi.keep_fraction = *opt.keep_fraction;
    }
  }
  r.context_ssi = f.ssi && f.sgw ? ssi_sgw(r.context, r.mask) : r.context;
  r.depth_ssi = dgw ? ssi_dgw(r.depth, ssi) : r.depth;

  // Hybrid view transformation and fusion.
  r.img_bev_lss = lift_splat_pool(r.context_ssi, r.depth_ssi, cam, cfg.grid, cfg.binning);
  r.img_bev_sample = sample_virtual(r.f2d, r.depth_ssi, cam, cfg.grid, cfg.binning, w.height_mlp);
  r.rc_bev = fuse_rc_bev(r.img_bev_lss, r.img_bev_sample, r.radar_bev, w.fusion);

  // 2D proposals; none when the detector is off or the camera failed.
  if (f.det2d && opt.dropout != Dropout::kRadarOnly) {
    auto prng = scene_rng.fork(streams::kProposals);
    r.proposals2d = jitter_proposals(scene.boxes2d, prng, cfg.proposal_sigma_px, cfg.proposal_min_score, scene.camera);
  }
  r.proposals = w.proposal_encoder.encode(r.context, r.proposals2d);

  FeatureGrid activated = r.rc_bev;
  if (f.cvc) {
    CvcWeights cw{w.proposal_encoder, w.attention, w.encoders};
    Token token = w.token;
    if (f.fdl) {
      const auto problem = make_fdl_problem(r.rc_bev, r.proposals, w, scene, cfg.loss_weights);
      r.fdl = fdl_optimize(problem, initial_fdl_parameters(w), cfg.fdl_steps, cfg.fdl_learning_rate);
      token.value = r.fdl->final_params.token;
      cw.encoders.object = r.fdl->final_params.object;
      cw.encoders.background = r.fdl->final_params.background;
    }
    r.cvc = cvc_forward(r.proposals, r.rc_bev, token, cw);
    activated = r.cvc->activated;
  }

  if (f.iea && (f.sem || f.gem)) {
    r.final_bev = iea_forward(activated, r.depth_ssi, r.context_ssi, r.radar_bev, cam, cfg.grid, cfg.binning, w.iea,
                              f.sem, f.gem);
  } else {
    r.final_bev = activated;
  }

  r.heatmap = r.cvc ? r.cvc->corr_object : feature_energy(f.iea ? r.final_bev : r.rc_bev);
  const auto anchors = default_anchors(cfg.scene.ground_z);
  const auto classify = [&](const Vec3& p) { return classify_by_proposals(p, r.proposals2d, cam); };
  r.detections = extract_boxes(r.heatmap, cfg.grid, anchors, cfg.detect_threshold, classify);

  // Loss bookkeeping (detection losses are out of scope and stay 0).
  r.losses.depth = loss_depth(r.depth_logits, scene.gt_depth, cfg.binning).value;
  r.losses.seg_per = loss_seg(w.mask_head.predict(r.f2d), scene.fg_mask).value;
  if (r.cvc) {
    r.losses.neg = loss_neg(r.cvc->sim_object).value + loss_neg(r.cvc->sim_background).value;
    r.losses.seg_bev = loss_seg(r.cvc->corr_object, scene.occ_object).value +
                       loss_seg(r.cvc->corr_background, scene.occ_background).value;
  }
  return r;
}

/// Scene i of a run: its own seed and stream.
inline SeededRng scene_rng(std::uint64_t seed, std::uint32_t stream) { return SeededRng(seed, stream); }

}  // namespace sifuse

#endif  // SIFUSE_PIPELINE_HPP_
