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

#include <cstdlib>

#include <gtest/gtest.h>

#include "sifuse/commands.hpp"
#include "sifuse/robustness.hpp"
#include "support/generators.hpp"

namespace sifuse {
namespace {

struct Fixture {
  RunConfig cfg = gen::tiny_config();
  PipelineWeights w = PipelineWeights::seeded(cfg);
  SceneRecord rec = scene_record(cfg, 0);
  SceneTruth scene = synthesize_scene(cfg, rec);

  PipelineResult run(const RunOptions& opt = {}) const {
    return run_scene(cfg, w, scene, scene_rng(rec.seed, rec.stream), opt);
  }
};

TEST(Pipeline, Deterministic) {
  const Fixture f;
  const auto a = f.run(), b = f.run();
  EXPECT_EQ(a.rc_bev, b.rc_bev);
  EXPECT_EQ(a.final_bev, b.final_bev);
  EXPECT_EQ(a.heatmap, b.heatmap);
  EXPECT_EQ(a.detections.boxes, b.detections.boxes);
  EXPECT_EQ(detections_jsonl({a.detections}, true), detections_jsonl({b.detections}, true));
}

TEST(Pipeline, SceneRecordsAreDistinctAndStable) {
  const auto cfg = gen::tiny_config();
  const auto a = scene_record(cfg, 0), b = scene_record(cfg, 1);
  EXPECT_EQ(a.name, "scene_0000");
  EXPECT_NE(a.seed, b.seed);
  EXPECT_EQ(a.seed, scene_record(cfg, 0).seed);
  EXPECT_EQ(a.seed, scene_seed(cfg.seed, 0));
}

TEST(Pipeline, ShapesFollowConfig) {
  const Fixture f;
  const auto r = f.run();
  EXPECT_EQ(r.f2d.shape(), (std::vector<std::size_t>{16, 24, f.cfg.channels}));
  EXPECT_EQ(r.depth.shape(), (std::vector<std::size_t>{16, 24, 14}));
  EXPECT_EQ(r.rc_bev.shape(), (std::vector<std::size_t>{16, 16, f.cfg.channels}));
  EXPECT_EQ(r.heatmap.shape(), (std::vector<std::size_t>{16, 16}));
  ASSERT_TRUE(r.fdl.has_value());
  EXPECT_EQ(r.fdl->steps.size(), f.cfg.fdl_steps + 1);
  for (double v : r.heatmap.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Pipeline, DgwKeepsAtMostKBins) {
  const Fixture f;
  const auto r = f.run();
  const std::size_t k = f.cfg.ssi.keep_count(f.cfg.binning.bins);
  for (std::size_t i = 0; i < r.depth_ssi.dim(0); ++i) {
    for (std::size_t j = 0; j < r.depth_ssi.dim(1); ++j) {
      auto c = r.depth_ssi.cell(i, j);
      EXPECT_LE(static_cast<std::size_t>(std::count_if(c.begin(), c.end(), [](double v) { return v != 0.0; })), k);
    }
  }
}

TEST(Pipeline, OracleMaskLeavesBackgroundColumnsEmpty) {
  const Fixture f;
  const auto r = f.run();
  // Every lift-splat contribution comes from a foreground pixel, so any cell
  // with mass must be hit by a foreground ray.
  const auto& cam = r.camera;
  FeatureGrid reachable = f.cfg.grid.bev_map();
  for (std::size_t row = 0; row < f.cfg.image_height; ++row) {
    for (std::size_t col = 0; col < f.cfg.image_width; ++col) {
      if (f.scene.fg_mask(row, col) == 0.0) continue;
      for (std::size_t k = 0; k < f.cfg.binning.bins; ++k) {
        const auto p = unproject(cam, double(col), double(row), f.cfg.binning.center(k));
        if (const auto v = f.cfg.grid.voxel(p)) reachable((*v)[0], (*v)[1]) = 1.0;
      }
    }
  }
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j)
      if (reachable(i, j) == 0.0) {
        for (double v : r.img_bev_lss.cell(i, j)) ASSERT_EQ(v, 0.0);
      }
}

TEST(Pipeline, CameraOnlyDropout) {
  const Fixture f;
  RunOptions opt;
  opt.dropout = Dropout::kCameraOnly;
  const auto r = f.run(opt);
  EXPECT_TRUE(r.radar_bev.all_zero());
  EXPECT_TRUE(r.sparse_depth.all_zero());
  EXPECT_FALSE(r.f2d.all_zero());
}

TEST(Pipeline, RadarOnlyDropout) {
  const Fixture f;
  RunOptions opt;
  opt.dropout = Dropout::kRadarOnly;
  const auto r = f.run(opt);
  EXPECT_TRUE(r.f2d.all_zero());
  EXPECT_TRUE(r.proposals2d.empty());
  EXPECT_FALSE(r.radar_bev.all_zero());
}

TEST(Pipeline, AblationFlags) {
  const Fixture f;
  RunOptions opt;
  opt.flags.cvc = false;
  auto r = f.run(opt);
  EXPECT_FALSE(r.cvc.has_value());
  EXPECT_FALSE(r.fdl.has_value());
  EXPECT_EQ(r.heatmap, feature_energy(r.final_bev));

  opt.flags.iea = false;
  r = f.run(opt);
  EXPECT_EQ(r.final_bev, r.rc_bev);
  EXPECT_EQ(r.heatmap, feature_energy(r.rc_bev));

  RunOptions no_ssi;
  no_ssi.flags.ssi = false;
  r = f.run(no_ssi);
  EXPECT_EQ(r.context_ssi, r.context);
  EXPECT_EQ(r.depth_ssi, r.depth);

  RunOptions no_fdl;
  no_fdl.flags.fdl = false;
  r = f.run(no_fdl);
  EXPECT_TRUE(r.cvc.has_value());
  EXPECT_FALSE(r.fdl.has_value());
}

TEST(Pipeline, ZeroKeepFractionDisablesBinSelection) {
  const Fixture f;
  RunOptions opt;
  opt.keep_fraction = 0.0;
  const auto r = f.run(opt);
  EXPECT_EQ(r.depth_ssi, r.depth);
}

TEST(Pipeline, ConfigMismatchRejected) {
  Fixture f;
  f.cfg.image_width = 20;
  EXPECT_THROW(f.run(), ConfigError);
}

TEST(Parallel, MatchesSerial) {
  ::setenv("SIFUSE_THREADS", "3", 1);
  EXPECT_EQ(thread_cap(), 3u);
  std::vector<double> par(100), ser(100);
  parallel_for(100, [&](std::size_t i) { par[i] = std::sin(double(i)) * double(i); });
  for (std::size_t i = 0; i < 100; ++i) ser[i] = std::sin(double(i)) * double(i);
  EXPECT_EQ(par, ser);
  ::unsetenv("SIFUSE_THREADS");
}

TEST(Parallel, RethrowsLowestFailure) {
  ::setenv("SIFUSE_THREADS", "2", 1);
  try {
    parallel_for(10, [](std::size_t i) {
      if (i == 3 || i == 7) throw DomainError("fail " + std::to_string(i));
    });
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_STREQ(e.what(), "fail 3");
  }
  ::unsetenv("SIFUSE_THREADS");
}

TEST(Parallel, SuiteIndependentOfThreadCount) {
  const auto cfg = gen::tiny_config();
  const auto w = PipelineWeights::seeded(cfg);
  std::vector<StoredScene> scenes;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto rec = scene_record(cfg, i);
    scenes.push_back({rec, synthesize_scene(cfg, rec)});
  }
  ::setenv("SIFUSE_THREADS", "1", 1);
  const auto a = run_suite(cfg, w, scenes, RunOptions{});
  ::setenv("SIFUSE_THREADS", "2", 1);
  const auto b = run_suite(cfg, w, scenes, RunOptions{});
  ::unsetenv("SIFUSE_THREADS");
  EXPECT_EQ(detections_jsonl(a.predictions, true), detections_jsonl(b.predictions, true));
}

}  // namespace
}  // namespace sifuse

namespace sifuse {
namespace {

struct ToyFdlOutcome {
  double first = 0.0, last = 0.0, occupied_mean = 0.0, free_mean = 0.0, iou = 0.0;
  std::size_t occupied = 0;
};

ToyFdlOutcome toy_fdl(const RunConfig& cfg) {
  const auto w = PipelineWeights::seeded(cfg);
  const auto rec = scene_record(cfg, 0);
  const auto scene = synthesize_scene(cfg, rec);
  const auto r = run_scene(cfg, w, scene, scene_rng(rec.seed, rec.stream));
  ToyFdlOutcome o;
  o.first = r.fdl->steps.front().total;
  o.last = r.fdl->steps.back().total;
  double in = 0.0, out = 0.0;
  std::size_t inter = 0, uni = 0;
  const auto& m = r.fdl->corr_object.values();
  const auto& occ = scene.occ_object.values();
  for (std::size_t n = 0; n < m.size(); ++n) {
    const bool o_n = occ[n] > 0.5, p_n = m[n] > 0.5;
    (o_n ? in : out) += m[n];
    o.occupied += o_n;
    inter += o_n && p_n;
    uni += o_n || p_n;
  }
  o.occupied_mean = in / static_cast<double>(o.occupied);
  o.free_mean = out / static_cast<double>(m.size() - o.occupied);
  o.iou = static_cast<double>(inter) / static_cast<double>(uni);
  return o;
}

// Values from the first calibrated run, pinned so any drift shows up.
TEST(ToyFdl, PinnedSceneRegression) {
  const auto o = toy_fdl(load_config(std::string(SIFUSE_CONFIG_DIR) + "/toy_fdl.json"));
  EXPECT_NEAR(o.first, 4.6513807457966809, 1e-9);
  EXPECT_NEAR(o.last, 2.0098982447056657, 1e-9);
  EXPECT_NEAR(o.occupied_mean, 0.99326027452219579, 1e-9);
  EXPECT_NEAR(o.free_mean, 0.066496253335639258, 1e-9);
  EXPECT_EQ(o.occupied, 3u);
  EXPECT_EQ(o.iou, 1.0);
}

// The pinned draw holds a cyclist and a pedestrian, so only three cells are
// occupied. Two cars give the mask check more cells to get wrong.
TEST(ToyFdl, CarsOnlyVariantMeetsThresholds) {
  auto cfg = load_config(std::string(SIFUSE_CONFIG_DIR) + "/toy_fdl.json");
  cfg.scene.class_weights = {1.0, 0.0, 0.0, 0.0};
  const auto o = toy_fdl(cfg);
  EXPECT_GE(o.occupied, 15u);
  EXPECT_LE(o.last, 0.5 * o.first);
  EXPECT_GT(o.occupied_mean, o.free_mean);
  EXPECT_GE(o.iou, 0.5);
}

}  // namespace
}  // namespace sifuse
