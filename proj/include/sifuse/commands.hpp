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

#ifndef SIFUSE_COMMANDS_HPP_
#define SIFUSE_COMMANDS_HPP_

// Subcommands of the sifuse executable. Each returns a process exit code.

#include <algorithm>
#include <filesystem>
#include <limits>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "sifuse/config.hpp"
#include "sifuse/eval.hpp"
#include "sifuse/fdl.hpp"
#include "sifuse/losses.hpp"
#include "sifuse/parallel.hpp"
#include "sifuse/pipeline.hpp"
#include "sifuse/robustness.hpp"
#include "sifuse/scene_io.hpp"
#include "sifuse/tensor_io.hpp"

namespace sifuse {

struct DumpFlags {
  bool inputs = false;  // F2D, S, R, context, depth
  bool bev = false;     // F_RC and both image BEV grids
  bool cvc = false;     // m_o, m_b, v_o, v_b, F_Activated
  bool final = false;   // F_Final
};

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

inline SceneRecord scene_record(const RunConfig& cfg, std::size_t i) {
  return {fmt::format("scene_{:04d}", i), scene_seed(cfg.seed, i), streams::kSceneBase};
}

inline SceneTruth synthesize_scene(const RunConfig& cfg, const SceneRecord& rec) {
  SeededRng rng(rec.seed, rec.stream);
  return generate_scene(rng, cfg.scene, cfg.camera(), cfg.grid);
}

inline int cmd_synth(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  fs::create_directories(out_dir);
  Manifest manifest{cfg.seed, {}};
  std::vector<SceneTruth> scenes(cfg.num_scenes);
  for (std::size_t i = 0; i < cfg.num_scenes; ++i) manifest.scenes.push_back(scene_record(cfg, i));
  parallel_for(cfg.num_scenes, [&](std::size_t i) { scenes[i] = synthesize_scene(cfg, manifest.scenes[i]); });
  for (std::size_t i = 0; i < cfg.num_scenes; ++i) write_scene(out_dir / manifest.scenes[i].name, manifest.scenes[i], scenes[i]);
  write_manifest(out_dir, manifest);
  log << fmt::format("synth: wrote {} scenes to {}\n", cfg.num_scenes, out_dir.string());
  return 0;
}

inline std::vector<StoredScene> load_scenes(const fs::path& dir) {
  const auto manifest = read_manifest(dir);
  std::vector<StoredScene> scenes;
  for (const auto& rec : manifest.scenes) {
    auto s = read_scene(dir / rec.name);
    if (s.record.name != rec.name || s.record.seed != rec.seed || s.record.stream != rec.stream) {
      throw IoError("scene " + rec.name + " does not match its manifest entry");
    }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

inline std::string fdl_trace_csv(const FdlTrace& trace) {
  std::string out = "step,L_seg_o,L_seg_b,L_neg_o,L_neg_b,total\n";
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const auto& t = trace.steps[k];
    out += fmt::format("{},{},{},{},{},{}\n", k, t.seg_object, t.seg_background, t.neg_object, t.neg_background, t.total);
  }
  return out;
}

inline void write_dumps(const fs::path& dir, const PipelineResult& r, const DumpFlags& d) {
  if (!(d.inputs || d.bev || d.cvc || d.final)) return;
  fs::create_directories(dir);
  if (d.inputs) {
    write_tensor(dir / "f2d.sift", r.f2d);
    write_tensor(dir / "sparse_depth.sift", r.sparse_depth);
    write_tensor(dir / "radar_bev.sift", r.radar_bev);
    write_tensor(dir / "context.sift", r.context);
    write_tensor(dir / "depth.sift", r.depth);
  }
  if (d.bev) {
    write_tensor(dir / "rc_bev.sift", r.rc_bev);
    write_tensor(dir / "img_bev_lss.sift", r.img_bev_lss);
    write_tensor(dir / "img_bev_sample.sift", r.img_bev_sample);
  }
  if (d.cvc && r.cvc) {
    write_tensor(dir / "corr_object.sift", r.cvc->corr_object);
    write_tensor(dir / "corr_background.sift", r.cvc->corr_background);
    write_tensor(dir / "sim_object.sift", vector_grid(r.cvc->sim_object));
    write_tensor(dir / "sim_background.sift", vector_grid(r.cvc->sim_background));
    write_tensor(dir / "activated.sift", r.cvc->activated);
  }
  if (d.final) write_tensor(dir / "final.sift", r.final_bev);
}

inline int cmd_run(const RunConfig& cfg, const fs::path& scene_dir, const fs::path& out_dir, const RunOptions& opt,
                   const DumpFlags& dumps, std::ostream& log) {
  const auto scenes = load_scenes(scene_dir);
  for (const auto& s : scenes) check_scene_matches(cfg, s.truth);
  const auto weights = PipelineWeights::seeded(cfg);
  auto run = run_suite(cfg, weights, scenes, opt, [](std::size_t) { return std::optional<CalibratedCamera>{}; }, true);

  fs::create_directories(out_dir);
  write_text(out_dir / "predictions.jsonl", detections_jsonl(run.predictions, true));
  write_text(out_dir / "gt.jsonl", detections_jsonl(run.ground_truth, false));
  std::string losses = "frame,L_depth,L_seg_per,L_neg,L_seg_bev,total\n";
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& r = run.results[i];
    const auto& name = scenes[i].record.name;
    losses += fmt::format("{},{},{},{},{},{}\n", name, r.losses.depth, r.losses.seg_per, r.losses.neg, r.losses.seg_bev,
                          total_loss(r.losses, cfg.loss_weights));
    if (r.fdl) {
      fs::create_directories(out_dir / "fdl");
      write_text(out_dir / "fdl" / (name + ".csv"), fdl_trace_csv(*r.fdl));
    }
    write_dumps(out_dir / "dumps" / name, r, dumps);
  }
  write_text(out_dir / "losses.csv", losses);
  log << fmt::format("run: {} scenes, {} detections, recall@{} = {}\n", scenes.size(),
                     [&] {
                       std::size_t n = 0;
                       for (const auto& p : run.predictions) n += p.boxes.size();
                       return n;
                     }(),
                     cfg.recall_iou, recall_at_iou(run.predictions, run.ground_truth, cfg.recall_iou).recall());
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// Orders predictions like the ground-truth frames; frames without
/// predictions are empty.
inline std::vector<DetectionSet> align_frames(const std::vector<DetectionSet>& preds,
                                              const std::vector<DetectionSet>& gts) {
  std::map<std::string, const DetectionSet*> by_name;
  for (const auto& p : preds) {
    if (!by_name.emplace(p.frame, &p).second) throw IoError("duplicate prediction frame: " + p.frame);
  }
  std::vector<DetectionSet> out;
  std::size_t used = 0;
  for (const auto& g : gts) {
    auto it = by_name.find(g.frame);
    if (it == by_name.end()) {
      out.push_back({g.frame, {}});
    } else {
      out.push_back(*it->second);
      ++used;
    }
  }
  if (used != preds.size()) throw IoError("predictions contain frames missing from the ground truth");
  return out;
}

inline std::string eval_csv(const RunConfig& cfg, const std::vector<DetectionSet>& preds,
                            const std::vector<DetectionSet>& gts) {
  std::string out = "region,metric,mode,class,threshold,ap,tp,fp,fn,skipped\n";
  for (auto metric : {IouMetric::k3D, IouMetric::kBEV}) {
    ApOptions opts = cfg.ap;
    opts.metric = metric;
    for (const auto& rr : map_regions(preds, gts, cfg.grid, cfg.corridor, opts)) {
      for (const auto& c : rr.report.classes) {
        out += fmt::format("{},{},{},{},{},{},{},{},{},\n", region_name(rr.region), metric_name(metric),
                           mode_name(opts.mode), class_name(c.cls), c.threshold, optional_cell(c.ap), c.tp, c.fp, c.fn);
      }
      std::string skipped;
      for (auto c : rr.skipped) skipped += (skipped.empty() ? "" : ";") + std::string(class_name(c));
      out += fmt::format("{},{},{},mAP,,{},,,,{}\n", region_name(rr.region), metric_name(metric), mode_name(opts.mode),
                         optional_cell(rr.map), skipped);
    }
  }
  return out;
}

inline int cmd_eval(const RunConfig& cfg, const fs::path& pred_path, const fs::path& gt_path, const fs::path& out_csv,
                    std::ostream& log) {
  const auto gts = parse_detections_jsonl(read_text(gt_path));
  const auto preds = align_frames(parse_detections_jsonl(read_text(pred_path)), gts);
  const std::string csv = eval_csv(cfg, preds, gts);
  if (!out_csv.empty()) {
    if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
    write_text(out_csv, csv);
  }
  log << fmt::format("eval: {} frames, recall@{} = {}\n", gts.size(), cfg.recall_iou,
                     recall_at_iou(preds, gts, cfg.recall_iou).recall());
  if (out_csv.empty()) log << csv;
  return 0;
}

// ---------------------------------------------------------------------------
// robust
// ---------------------------------------------------------------------------

inline int cmd_robust(const RunConfig& cfg, const fs::path& scene_dir, const fs::path& out_csv, const RunFlags& flags,
                      std::ostream& log) {
  const auto scenes = load_scenes(scene_dir);
  for (const auto& s : scenes) check_scene_matches(cfg, s.truth);
  const auto rows = robustness_suite(cfg, PipelineWeights::seeded(cfg), scenes, flags);
  const std::string csv = robust_csv(rows);
  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  write_text(out_csv, csv);
  log << fmt::format("robust: {} rows over {} scenes\n", rows.size(), scenes.size());
  bool ok = true;
  for (const auto& r : rows) ok = ok && r.contract_ok;
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradCheckResult {
  std::string name;
  std::size_t dims = 0;
  double step = 0.0;
  double error = 0.0;         // max relative error as defined by fd_gradient_check
  double scaled_error = 0.0;  // same, with the objective rescaled so max |grad| = 1
  double tolerance = 0.0;
  bool pass() const { return error <= tolerance && scaled_error <= tolerance; }
};

using Objective = std::function<double(std::span<const double>)>;

inline GradCheckResult check_gradient(std::string name, const Objective& f, std::span<const double> x,
                                      std::span<const double> grad, double h, double tol) {
  GradCheckResult r;
  r.name = std::move(name);
  r.dims = x.size();
  r.step = h;
  r.tolerance = tol;
  r.error = fd_gradient_check(f, x, grad, h);
  double gmax = 0.0;
  for (double g : grad) gmax = std::max(gmax, std::abs(g));
  const double s = gmax > 0.0 ? 1.0 / gmax : 1.0;
  std::vector<double> scaled(grad.begin(), grad.end());
  for (auto& g : scaled) g *= s;
  r.scaled_error = fd_gradient_check([&](std::span<const double> y) { return s * f(y); }, x, scaled, h);
  return r;
}

/// Everything the FDL gradient checks need for one scene.
struct FdlCheckSetup {
  FdlProblem problem;
  FdlParameters params;
};

inline FdlCheckSetup fdl_check_setup(const RunConfig& cfg, std::size_t scene_index = 0) {
  const auto rec = scene_record(cfg, scene_index);
  const auto scene = synthesize_scene(cfg, rec);
  const auto w = PipelineWeights::seeded(cfg);
  RunOptions opt;
  opt.flags.cvc = false;
  opt.flags.iea = false;
  const auto r = run_scene(cfg, w, scene, scene_rng(rec.seed, rec.stream), opt);
  FdlCheckSetup s{make_fdl_problem(r.rc_bev, r.proposals, w, scene, cfg.loss_weights), initial_fdl_parameters(w)};
  // Move away from the tiny token initialization so every path carries signal.
  SeededRng rng = SeededRng(cfg.seed).fork(4242);
  for (auto& v : s.params.token) v = rng.normal(0.0, 0.5);
  return s;
}

/// Smallest distance, in units of an encoder weight step, between any ReLU
/// pre-activation of the two encoders and the kink at zero. A central
/// difference with a step below this margin never crosses a kink.
inline double relu_kink_margin(const FeatureGrid& rc, const FdlParameters& p) {
  double margin = std::numeric_limits<double>::infinity();
  for (const Dense* enc : {&p.object, &p.background}) {
    const auto pre = apply_per_cell(rc, *enc, false);
    for (std::size_t i = 0; i < rc.dim(0); ++i) {
      for (std::size_t j = 0; j < rc.dim(1); ++j) {
        auto in = rc.cell(i, j);
        double scale = 0.0;
        for (double v : in) scale = std::max(scale, std::abs(v));
        if (scale == 0.0) continue;
        for (double v : pre.cell(i, j)) margin = std::min(margin, std::abs(v) / scale);
      }
    }
  }
  return margin;
}

/// All registered analytic gradients.
inline std::vector<GradCheckResult> gradient_suite(const RunConfig& cfg) {
  std::vector<GradCheckResult> out;
  SeededRng rng = SeededRng(cfg.seed).fork(4243);
  const std::size_t c = cfg.channels;

  {
    std::vector<double> v(c);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    const auto lv = loss_neg(v);
    out.push_back(check_gradient("loss_neg", [](std::span<const double> y) { return loss_neg(y).value; }, v, lv.grad,
                                 1e-5, 1e-6));
  }
  {
    const std::size_t n = 64;
    std::vector<double> p(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform(0.05, 0.95);
      g[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
    }
    const auto lv = loss_seg(p, g);
    out.push_back(check_gradient(
        "loss_seg", [&](std::span<const double> y) { return loss_seg(y, g).value; }, p, lv.grad, 1e-6, 1e-5));
  }

  const auto setup = fdl_check_setup(cfg);
  const auto& problem = setup.problem;
  const auto full = evaluate_fdl(problem, setup.params, true);
  const auto x0 = setup.params.pack();
  const std::size_t nt = setup.params.token.size(), nw = setup.params.object.weight.size();
  // Checks one block of the packed parameter vector.
  // Encoder weights move ReLU pre-activations; keep the step inside the
  // nearest kink so the difference quotient sees a smooth function.
  const double enc_step = std::clamp(0.25 * relu_kink_margin(problem.rc_bev, setup.params), 1e-9, 1e-6);
  const auto block = [&](std::string name, std::size_t begin, std::size_t len, double h) {
    std::vector<double> x(x0.begin() + static_cast<long>(begin), x0.begin() + static_cast<long>(begin + len));
    std::vector<double> g(full.grad.begin() + static_cast<long>(begin), full.grad.begin() + static_cast<long>(begin + len));
    const Objective f = [&, begin](std::span<const double> y) {
      std::vector<double> p = x0;
      std::copy(y.begin(), y.end(), p.begin() + static_cast<long>(begin));
      FdlParameters q = setup.params;
      q.unpack(p);
      return evaluate_fdl(problem, q, false).terms.total;
    };
    out.push_back(check_gradient(std::move(name), f, x, g, h, 1e-4));
  };
  block("fdl_token", 0, nt, 1e-6);
  block("fdl_object_encoder", nt, nw, enc_step);
  block("fdl_background_encoder", nt + nw, nw, enc_step);

  {
    // Token aggregation alone, through a random linear read-out.
    std::vector<double> probe(c);
    for (auto& v : probe) v = rng.normal();
    const auto f = [&](std::span<const double> t) { return dot(token_aggregate(t, problem.proposals, problem.attention).output, probe); };
    const auto g = token_aggregate_backward(setup.params.token, problem.proposals, problem.attention, probe);
    out.push_back(check_gradient("token_aggregate", f, setup.params.token, g, 1e-6, 1e-4));
  }
  return out;
}

inline std::string gradcheck_csv(const std::vector<GradCheckResult>& rows) {
  std::string out = "name,dims,step,max_rel_error,scaled_max_rel_error,tolerance,pass\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{:.3e},{:.3e},{:.3e},{:.0e},{}\n", r.name, r.dims, r.step, r.error, r.scaled_error,
                       r.tolerance, r.pass() ? 1 : 0);
  }
  return out;
}

inline int cmd_gradcheck(const RunConfig& cfg, const fs::path& out_csv, std::ostream& log) {
  const auto rows = gradient_suite(cfg);
  const auto csv = gradcheck_csv(rows);
  if (!out_csv.empty()) {
    if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
    write_text(out_csv, csv);
  }
  log << csv;
  for (const auto& r : rows)
    if (!r.pass()) return 1;
  return 0;
}

}  // namespace sifuse

#endif  // SIFUSE_COMMANDS_HPP_
