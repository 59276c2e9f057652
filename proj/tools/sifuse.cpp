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

// Command-line front end: synth | run | eval | robust | gradcheck.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sifuse/commands.hpp"

namespace {

struct AblationFlags {
  bool no_ssi = false, no_cvc = false, no_iea = false, no_dgw = false, no_sgw = false;
  bool no_fdl = false, no_gem = false, no_sem = false, no_det2d = false;

  void attach(CLI::App* app) {
    app->add_flag("--no-ssi", no_ssi, "Disable sparse scene integration (SGW and DGW)");
    app->add_flag("--no-cvc", no_cvc, "Disable cross-view correlation");
    app->add_flag("--no-iea", no_iea, "Disable instance enhance attention");
    app->add_flag("--no-dgw", no_dgw, "Disable depth-guided weighting");
    app->add_flag("--no-sgw", no_sgw, "Disable segmentation-guided weighting");
    app->add_flag("--no-fdl", no_fdl, "Keep the CVC token and encoders untrained");
    app->add_flag("--no-gem", no_gem, "Disable the geometric enhancement branch");
    app->add_flag("--no-sem", no_sem, "Disable the semantic enhancement branch");
    app->add_flag("--no-det2d", no_det2d, "Run CVC without 2D proposals");
  }

  sifuse::RunFlags flags() const {
    sifuse::RunFlags f;
    f.ssi = !no_ssi;
    f.cvc = !no_cvc;
    f.iea = !no_iea;
    f.dgw = !no_dgw;
    f.sgw = !no_sgw;
    f.fdl = !no_fdl;
    f.gem = !no_gem;
    f.sem = !no_sem;
    f.det2d = !no_det2d;
    return f;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radar-camera fusion reference harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out, scenes, pred, gt;
  sifuse::DumpFlags dumps;
  AblationFlags ablation;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the config seed");
  };

  auto* synth = app.add_subcommand("synth", "Generate synthetic scenes");
  common(synth);
  synth->add_option("--out", out, "Output scene directory")->required();

  auto* run = app.add_subcommand("run", "Run the pipeline on a scene directory");
  common(run);
  run->add_option("--scenes", scenes, "Scene directory from synth")->required()->check(CLI::ExistingDirectory);
  run->add_option("--out", out, "Output directory")->required();
  run->add_flag("--dump-inputs", dumps.inputs, "Dump F2D, S, R, context and depth");
  run->add_flag("--dump-bev", dumps.bev, "Dump F_RC and both image BEV grids");
  run->add_flag("--dump-cvc", dumps.cvc, "Dump correlation maps, similarity vectors and F_Activated");
  run->add_flag("--dump-final", dumps.final, "Dump F_Final");
  ablation.attach(run);

  auto* eval = app.add_subcommand("eval", "Evaluate predictions against ground truth");
  common(eval);
  eval->add_option("--pred", pred, "Predictions JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", gt, "Ground-truth JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out, "Report CSV (stdout if omitted)");

  auto* robust = app.add_subcommand("robust", "Calibration, dropout and depth-bin sweeps");
  common(robust);
  robust->add_option("--scenes", scenes, "Scene directory from synth")->required()->check(CLI::ExistingDirectory);
  robust->add_option("--out", out, "Report CSV")->required();
  ablation.attach(robust);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of every analytic gradient");
  common(gradcheck);
  gradcheck->add_option("--out", out, "Report CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = sifuse::load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.validate();
    }
    if (synth->parsed()) return sifuse::cmd_synth(cfg, out, std::cout);
    if (run->parsed()) {
      sifuse::RunOptions opt;
      opt.flags = ablation.flags();
      return sifuse::cmd_run(cfg, scenes, out, opt, dumps, std::cout);
    }
    if (eval->parsed()) return sifuse::cmd_eval(cfg, pred, gt, out, std::cout);
    if (robust->parsed()) return sifuse::cmd_robust(cfg, scenes, out, ablation.flags(), std::cout);
    if (gradcheck->parsed()) return sifuse::cmd_gradcheck(cfg, out, std::cout);
  } catch (const sifuse::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sifuse::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "filesystem error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
