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

#ifndef SIFUSE_CONFIG_HPP_
#define SIFUSE_CONFIG_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <vector>

#include "sifuse/errors.hpp"
#include "sifuse/eval.hpp"
#include "sifuse/geometry.hpp"
#include "sifuse/losses.hpp"
#include "sifuse/scene_synth.hpp"
#include "sifuse/view_transform.hpp"

namespace sifuse {

using Json = nlohmann::json;

struct CalibrationSetting {
  double max_angle_deg = 0.0;
  double max_trans = 0.0;
  friend bool operator==(const CalibrationSetting&, const CalibrationSetting&) = default;
};

enum class Dropout { kNone, kCameraOnly, kRadarOnly };

inline std::string_view dropout_name(Dropout d) {
  switch (d) {
    case Dropout::kNone: return "both";
    case Dropout::kCameraOnly: return "camera_only";
    case Dropout::kRadarOnly: return "radar_only";
  }
  return "both";
}

inline Dropout parse_dropout(std::string_view s) {
  for (auto d : {Dropout::kNone, Dropout::kCameraOnly, Dropout::kRadarOnly})
    if (dropout_name(d) == s) return d;
  throw ConfigError("unknown dropout mode: " + std::string(s));
}

struct RobustSettings {
  std::vector<CalibrationSetting> calibration = {{0, 0}, {2, 0.2}, {5, 0.5}, {10, 1.0}, {20, 1.5}};
  std::vector<Dropout> dropout = {Dropout::kNone, Dropout::kCameraOnly, Dropout::kRadarOnly};
  // 0 stands for "no depth-bin selection".
  std::vector<double> keep_fractions = {0.0, 0.25, 0.5, 1.0};
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::size_t num_scenes = 10;
  VoxelGrid grid;
  DepthBinning binning;
  std::size_t channels = 16;
  std::size_t image_height = 32;
  std::size_t image_width = 48;
  Vec3 camera_mount = {0.0, 0.0, 0.4};
  SSIConfig ssi;
  LossWeights loss_weights;
  SceneSpec scene;
  ImageFeatureParams image_features;
  double decode_gain = 12.0;
  double radar_gain = 3.0;
  double proposal_sigma_px = 1.0;
  double proposal_min_score = 0.5;
  double encoder_gain = 0.5;
  double fusion_lss_gain = 0.05;
  double fusion_sample_gain = 100.0;
  double fusion_radar_gain = 10.0;
  std::size_t fdl_steps = 200;
  double fdl_learning_rate = 0.05;
  double detect_threshold = 0.5;
  ApOptions ap;
  DrivingCorridor corridor;
  double recall_iou = 0.25;
  RobustSettings robust;

  CalibratedCamera camera() const { return forward_camera(image_height, image_width, camera_mount); }

  /// Rejects inconsistent shapes and out-of-range values.
  void validate() const {
    try {
      grid.validate();
      binning.validate();
      ImageFeatureLayout{channels}.validate();
      camera().validate();
      loss_weights.validate();
      ssi.keep_count(binning.bins);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    if (image_height < 2 || image_width < 2) throw ConfigError("image must be at least 2x2");
    if (!(binning.d_min > 0.0)) throw ConfigError("binning.d_min must be positive");
    if (std::abs(binning.spacing() * static_cast<double>(binning.bins) - (binning.d_max - binning.d_min)) > 1e-9) {
      throw ConfigError("binning spacing inconsistent");
    }
    for (auto [lo, hi, name] : {std::tuple{grid.x_min, grid.x_max, "x"}, std::tuple{grid.y_min, grid.y_max, "y"},
                                std::tuple{grid.z_min, grid.z_max, "z"}}) {
      const double n = (hi - lo) / grid.voxel_size;
      if (!(hi > lo) || std::abs(n - std::round(n)) > 1e-6) {
        throw ConfigError(std::string("grid ") + name + " range is not a whole number of voxels");
      }
    }
    if (scene.num_boxes > 0) {
      if (!(scene.place_x_max > scene.place_x_min)) throw ConfigError("scene placement x range is empty");
      if (scene.place_x_min < grid.x_min || scene.place_x_max > grid.x_max) {
        throw ConfigError("scene placement x range leaves the grid");
      }
      if (scene.place_y_abs < 0.0 || -scene.place_y_abs < grid.y_min || scene.place_y_abs > grid.y_max) {
        throw ConfigError("scene placement y range leaves the grid");
      }
      double total = 0.0;
      for (double w : scene.class_weights) {
        if (w < 0.0) throw ConfigError("class weights must be non-negative");
        total += w;
      }
      if (!(total > 0.0)) throw ConfigError("class weights sum to zero");
    }
    if (scene.jitter_sigma < 0.0) throw ConfigError("scene jitter must be non-negative");
    if (proposal_sigma_px < 0.0) throw ConfigError("proposal jitter must be non-negative");
    if (!(proposal_min_score >= 0.0 && proposal_min_score <= 1.0)) throw ConfigError("proposal min score outside [0,1]");
    if (!(fdl_learning_rate >= 0.0) || !std::isfinite(fdl_learning_rate)) throw ConfigError("fdl learning rate invalid");
    if (!(detect_threshold > 0.0 && detect_threshold < 1.0)) throw ConfigError("detect threshold must be in (0,1)");
    if (!(recall_iou > 0.0 && recall_iou <= 1.0)) throw ConfigError("recall IoU must be in (0,1]");
    for (double t : ap.thresholds)
      if (!(t > 0.0 && t <= 1.0)) throw ConfigError("AP thresholds must be in (0,1]");
    for (const auto& c : robust.calibration)
      if (c.max_angle_deg < 0.0 || c.max_trans < 0.0) throw ConfigError("calibration bounds must be non-negative");
    for (double k : robust.keep_fractions)
      if (!(k >= 0.0 && k <= 1.0)) throw ConfigError("keep fractions must be in [0,1]");
  }
};

namespace config_detail {

// Reads `key` from `j` into `out` if present.
template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw ConfigError("unknown config key '" + k + "' in " + where);
  }
}

}  // namespace config_detail

inline RunConfig parse_config(const Json& j) {
  using config_detail::check_keys;
  using config_detail::read;
  RunConfig c;
  check_keys(j,
             {"seed", "num_scenes", "grid", "binning", "channels", "image", "camera_mount", "ssi", "loss_weights",
              "scene", "image_features", "heads", "proposals", "fusion", "fdl", "detect", "eval", "robust"},
             "config");
  read(j, "seed", c.seed);
  read(j, "num_scenes", c.num_scenes);
  read(j, "channels", c.channels);
  read(j, "camera_mount", c.camera_mount);
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    check_keys(g, {"x_min", "x_max", "y_min", "y_max", "z_min", "z_max", "voxel_size"}, "grid");
    read(g, "x_min", c.grid.x_min);
    read(g, "x_max", c.grid.x_max);
    read(g, "y_min", c.grid.y_min);
    read(g, "y_max", c.grid.y_max);
    read(g, "z_min", c.grid.z_min);
    read(g, "z_max", c.grid.z_max);
    read(g, "voxel_size", c.grid.voxel_size);
  }
  if (j.contains("binning")) {
    const auto& b = j["binning"];
    check_keys(b, {"d_min", "d_max", "bins"}, "binning");
    read(b, "d_min", c.binning.d_min);
    read(b, "d_max", c.binning.d_max);
    read(b, "bins", c.binning.bins);
  }
  if (j.contains("image")) {
    check_keys(j["image"], {"height", "width"}, "image");
    read(j["image"], "height", c.image_height);
    read(j["image"], "width", c.image_width);
  }
  if (j.contains("ssi")) {
    const auto& s = j["ssi"];
    check_keys(s, {"keep_fraction", "mask_source"}, "ssi");
    read(s, "keep_fraction", c.ssi.keep_fraction);
    std::string src = "oracle";
    read(s, "mask_source", src);
    if (src == "oracle") {
      c.ssi.mask_source = MaskSource::kOracle;
    } else if (src == "predicted") {
      c.ssi.mask_source = MaskSource::kPredicted;
    } else {
      throw ConfigError("ssi.mask_source must be 'oracle' or 'predicted'");
    }
  }
  if (j.contains("loss_weights")) {
    const auto& l = j["loss_weights"];
    check_keys(l, {"lambda1", "lambda2", "lambda3"}, "loss_weights");
    read(l, "lambda1", c.loss_weights.lambda1);
    read(l, "lambda2", c.loss_weights.lambda2);
    read(l, "lambda3", c.loss_weights.lambda3);
  }
  if (j.contains("scene")) {
    const auto& s = j["scene"];
    check_keys(s,
               {"num_boxes", "points_per_box", "clutter_points", "jitter_sigma", "min_separation", "place_x_min",
                "place_x_max", "place_y_abs", "ground_z", "require_visible", "class_weights", "max_attempts"},
               "scene");
    read(s, "num_boxes", c.scene.num_boxes);
    read(s, "points_per_box", c.scene.points_per_box);
    read(s, "clutter_points", c.scene.clutter_points);
    read(s, "jitter_sigma", c.scene.jitter_sigma);
    read(s, "min_separation", c.scene.min_separation);
    read(s, "place_x_min", c.scene.place_x_min);
    read(s, "place_x_max", c.scene.place_x_max);
    read(s, "place_y_abs", c.scene.place_y_abs);
    read(s, "ground_z", c.scene.ground_z);
    read(s, "require_visible", c.scene.require_visible);
    read(s, "class_weights", c.scene.class_weights);
    read(s, "max_attempts", c.scene.max_attempts);
  }
  if (j.contains("image_features")) {
    const auto& f = j["image_features"];
    check_keys(f, {"depth_noise", "texture_gain", "code_width"}, "image_features");
    read(f, "depth_noise", c.image_features.depth_noise);
    read(f, "texture_gain", c.image_features.texture_gain);
    read(f, "code_width", c.image_features.code_width);
  }
  if (j.contains("heads")) {
    check_keys(j["heads"], {"decode_gain", "radar_gain", "encoder_gain"}, "heads");
    read(j["heads"], "decode_gain", c.decode_gain);
    read(j["heads"], "radar_gain", c.radar_gain);
    read(j["heads"], "encoder_gain", c.encoder_gain);
  }
  if (j.contains("proposals")) {
    check_keys(j["proposals"], {"sigma_px", "min_score"}, "proposals");
    read(j["proposals"], "sigma_px", c.proposal_sigma_px);
    read(j["proposals"], "min_score", c.proposal_min_score);
  }
  if (j.contains("fusion")) {
    check_keys(j["fusion"], {"lss_gain", "sample_gain", "radar_gain"}, "fusion");
    read(j["fusion"], "lss_gain", c.fusion_lss_gain);
    read(j["fusion"], "sample_gain", c.fusion_sample_gain);
    read(j["fusion"], "radar_gain", c.fusion_radar_gain);
  }
  if (j.contains("fdl")) {
    check_keys(j["fdl"], {"steps", "learning_rate"}, "fdl");
    read(j["fdl"], "steps", c.fdl_steps);
    read(j["fdl"], "learning_rate", c.fdl_learning_rate);
  }
  if (j.contains("detect")) {
    check_keys(j["detect"], {"threshold"}, "detect");
    read(j["detect"], "threshold", c.detect_threshold);
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    check_keys(e, {"thresholds", "mode", "metric", "corridor", "recall_iou"}, "eval");
    read(e, "thresholds", c.ap.thresholds);
    read(e, "recall_iou", c.recall_iou);
    if (e.contains("mode")) {
      const auto m = e["mode"].get<std::string>();
      if (m == "R40") {
        c.ap.mode = ApMode::kR40;
      } else if (m == "R11") {
        c.ap.mode = ApMode::kR11;
      } else {
        throw ConfigError("eval.mode must be R40 or R11");
      }
    }
    if (e.contains("metric")) {
      const auto m = e["metric"].get<std::string>();
      if (m == "3D") {
        c.ap.metric = IouMetric::k3D;
      } else if (m == "BEV") {
        c.ap.metric = IouMetric::kBEV;
      } else {
        throw ConfigError("eval.metric must be 3D or BEV");
      }
    }
    if (e.contains("corridor")) {
      const auto& k = e["corridor"];
      check_keys(k, {"x_min", "x_max", "y_half_width"}, "eval.corridor");
      read(k, "x_min", c.corridor.x_min);
      read(k, "x_max", c.corridor.x_max);
      read(k, "y_half_width", c.corridor.y_half_width);
    }
  }
  if (j.contains("robust")) {
    const auto& r = j["robust"];
    check_keys(r, {"calibration", "dropout", "keep_fractions"}, "robust");
    if (r.contains("calibration")) {
      c.robust.calibration.clear();
      for (const auto& s : r["calibration"]) {
        if (!s.is_array() || s.size() != 2) throw ConfigError("robust.calibration entries are [deg, meters]");
        c.robust.calibration.push_back({s[0].get<double>(), s[1].get<double>()});
      }
    }
    if (r.contains("dropout")) {
      c.robust.dropout.clear();
      for (const auto& s : r["dropout"]) c.robust.dropout.push_back(parse_dropout(s.get<std::string>()));
    }
    read(r, "keep_fractions", c.robust.keep_fractions);
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(j);
}

inline Json grid_json(const VoxelGrid& g) {
  return {{"x_min", g.x_min}, {"x_max", g.x_max}, {"y_min", g.y_min}, {"y_max", g.y_max},
          {"z_min", g.z_min}, {"z_max", g.z_max}, {"voxel_size", g.voxel_size}};
}

}  // namespace sifuse

#endif  // SIFUSE_CONFIG_HPP_
