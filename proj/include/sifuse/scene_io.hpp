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

#ifndef SIFUSE_SCENE_IO_HPP_
#define SIFUSE_SCENE_IO_HPP_

// On-disk formats: calibration JSON, scene directories, prediction JSONL.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "sifuse/config.hpp"
#include "sifuse/errors.hpp"
#include "sifuse/eval.hpp"
#include "sifuse/geometry.hpp"
#include "sifuse/scene_synth.hpp"
#include "sifuse/tensor_io.hpp"

namespace sifuse {

namespace fs = std::filesystem;

inline Json camera_json(const CalibratedCamera& cam) {
  return {{"fx", cam.fx},
          {"fy", cam.fy},
          {"cx", cam.cx},
          {"cy", cam.cy},
          {"R", cam.rotation},
          {"t", cam.translation},
          {"H_img", cam.height},
          {"W_img", cam.width}};
}

inline CalibratedCamera camera_from_json(const Json& j) {
  CalibratedCamera cam;
  try {
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.rotation = j.at("R").get<Mat3>();
    cam.translation = j.at("t").get<Vec3>();
    cam.height = j.at("H_img").get<std::size_t>();
    cam.width = j.at("W_img").get<std::size_t>();
  } catch (const Json::exception& e) {
    throw IoError(std::string("calibration: ") + e.what());
  }
  cam.validate();
  return cam;
}

inline Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline Json box_json(const Box3D& b, bool with_score) {
  Json j = {{"c", b.center}, {"s", b.size}, {"yaw", b.yaw}, {"cls", class_name(b.cls)}};
  if (with_score) j["score"] = b.score;
  return j;
}

inline Box3D box_from_json(const Json& j) {
  Box3D b;
  try {
    b.center = j.at("c").get<Vec3>();
    b.size = j.at("s").get<Vec3>();
    b.yaw = j.at("yaw").get<double>();
    b.cls = parse_class(j.at("cls").get<std::string>());
    b.score = j.contains("score") ? j["score"].get<double>() : 1.0;
  } catch (const Json::exception& e) {
    throw IoError(std::string("box: ") + e.what());
  }
  return b;
}

inline Json box2d_json(const Box2D& b) {
  return {{"u_min", b.u_min}, {"v_min", b.v_min}, {"u_max", b.u_max}, {"v_max", b.v_max},
          {"cls", class_name(b.cls)}, {"score", b.score}, {"box_index", b.box_index}};
}

inline Box2D box2d_from_json(const Json& j) {
  Box2D b;
  b.u_min = j.at("u_min").get<double>();
  b.v_min = j.at("v_min").get<double>();
  b.u_max = j.at("u_max").get<double>();
  b.v_max = j.at("v_max").get<double>();
  b.cls = parse_class(j.at("cls").get<std::string>());
  b.score = j.at("score").get<double>();
  b.box_index = j.at("box_index").get<int>();
  return b;
}

// ---------------------------------------------------------------------------
// Radar CSV
// ---------------------------------------------------------------------------

inline std::string radar_csv(const RadarPointCloud& points) {
  std::string out = "x,y,z,rcs,v_rc\n";
  for (const auto& p : points) out += fmt::format("{},{},{},{},{}\n", p.x, p.y, p.z, p.rcs, p.v_rc);
  return out;
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw IoError(where + ": bad number '" + std::string(s) + "'");
  return v;
}

inline RadarPointCloud parse_radar_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "x,y,z,rcs,v_rc") throw IoError("radar CSV: bad header");
  RadarPointCloud pts;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::array<double, 5> v{};
    std::size_t start = 0;
    for (std::size_t k = 0; k < 5; ++k) {
      const auto comma = line.find(',', start);
      if ((k < 4) != (comma != std::string::npos)) throw IoError(fmt::format("radar CSV line {}: need 5 columns", lineno));
      const auto field = std::string_view(line).substr(start, k < 4 ? comma - start : std::string::npos);
      v[k] = parse_double(field, fmt::format("radar CSV line {}", lineno));
      start = comma + 1;
    }
    pts.push_back({v[0], v[1], v[2], v[3], v[4]});
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Scene directories
// ---------------------------------------------------------------------------

struct SceneRecord {
  std::string name;
  std::uint64_t seed = 0;
  std::uint32_t stream = 0;
};

struct StoredScene {
  SceneRecord record;
  SceneTruth truth;
};

inline void write_scene(const fs::path& dir, const SceneRecord& rec, const SceneTruth& s) {
  fs::create_directories(dir);
  Json j;
  j["name"] = rec.name;
  j["seed"] = rec.seed;
  j["stream"] = rec.stream;
  j["grid"] = grid_json(s.grid);
  j["calibration"] = camera_json(s.camera);
  j["boxes"] = Json::array();
  for (const auto& b : s.boxes) j["boxes"].push_back(box_json(b, false));
  j["boxes2d"] = Json::array();
  for (const auto& b : s.boxes2d) j["boxes2d"].push_back(box2d_json(b));
  j["radar_owner"] = s.radar_owner;
  write_text(dir / "scene.json", j.dump(2) + "\n");
  write_text(dir / "calib.json", camera_json(s.camera).dump(2) + "\n");
  write_text(dir / "radar.csv", radar_csv(s.radar));
  write_tensor(dir / "gt_depth.sift", s.gt_depth);
  write_tensor(dir / "fg_mask.sift", s.fg_mask);
  write_tensor(dir / "instance_map.sift", s.instance_map);
  write_tensor(dir / "occ_object.sift", s.occ_object);
  write_tensor(dir / "occ_background.sift", s.occ_background);
}

// Restores axis names dropped by the tensor format.
inline FeatureGrid named(FeatureGrid g, std::initializer_list<const char*> names) {
  std::vector<Axis> axes = g.axes();
  if (axes.size() != names.size()) throw IoError("tensor rank mismatch");
  std::size_t i = 0;
  for (const char* n : names) axes[i++].name = n;
  return FeatureGrid(std::move(axes), g.values());
}

inline StoredScene read_scene(const fs::path& dir) {
  const Json j = read_json(dir / "scene.json");
  StoredScene out;
  try {
    out.record = {j.at("name").get<std::string>(), j.at("seed").get<std::uint64_t>(),
                  j.at("stream").get<std::uint32_t>()};
    const auto& g = j.at("grid");
    auto& grid = out.truth.grid;
    grid.x_min = g.at("x_min");
    grid.x_max = g.at("x_max");
    grid.y_min = g.at("y_min");
    grid.y_max = g.at("y_max");
    grid.z_min = g.at("z_min");
    grid.z_max = g.at("z_max");
    grid.voxel_size = g.at("voxel_size");
    for (const auto& b : j.at("boxes")) out.truth.boxes.push_back(box_from_json(b));
    for (const auto& b : j.at("boxes2d")) out.truth.boxes2d.push_back(box2d_from_json(b));
    out.truth.radar_owner = j.at("radar_owner").get<std::vector<int>>();
  } catch (const Json::exception& e) {
    throw IoError(dir.string() + "/scene.json: " + e.what());
  }
  out.truth.camera = camera_from_json(read_json(dir / "calib.json"));
  out.truth.radar = parse_radar_csv(read_text(dir / "radar.csv"));
  if (out.truth.radar.size() != out.truth.radar_owner.size()) throw IoError("radar owner count mismatch");
  out.truth.gt_depth = named(read_tensor(dir / "gt_depth.sift"), {"H", "W"});
  out.truth.fg_mask = named(read_tensor(dir / "fg_mask.sift"), {"H", "W"});
  out.truth.instance_map = named(read_tensor(dir / "instance_map.sift"), {"H", "W"});
  const auto& grid = out.truth.grid;
  const auto bev = [&](FeatureGrid g) {
    auto m = grid.bev_map();
    if (g.shape() != m.shape()) throw IoError("occupancy shape does not match the scene grid");
    return FeatureGrid(m.axes(), g.values());
  };
  out.truth.occ_object = bev(read_tensor(dir / "occ_object.sift"));
  out.truth.occ_background = bev(read_tensor(dir / "occ_background.sift"));
  return out;
}

struct Manifest {
  std::uint64_t seed = 0;
  std::vector<SceneRecord> scenes;
};

inline void write_manifest(const fs::path& dir, const Manifest& m) {
  Json j;
  j["seed"] = m.seed;
  j["scenes"] = Json::array();
  for (const auto& s : m.scenes) j["scenes"].push_back({{"name", s.name}, {"seed", s.seed}, {"stream", s.stream}});
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

inline Manifest read_manifest(const fs::path& dir) {
  const Json j = read_json(dir / "manifest.json");
  Manifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("scenes"))
      m.scenes.push_back({s.at("name").get<std::string>(), s.at("seed").get<std::uint64_t>(),
                          s.at("stream").get<std::uint32_t>()});
  } catch (const Json::exception& e) {
    throw IoError(std::string("manifest: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Predictions / ground truth JSONL
// ---------------------------------------------------------------------------

inline std::string detections_jsonl(const std::vector<DetectionSet>& sets, bool with_score) {
  std::string out;
  for (const auto& s : sets) {
    Json j;
    j["frame"] = s.frame;
    j["boxes"] = Json::array();
    for (const auto& b : s.boxes) j["boxes"].push_back(box_json(b, with_score));
    out += j.dump() + "\n";
  }
  return out;
}

inline std::vector<DetectionSet> parse_detections_jsonl(const std::string& text) {
  std::vector<DetectionSet> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      DetectionSet s;
      s.frame = j.at("frame").is_string() ? j["frame"].get<std::string>() : j["frame"].dump();
      for (const auto& b : j.at("boxes")) s.boxes.push_back(box_from_json(b));
      out.push_back(std::move(s));
    } catch (const Json::exception& e) {
      throw IoError(fmt::format("JSONL line {}: {}", lineno, e.what()));
    }
  }
  return out;
}

}  // namespace sifuse

#endif  // SIFUSE_SCENE_IO_HPP_
