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

#ifndef SIFUSE_SCENE_SYNTH_HPP_
#define SIFUSE_SCENE_SYNTH_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sifuse/errors.hpp"
#include "sifuse/geometry.hpp"
#include "sifuse/numerics.hpp"

namespace sifuse {

enum class ObjectClass { kCar = 0, kPedestrian = 1, kCyclist = 2, kTruck = 3 };
inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::array<ObjectClass, kNumClasses> kAllClasses = {
    ObjectClass::kCar, ObjectClass::kPedestrian, ObjectClass::kCyclist, ObjectClass::kTruck};

inline std::string_view class_name(ObjectClass c) {
  switch (c) {
    case ObjectClass::kCar: return "car";
    case ObjectClass::kPedestrian: return "pedestrian";
    case ObjectClass::kCyclist: return "cyclist";
    case ObjectClass::kTruck: return "truck";
  }
  return "car";
}

inline ObjectClass parse_class(std::string_view name) {
  for (auto c : kAllClasses) {
    if (class_name(c) == name) return c;
  }
  throw DomainError("unknown object class: " + std::string(name));
}

/// Oriented 3D box in the radar frame. `center` is the geometric center,
/// `size` is (length along heading, width, height), yaw rotates about +z.
struct Box3D {
  Vec3 center = {0, 0, 0};
  Vec3 size = {1, 1, 1};
  double yaw = 0.0;
  ObjectClass cls = ObjectClass::kCar;
  double score = 1.0;

  bool valid() const {
    return size[0] > 0.0 && size[1] > 0.0 && size[2] > 0.0 && yaw > -std::numbers::pi && yaw <= std::numbers::pi;
  }

  double bev_area() const { return size[0] * size[1]; }
  double volume() const { return size[0] * size[1] * size[2]; }
  double z_bottom() const { return center[2] - size[2] / 2.0; }
  double z_top() const { return center[2] + size[2] / 2.0; }

  // Footprint corners, counter-clockwise.
  std::array<std::array<double, 2>, 4> bev_corners() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double hl = size[0] / 2.0, hw = size[1] / 2.0;
    const std::array<std::array<double, 2>, 4> local = {{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
    std::array<std::array<double, 2>, 4> out{};
    for (std::size_t i = 0; i < 4; ++i) {
      out[i] = {center[0] + c * local[i][0] - s * local[i][1], center[1] + s * local[i][0] + c * local[i][1]};
    }
    return out;
  }

  std::array<Vec3, 8> corners() const {
    std::array<Vec3, 8> out{};
    const auto bev = bev_corners();
    for (std::size_t i = 0; i < 4; ++i) {
      out[i] = {bev[i][0], bev[i][1], z_bottom()};
      out[i + 4] = {bev[i][0], bev[i][1], z_top()};
    }
    return out;
  }

  // Inclusive footprint test.
  bool contains_bev(double x, double y) const {
    const double dx = x - center[0], dy = y - center[1];
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
    return std::abs(lx) <= size[0] / 2.0 && std::abs(ly) <= size[1] / 2.0;
  }

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

struct RadarPoint {
  double x = 0, y = 0, z = 0;
  double rcs = 0;  // dBsm
  double v_rc = 0;  // radial velocity, m/s

  Vec3 position() const { return {x, y, z}; }
  friend bool operator==(const RadarPoint&, const RadarPoint&) = default;
};

using RadarPointCloud = std::vector<RadarPoint>;

/// Image-space box (pixel-center coordinates). `box_index` refers to the 3D box
/// it was projected from, or -1.
struct Box2D {
  double u_min = 0, v_min = 0, u_max = 0, v_max = 0;
  ObjectClass cls = ObjectClass::kCar;
  double score = 1.0;
  int box_index = -1;

  double area() const { return std::max(0.0, u_max - u_min) * std::max(0.0, v_max - v_min); }
  friend bool operator==(const Box2D&, const Box2D&) = default;
};

struct SceneSpec {
  std::size_t num_boxes = 4;
  std::size_t points_per_box = 16;
  std::size_t clutter_points = 24;
  double jitter_sigma = 0.05;     // meters
  double min_separation = 1.0;    // meters between circumscribed footprints
  double place_x_min = 4.0, place_x_max = 40.0;
  double place_y_abs = 15.0;
  double ground_z = -1.0;
  bool require_visible = true;    // box center must project into the image
  std::array<double, kNumClasses> class_weights = {0.5, 0.2, 0.2, 0.1};
  std::size_t max_attempts = 500;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

/// Ground truth of one synthetic frame.
struct SceneTruth {
  std::vector<Box3D> boxes;
  RadarPointCloud radar;
  std::vector<int> radar_owner;   // box index per radar point, -1 for clutter
  FeatureGrid gt_depth;           // H x W camera depth in meters, 0 = no return
  FeatureGrid fg_mask;            // H x W in {0,1}
  FeatureGrid instance_map;       // H x W, box index + 1 of the nearest hit, 0 = none
  std::vector<Box2D> boxes2d;
  FeatureGrid occ_object;         // X x Y in {0,1}
  FeatureGrid occ_background;     // X x Y in {0,1}, complement of occ_object
  CalibratedCamera camera;
  VoxelGrid grid;
};

struct ClassPrior {
  Vec3 size;
  double rcs;
  double max_speed;
};

inline ClassPrior class_prior(ObjectClass c) {
  switch (c) {
    case ObjectClass::kCar: return {{3.9, 1.7, 1.55}, 10.0, 12.0};
    case ObjectClass::kPedestrian: return {{0.8, 0.7, 1.75}, -5.0, 2.0};
    case ObjectClass::kCyclist: return {{1.8, 0.7, 1.7}, 0.0, 6.0};
    case ObjectClass::kTruck: return {{7.0, 2.5, 3.0}, 15.0, 10.0};
  }
  return {{1, 1, 1}, 0, 0};
}

/// Nearest positive ray parameter at which origin + s * dir meets the box
/// surface, found by intersecting the six face planes in the box frame.
inline std::optional<double> ray_box_intersection(const Vec3& origin, const Vec3& dir, const Box3D& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const Vec3 d0 = origin - box.center;
  const Vec3 o = {c * d0[0] + s * d0[1], -s * d0[0] + c * d0[1], d0[2]};
  const Vec3 d = {c * dir[0] + s * dir[1], -s * dir[0] + c * dir[1], dir[2]};
  const Vec3 half = 0.5 * box.size;
  std::optional<double> best;
  for (int axis = 0; axis < 3; ++axis) {
    if (d[axis] == 0.0) continue;
    for (double sign : {-1.0, 1.0}) {
      const double t = (sign * half[axis] - o[axis]) / d[axis];
      if (!(t > 0.0)) continue;
      bool inside = true;
      for (int other = 0; other < 3 && inside; ++other) {
        if (other == axis) continue;
        const double p = o[other] + t * d[other];
        inside = std::abs(p) <= half[other] * (1.0 + 1e-12) + 1e-12;
      }
      if (inside && (!best || t < *best)) best = t;
    }
  }
  return best;
}

/// BEV occupancy: cell = 1 iff its center lies inside the footprint of any box.
inline FeatureGrid rasterize_occupancy(const std::vector<Box3D>& boxes, const VoxelGrid& grid) {
  grid.validate();
  FeatureGrid occ = grid.bev_map();
  const std::size_t nx = grid.nx(), ny = grid.ny();
  for (const auto& box : boxes) {
    double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x, lo_y = lo_x, hi_y = -lo_x;
    for (const auto& p : box.bev_corners()) {
      lo_x = std::min(lo_x, p[0]);
      hi_x = std::max(hi_x, p[0]);
      lo_y = std::min(lo_y, p[1]);
      hi_y = std::max(hi_y, p[1]);
    }
    const auto first = [&](double v, double mn) {
      return static_cast<long>(std::floor((v - mn) / grid.voxel_size)) - 1;
    };
    const long i0 = std::max(0L, first(lo_x, grid.x_min));
    const long i1 = std::min(static_cast<long>(nx) - 1, first(hi_x, grid.x_min) + 2);
    const long j0 = std::max(0L, first(lo_y, grid.y_min));
    const long j1 = std::min(static_cast<long>(ny) - 1, first(hi_y, grid.y_min) + 2);
    for (long i = i0; i <= i1; ++i) {
      for (long j = j0; j <= j1; ++j) {
        const Vec3 c = grid.center(static_cast<std::size_t>(i), static_cast<std::size_t>(j), 0);
        if (box.contains_bev(c[0], c[1])) occ(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = 1.0;
      }
    }
  }
  return occ;
}

inline FeatureGrid complement_mask(const FeatureGrid& mask) {
  FeatureGrid out = mask;
  for (auto& v : out.data()) v = v > 0.5 ? 0.0 : 1.0;
  return out;
}

/// Evaluation corridor in front of the ego vehicle.
struct DrivingCorridor {
  double x_min = 0.0;
  double x_max = 25.0;
  double y_half_width = 4.0;

  bool contains(double x, double y) const { return x > x_min && x < x_max && std::abs(y) < y_half_width; }
  friend bool operator==(const DrivingCorridor&, const DrivingCorridor&) = default;
};

struct RegionMembership {
  bool eaa = false;   // entire annotated area
  bool dc = false;    // driving corridor
  bool far = false;   // eaa and not dc
};

inline RegionMembership region_split(const Box3D& box, const VoxelGrid& grid, const DrivingCorridor& corridor = {}) {
  RegionMembership r;
  const double x = box.center[0], y = box.center[1];
  r.eaa = x >= grid.x_min && x <= grid.x_max && y >= grid.y_min && y <= grid.y_max;
  r.dc = r.eaa && corridor.contains(x, y);
  r.far = r.eaa && !r.dc;
  return r;
}

namespace synth_detail {

inline ObjectClass sample_class(SeededRng& rng, const std::array<double, kNumClasses>& w) {
  double total = 0.0;
  for (double v : w) total += v;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (u < w[i]) return kAllClasses[i];
    u -= w[i];
  }
  return ObjectClass::kCar;
}

inline double wrap_angle(double a) {
  while (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  return a;
}

inline bool footprint_inside(const Box3D& b, const VoxelGrid& g) {
  for (const auto& p : b.bev_corners()) {
    if (p[0] < g.x_min || p[0] > g.x_max || p[1] < g.y_min || p[1] > g.y_max) return false;
  }
  return b.z_bottom() >= g.z_min && b.z_top() <= g.z_max;
}

inline double bev_radius(const Box3D& b) { return 0.5 * std::hypot(b.size[0], b.size[1]); }

// Radar point on a sensor-facing side face of `box`, before jitter.
inline Vec3 sample_facing_surface(SeededRng& rng, const Box3D& box) {
  const auto bev = box.bev_corners();
  std::array<double, 4> len{};
  std::array<bool, 4> facing{};
  double total = 0.0;
  for (std::size_t f = 0; f < 4; ++f) {
    const auto& a = bev[f];
    const auto& b = bev[(f + 1) % 4];
    const double mx = 0.5 * (a[0] + b[0]), my = 0.5 * (a[1] + b[1]);
    // Outward normal of a counter-clockwise edge is (dy, -dx).
    const double nx = b[1] - a[1], ny = -(b[0] - a[0]);
    facing[f] = nx * mx + ny * my < 0.0;
    len[f] = facing[f] ? std::hypot(b[0] - a[0], b[1] - a[1]) : 0.0;
    total += len[f];
  }
  double u = rng.uniform() * total;
  std::size_t face = 0;
  for (std::size_t f = 0; f < 4; ++f) {
    if (!facing[f]) continue;
    face = f;
    if (u < len[f]) break;
    u -= len[f];
  }
  const auto& a = bev[face];
  const auto& b = bev[(face + 1) % 4];
  const double s = rng.uniform();
  const double z = rng.uniform(box.z_bottom(), box.z_top());
  return {a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]), z};
}

}  // namespace synth_detail

/// Per-pixel nearest-box ray casting. Fills depth, foreground and instance maps.
inline void render_camera_truth(const std::vector<Box3D>& boxes, const CalibratedCamera& cam, FeatureGrid& depth,
                                FeatureGrid& mask, FeatureGrid& instance) {
  const std::size_t h = cam.height, w = cam.width;
  depth = FeatureGrid::zeros({{"H", h}, {"W", w}});
  mask = depth;
  instance = depth;
  const Vec3 origin = cam.center();
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const Vec3 dir = pixel_ray(cam, static_cast<double>(c), static_cast<double>(r));
      std::optional<double> best;
      std::size_t who = 0;
      for (std::size_t b = 0; b < boxes.size(); ++b) {
        const auto t = ray_box_intersection(origin, dir, boxes[b]);
        if (t && (!best || *t < *best)) {
          best = t;
          who = b;
        }
      }
      if (best) {
        depth(r, c) = *best;
        mask(r, c) = 1.0;
        instance(r, c) = static_cast<double>(who + 1);
      }
    }
  }
}

/// Tight image bounds of the projected box corners, clipped to the pixel
/// lattice. Boxes with a corner behind the camera or less than one square
/// pixel of visible area produce nothing.
inline std::optional<Box2D> project_box(const Box3D& box, const CalibratedCamera& cam) {
  double u0 = std::numeric_limits<double>::infinity(), v0 = u0, u1 = -u0, v1 = -u0;
  for (const auto& p : box.corners()) {
    const auto pr = project(cam, p);
    if (!pr.in_front) return std::nullopt;
    u0 = std::min(u0, pr.u);
    u1 = std::max(u1, pr.u);
    v0 = std::min(v0, pr.v);
    v1 = std::max(v1, pr.v);
  }
  const double wmax = static_cast<double>(cam.width - 1), hmax = static_cast<double>(cam.height - 1);
  Box2D b;
  b.u_min = std::clamp(u0, 0.0, wmax);
  b.u_max = std::clamp(u1, 0.0, wmax);
  b.v_min = std::clamp(v0, 0.0, hmax);
  b.v_max = std::clamp(v1, 0.0, hmax);
  b.cls = box.cls;
  if (b.area() < 1.0) return std::nullopt;
  return b;
}

/// Synthesizes one frame. Boxes are placed with rejection sampling; radar
/// returns are drawn on sensor-facing faces with Gaussian jitter plus uniform
/// clutter; camera-side truth comes from ray casting through `cam`.
inline SceneTruth generate_scene(SeededRng& rng, const SceneSpec& spec, const CalibratedCamera& cam,
                                 const VoxelGrid& grid) {
  using namespace synth_detail;
  cam.validate();
  grid.validate();
  SceneTruth scene;
  scene.camera = cam;
  scene.grid = grid;

  std::vector<Vec3> velocities;
  for (std::size_t n = 0; n < spec.num_boxes; ++n) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
      Box3D b;
      b.cls = sample_class(rng, spec.class_weights);
      const auto prior = class_prior(b.cls);
      for (int k = 0; k < 3; ++k) b.size[k] = prior.size[k] * rng.uniform(0.9, 1.1);
      b.yaw = wrap_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));
      b.center = {rng.uniform(spec.place_x_min, spec.place_x_max), rng.uniform(-spec.place_y_abs, spec.place_y_abs),
                  spec.ground_z + b.size[2] / 2.0};
      const double speed = rng.uniform(0.0, prior.max_speed);
      const double dir = rng.uniform() < 0.5 ? 1.0 : -1.0;
      if (!footprint_inside(b, grid)) continue;
      if (spec.require_visible) {
        const auto pr = project(cam, b.center);
        if (!pr.in_front || pr.u < 0.0 || pr.v < 0.0 || pr.u > static_cast<double>(cam.width - 1) ||
            pr.v > static_cast<double>(cam.height - 1)) {
          continue;
        }
      }
      bool clear = true;
      for (const auto& other : scene.boxes) {
        const double d = std::hypot(b.center[0] - other.center[0], b.center[1] - other.center[1]);
        if (d < bev_radius(b) + bev_radius(other) + spec.min_separation) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      scene.boxes.push_back(b);
      velocities.push_back({dir * speed * std::cos(b.yaw), dir * speed * std::sin(b.yaw), 0.0});
      placed = true;
    }
    if (!placed) {
      throw GenerationError("generate_scene: could not place box " + std::to_string(n) + " after " +
                            std::to_string(spec.max_attempts) + " attempts");
    }
  }

  for (std::size_t b = 0; b < scene.boxes.size(); ++b) {
    const auto& box = scene.boxes[b];
    const auto prior = class_prior(box.cls);
    for (std::size_t n = 0; n < spec.points_per_box; ++n) {
      for (int tries = 0; tries < 16; ++tries) {
        Vec3 p = sample_facing_surface(rng, box);
        for (auto& v : p) v += rng.normal(0.0, spec.jitter_sigma);
        if (!grid.contains(p)) continue;
        const double r = norm3(p);
        RadarPoint pt{p[0], p[1], p[2], rng.normal(prior.rcs, 2.0), r > 0.0 ? dot3(velocities[b], p) / r : 0.0};
        scene.radar.push_back(pt);
        scene.radar_owner.push_back(static_cast<int>(b));
        break;
      }
    }
  }
  for (std::size_t n = 0; n < spec.clutter_points; ++n) {
    RadarPoint pt;
    pt.x = rng.uniform(grid.x_min, grid.x_max);
    pt.y = rng.uniform(grid.y_min, grid.y_max);
    pt.z = rng.uniform(grid.z_min, grid.z_max);
    pt.rcs = rng.uniform(-10.0, 0.0);
    pt.v_rc = rng.normal(0.0, 0.2);
    scene.radar.push_back(pt);
    scene.radar_owner.push_back(-1);
  }

  render_camera_truth(scene.boxes, cam, scene.gt_depth, scene.fg_mask, scene.instance_map);
  for (std::size_t b = 0; b < scene.boxes.size(); ++b) {
    if (auto b2 = project_box(scene.boxes[b], cam)) {
      b2->box_index = static_cast<int>(b);
      scene.boxes2d.push_back(*b2);
    }
  }
  scene.occ_object = rasterize_occupancy(scene.boxes, grid);
  scene.occ_background = complement_mask(scene.occ_object);
  return scene;
}

/// Detector-style proposals from oracle 2D boxes: corners jittered by
/// N(0, sigma_px) and scores drawn from [min_score, 1].
inline std::vector<Box2D> jitter_proposals(const std::vector<Box2D>& boxes, SeededRng& rng, double sigma_px,
                                           double min_score, const CalibratedCamera& cam) {
  std::vector<Box2D> out;
  const double wmax = static_cast<double>(cam.width - 1), hmax = static_cast<double>(cam.height - 1);
  for (auto b : boxes) {
    b.u_min = std::clamp(b.u_min + rng.normal(0.0, sigma_px), 0.0, wmax);
    b.v_min = std::clamp(b.v_min + rng.normal(0.0, sigma_px), 0.0, hmax);
    b.u_max = std::clamp(b.u_max + rng.normal(0.0, sigma_px), 0.0, wmax);
    b.v_max = std::clamp(b.v_max + rng.normal(0.0, sigma_px), 0.0, hmax);
    b.score = rng.uniform(min_score, 1.0);
    if (b.area() >= 1.0) out.push_back(b);
  }
  return out;
}

}  // namespace sifuse

#endif  // SIFUSE_SCENE_SYNTH_HPP_
