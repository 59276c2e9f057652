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

#ifndef SIFUSE_GEOMETRY_HPP_
#define SIFUSE_GEOMETRY_HPP_

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <vector>

#include "sifuse/errors.hpp"
#include "sifuse/numerics.hpp"

namespace sifuse {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major

inline constexpr Mat3 kIdentity3 = {1, 0, 0, 0, 1, 0, 0, 0, 1};

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm3(const Vec3& a) { return std::sqrt(dot3(a, a)); }

inline Vec3 mul(const Mat3& m, const Vec3& v) {
  return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2], m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
          m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

inline Vec3 mul_transpose(const Mat3& m, const Vec3& v) {
  return {m[0] * v[0] + m[3] * v[1] + m[6] * v[2], m[1] * v[0] + m[4] * v[1] + m[7] * v[2],
          m[2] * v[0] + m[5] * v[1] + m[8] * v[2]};
}

inline Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      r[3 * i + j] = a[3 * i] * b[j] + a[3 * i + 1] * b[3 + j] + a[3 * i + 2] * b[6 + j];
  return r;
}

inline Mat3 transpose(const Mat3& m) { return {m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}; }

inline double determinant(const Mat3& m) {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

// ||R^T R - I||_inf
inline double orthonormality_error(const Mat3& r) {
  const Mat3 p = mul(transpose(r), r);
  double e = 0.0;
  for (int i = 0; i < 9; ++i) e = std::max(e, std::abs(p[i] - kIdentity3[i]));
  return e;
}

/// Rodrigues rotation about a unit axis.
inline Mat3 axis_angle_rotation(const Vec3& axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle), k = 1.0 - c;
  const double x = axis[0], y = axis[1], z = axis[2];
  return {c + x * x * k,     x * y * k - z * s, x * z * k + y * s,
          y * x * k + z * s, c + y * y * k,     y * z * k - x * s,
          z * x * k - y * s, z * y * k + x * s, c + z * z * k};
}

/// Pinhole camera with radar-to-camera extrinsics: p_cam = R p_radar + t.
/// Camera axes: x right, y down, z forward. Pixel (u, v) = (column, row) with
/// pixel centers on integer coordinates.
struct CalibratedCamera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  Mat3 rotation = kIdentity3;
  Vec3 translation = {0, 0, 0};
  std::size_t height = 1, width = 1;

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw DomainError("camera: focal lengths must be positive");
    if (orthonormality_error(rotation) >= 1e-9 || determinant(rotation) <= 0.0) {
      throw DomainError("camera: rotation is not a proper orthonormal matrix");
    }
    if (height == 0 || width == 0) throw DomainError("camera: empty image");
  }

  // Camera center in the radar frame.
  Vec3 center() const { return -1.0 * mul_transpose(rotation, translation); }

  friend bool operator==(const CalibratedCamera&, const CalibratedCamera&) = default;
};

/// Forward-looking camera for a radar frame with x forward, y left, z up,
/// mounted at `mount` (radar frame) with a 90 degree horizontal field of view.
inline CalibratedCamera forward_camera(std::size_t height, std::size_t width, const Vec3& mount = {0.0, 0.0, 0.4}) {
  CalibratedCamera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = static_cast<double>(width) / 2.0;
  cam.cx = (static_cast<double>(width) - 1.0) / 2.0;
  cam.cy = (static_cast<double>(height) - 1.0) / 2.0;
  cam.rotation = {0, -1, 0, 0, 0, -1, 1, 0, 0};
  cam.translation = -1.0 * mul(cam.rotation, mount);
  return cam;
}

struct Projection {
  double u = 0.0, v = 0.0, depth = 0.0;
  bool in_front = false;
};

inline Projection project(const CalibratedCamera& cam, const Vec3& p_radar) {
  const Vec3 pc = mul(cam.rotation, p_radar) + cam.translation;
  Projection out;
  out.depth = pc[2];
  out.in_front = pc[2] > 1e-6;
  if (out.in_front) {
    out.u = cam.fx * pc[0] / pc[2] + cam.cx;
    out.v = cam.fy * pc[1] / pc[2] + cam.cy;
  }
  return out;
}

/// Radar-frame point at camera depth `depth` along the ray through (u, v).
inline Vec3 unproject(const CalibratedCamera& cam, double u, double v, double depth) {
  const Vec3 pc = {(u - cam.cx) / cam.fx * depth, (v - cam.cy) / cam.fy * depth, depth};
  return mul_transpose(cam.rotation, pc - cam.translation);
}

/// Radar-frame ray direction through (u, v), scaled so that one unit along it
/// advances the camera depth by exactly one meter.
inline Vec3 pixel_ray(const CalibratedCamera& cam, double u, double v) {
  return mul_transpose(cam.rotation, Vec3{(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0});
}

/// Axis-aligned voxelization of the radar frame. Counts are range / size
/// rounded to the nearest integer; voxel i spans [min + i*size, min + (i+1)*size).
struct VoxelGrid {
  double x_min = 0.0, x_max = 51.2;
  double y_min = -25.6, y_max = 25.6;
  double z_min = -3.0, z_max = 2.76;
  double voxel_size = 0.16;

  static VoxelGrid vod() { return {}; }

  static std::size_t count(double lo, double hi, double size) {
    const double n = std::round((hi - lo) / size);
    return n > 0.0 ? static_cast<std::size_t>(n) : 0;
  }
  std::size_t nx() const { return count(x_min, x_max, voxel_size); }
  std::size_t ny() const { return count(y_min, y_max, voxel_size); }
  std::size_t nz() const { return count(z_min, z_max, voxel_size); }

  void validate() const {
    if (!(voxel_size > 0.0)) throw DomainError("voxel grid: size must be positive");
    if (nx() == 0 || ny() == 0 || nz() == 0) throw DomainError("voxel grid: empty axis");
  }

  Vec3 center(std::size_t i, std::size_t j, std::size_t k) const {
    return {x_min + (static_cast<double>(i) + 0.5) * voxel_size,
            y_min + (static_cast<double>(j) + 0.5) * voxel_size,
            z_min + (static_cast<double>(k) + 0.5) * voxel_size};
  }

  static std::optional<std::size_t> index(double value, double lo, double size, std::size_t n) {
    const double c = std::floor((value - lo) / size);
    if (!(c >= 0.0) || c >= static_cast<double>(n)) return std::nullopt;
    return static_cast<std::size_t>(c);
  }

  // BEV cell of (x, y); nullopt outside the grid.
  std::optional<std::array<std::size_t, 2>> bev_cell(double x, double y) const {
    auto i = index(x, x_min, voxel_size, nx());
    auto j = index(y, y_min, voxel_size, ny());
    if (!i || !j) return std::nullopt;
    return std::array<std::size_t, 2>{*i, *j};
  }

  std::optional<std::array<std::size_t, 3>> voxel(const Vec3& p) const {
    auto i = index(p[0], x_min, voxel_size, nx());
    auto j = index(p[1], y_min, voxel_size, ny());
    auto k = index(p[2], z_min, voxel_size, nz());
    if (!i || !j || !k) return std::nullopt;
    return std::array<std::size_t, 3>{*i, *j, *k};
  }

  bool contains(const Vec3& p) const {
    return p[0] >= x_min && p[0] <= x_max && p[1] >= y_min && p[1] <= y_max && p[2] >= z_min &&
           p[2] <= z_max;
  }

  // Zero X x Y x C grid with metric extents attached.
  FeatureGrid bev_grid(std::size_t channels) const {
    FeatureGrid g({Axis{"X", nx(), std::make_pair(x_min, x_max)},
                   Axis{"Y", ny(), std::make_pair(y_min, y_max)}, Axis{"C", channels, std::nullopt}});
    return g;
  }

  FeatureGrid bev_map() const {
    return FeatureGrid({Axis{"X", nx(), std::make_pair(x_min, x_max)},
                        Axis{"Y", ny(), std::make_pair(y_min, y_max)}});
  }

  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;
};

/// Voxel centers, X outer, then Y, then Z.
inline std::vector<Vec3> virtual_points(const VoxelGrid& grid) {
  grid.validate();
  std::vector<Vec3> pts;
  pts.reserve(grid.nx() * grid.ny() * grid.nz());
  for (std::size_t i = 0; i < grid.nx(); ++i)
    for (std::size_t j = 0; j < grid.ny(); ++j)
      for (std::size_t k = 0; k < grid.nz(); ++k) pts.push_back(grid.center(i, j, k));
  return pts;
}

/// Uniform depth discretization; bin k covers
/// [d_min + k*spacing, d_min + (k+1)*spacing) and is represented by its center.
struct DepthBinning {
  double d_min = 2.0;
  double d_max = 58.0;
  std::size_t bins = 14;

  void validate() const {
    if (bins < 2) throw DomainError("depth binning: need at least two bins");
    if (!(d_max > d_min)) throw DomainError("depth binning: d_max must exceed d_min");
  }

  double spacing() const { return (d_max - d_min) / static_cast<double>(bins); }
  double center(std::size_t k) const { return d_min + (static_cast<double>(k) + 0.5) * spacing(); }

  // Hard bin containing d, clamped to the valid range.
  std::size_t bin_index(double d) const {
    const double c = std::floor((d - d_min) / spacing());
    if (c <= 0.0) return 0;
    return std::min(static_cast<std::size_t>(c), bins - 1);
  }

  friend bool operator==(const DepthBinning&, const DepthBinning&) = default;
};

struct BinPosition {
  std::size_t lower = 0;
  double weight = 0.0;  // fraction of the way from bin `lower` to `lower + 1`
  bool out_of_range = false;
};

/// Continuous bin coordinate c = (d - center_0) / spacing split into a lower
/// bin and an interpolation weight, both clamped to the interior segments.
inline BinPosition depth_to_bin(const DepthBinning& binning, double d) {
  const double c = (d - binning.center(0)) / binning.spacing();
  const double max_lower = static_cast<double>(binning.bins - 2);
  const double lower = std::clamp(std::floor(c), 0.0, max_lower);
  BinPosition pos;
  pos.lower = static_cast<std::size_t>(lower);
  pos.weight = std::clamp(c - lower, 0.0, 1.0);
  pos.out_of_range = !(d >= binning.d_min && d <= binning.d_max);
  return pos;
}

/// Random calibration disturbance: rotation by an angle uniform in
/// [-max_angle, max_angle] degrees about a uniformly random axis (composed on
/// the camera side) plus a per-coordinate translation offset uniform in
/// [-max_trans, max_trans] meters. Always consumes the same number of draws.
inline CalibratedCamera perturb_calibration(const CalibratedCamera& cam, SeededRng& rng, double max_angle_deg,
                                            double max_trans) {
  if (max_angle_deg < 0.0 || max_trans < 0.0) throw DomainError("perturb_calibration: negative bound");
  Vec3 axis = {rng.normal(), rng.normal(), rng.normal()};
  const double n = norm3(axis);
  axis = n > 0.0 ? (1.0 / n) * axis : Vec3{0, 0, 1};
  const double angle = rng.uniform(-1.0, 1.0) * max_angle_deg * std::numbers::pi / 180.0;
  const Vec3 shift = {rng.uniform(-1.0, 1.0) * max_trans, rng.uniform(-1.0, 1.0) * max_trans,
                      rng.uniform(-1.0, 1.0) * max_trans};
  CalibratedCamera out = cam;
  if (max_angle_deg > 0.0) {
    const Mat3 delta = axis_angle_rotation(axis, angle);
    out.rotation = mul(delta, cam.rotation);
    out.translation = mul(delta, cam.translation);
  }
  if (max_trans > 0.0) out.translation = out.translation + shift;
  return out;
}

}  // namespace sifuse

#endif  // SIFUSE_GEOMETRY_HPP_
