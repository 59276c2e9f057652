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

#ifndef SIFUSE_NUMERICS_HPP_
#define SIFUSE_NUMERICS_HPP_

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sifuse/errors.hpp"

namespace sifuse {

/// One named axis of a FeatureGrid. `lo`/`hi` carry the physical extent
/// (meters for BEV axes) when the axis has one.
struct Axis {
  std::string name;
  std::size_t size = 0;
  std::optional<std::pair<double, double>> extent;
};

/// Dense row-major tensor of 64-bit reals with named axes.
///
/// Rank 2 grids are scalar maps (H,W or X,Y), rank 3 grids carry a trailing
/// channel axis (H,W,C / H,W,D / X,Y,C) and rank 4 grids are volumes
/// (X,Y,Z,C). The channel vector of a rank-3 cell is contiguous, which is what
/// `cell()` exposes.
class FeatureGrid {
 public:
  FeatureGrid() = default;

  explicit FeatureGrid(std::vector<Axis> axes) : axes_(std::move(axes)) {
    data_.assign(count(axes_), 0.0);
  }

  FeatureGrid(std::vector<Axis> axes, std::vector<double> data)
      : axes_(std::move(axes)), data_(std::move(data)) {
    if (data_.size() != count(axes_)) {
      throw ShapeError("FeatureGrid: data length " +
                       std::to_string(data_.size()) +
                       " does not match shape product " +
                       std::to_string(count(axes_)));
    }
  }

  static FeatureGrid zeros(std::initializer_list<std::pair<const char*, std::size_t>> dims) {
    std::vector<Axis> axes;
    for (const auto& [name, size] : dims) axes.push_back({name, size, std::nullopt});
    return FeatureGrid(std::move(axes));
  }

  std::size_t rank() const { return axes_.size(); }
  std::size_t dim(std::size_t i) const { return axes_.at(i).size; }
  const std::vector<Axis>& axes() const { return axes_; }
  std::vector<std::size_t> shape() const {
    std::vector<std::size_t> s;
    for (const auto& a : axes_) s.push_back(a.size);
    return s;
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  void set_extent(std::size_t axis, double lo, double hi) {
    axes_.at(axis).extent = std::make_pair(lo, hi);
  }

  double& operator()(std::size_t i, std::size_t j) {
    assert(rank() == 2);
    return data_[i * axes_[1].size + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(rank() == 2);
    return data_[i * axes_[1].size + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    assert(rank() == 3);
    return data_[(i * axes_[1].size + j) * axes_[2].size + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    assert(rank() == 3);
    return data_[(i * axes_[1].size + j) * axes_[2].size + k];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    assert(rank() == 4);
    return data_[((i * axes_[1].size + j) * axes_[2].size + k) * axes_[3].size + l];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    assert(rank() == 4);
    return data_[((i * axes_[1].size + j) * axes_[2].size + k) * axes_[3].size + l];
  }

  // Channel vector of rank-3 cell (i, j).
  std::span<double> cell(std::size_t i, std::size_t j) {
    assert(rank() == 3);
    const std::size_t c = axes_[2].size;
    return {data_.data() + (i * axes_[1].size + j) * c, c};
  }
  std::span<const double> cell(std::size_t i, std::size_t j) const {
    assert(rank() == 3);
    const std::size_t c = axes_[2].size;
    return {data_.data() + (i * axes_[1].size + j) * c, c};
  }

  bool same_shape(const FeatureGrid& other) const { return shape() == other.shape(); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool all_zero() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v == 0.0; });
  }

  std::size_t count_nonzero() const {
    return static_cast<std::size_t>(
        std::count_if(data_.begin(), data_.end(), [](double v) { return v != 0.0; }));
  }

  friend bool operator==(const FeatureGrid& a, const FeatureGrid& b) {
    return a.shape() == b.shape() && a.data_ == b.data_;
  }

 private:
  static std::size_t count(const std::vector<Axis>& axes) {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.size;
    return axes.empty() ? 0 : n;
  }

  std::vector<Axis> axes_;
  std::vector<double> data_;
};

inline void require_rank(const FeatureGrid& g, std::size_t rank, const char* what) {
  if (g.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     ", got " + std::to_string(g.rank()));
  }
}

inline void require_finite(const FeatureGrid& g, const char* what) {
  if (!g.all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

/// Reproducible pseudo-random stream keyed by (seed, stream id).
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard; the real-valued conversions are done here rather than through
/// <random> distributions, whose algorithms are implementation-defined.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint32_t stream = 0) : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      stream, 0x5eedu};
    engine_.seed(seq);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint32_t stream() const { return stream_; }

  // Independent stream derived from the same seed.
  SeededRng fork(std::uint32_t stream) const { return SeededRng(seed_, stream); }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one draw per call so the stream position is easy to reason about.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::size_t index(std::size_t n) {
    assert(n > 0);
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  std::uint64_t seed_;
  std::uint32_t stream_;
  std::mt19937_64 engine_;
};

/// Fixed dense layer y = W x (+ b). Weights are row-major, out x in.
struct Dense {
  std::size_t out = 0;
  std::size_t in = 0;
  std::vector<double> weight;
  std::vector<double> bias;  // empty: no bias

  static Dense seeded(std::size_t out, std::size_t in, SeededRng& rng, double gain = 1.0,
                      bool with_bias = false) {
    Dense d{out, in, std::vector<double>(out * in), {}};
    const double scale = gain / std::sqrt(static_cast<double>(in));
    for (auto& w : d.weight) w = rng.normal(0.0, scale);
    if (with_bias) d.bias.assign(out, 0.0);
    return d;
  }

  static Dense zeros(std::size_t out, std::size_t in) {
    return Dense{out, in, std::vector<double>(out * in, 0.0), {}};
  }

  double& at(std::size_t r, std::size_t c) { return weight[r * in + c]; }
  double at(std::size_t r, std::size_t c) const { return weight[r * in + c]; }

  void apply(std::span<const double> x, std::span<double> y) const {
    assert(x.size() == in && y.size() == out);
    for (std::size_t r = 0; r < out; ++r) {
      double acc = bias.empty() ? 0.0 : bias[r];
      const double* row = weight.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) acc += row[c] * x[c];
      y[r] = acc;
    }
  }

  std::vector<double> operator()(std::span<const double> x) const {
    std::vector<double> y(out);
    apply(x, y);
    return y;
  }

  // y = W^T g
  std::vector<double> transpose_apply(std::span<const double> g) const {
    assert(g.size() == out);
    std::vector<double> y(in, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      const double* row = weight.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) y[c] += row[c] * g[r];
    }
    return y;
  }
};

/// Applies `layer` to every channel vector of a rank-3 grid, optionally
/// followed by ReLU. Spatial axes are kept; the channel axis becomes
/// `layer.out` wide.
inline FeatureGrid apply_per_cell(const FeatureGrid& g, const Dense& layer, bool relu,
                                  const char* channel_name = "C") {
  require_rank(g, 3, "apply_per_cell");
  if (g.dim(2) != layer.in) throw ShapeError("apply_per_cell: channel mismatch");
  std::vector<Axis> axes = g.axes();
  axes[2] = Axis{channel_name, layer.out, std::nullopt};
  FeatureGrid out(std::move(axes));
  for (std::size_t i = 0; i < g.dim(0); ++i) {
    for (std::size_t j = 0; j < g.dim(1); ++j) {
      auto y = out.cell(i, j);
      layer.apply(g.cell(i, j), y);
      if (relu) {
        for (auto& v : y) v = std::max(v, 0.0);
      }
    }
  }
  return out;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without overflow for large |x|.
inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

inline void softmax_inplace(std::span<double> v) {
  if (v.empty()) return;
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (auto& x : v) {
    x = std::exp(x - m);
    sum += x;
  }
  for (auto& x : v) x /= sum;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Bilinear interpolation of a rank-3 H x W x C grid at pixel (u = x, v = y).
/// Lattice points sit at integer coordinates; anything outside
/// [0, W-1] x [0, H-1] samples as zero.
inline void bilinear_sample_into(const FeatureGrid& grid, double u, double v, std::span<double> out) {
  require_rank(grid, 3, "bilinear_sample");
  const std::size_t h = grid.dim(0), w = grid.dim(1), c = grid.dim(2);
  assert(out.size() == c);
  std::fill(out.begin(), out.end(), 0.0);
  if (!(u >= 0.0 && v >= 0.0 && u <= static_cast<double>(w - 1) && v <= static_cast<double>(h - 1))) {
    return;
  }
  const auto x0 = static_cast<std::size_t>(std::floor(u));
  const auto y0 = static_cast<std::size_t>(std::floor(v));
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const double fx = u - static_cast<double>(x0);
  const double fy = v - static_cast<double>(y0);
  const double w00 = (1.0 - fx) * (1.0 - fy), w01 = fx * (1.0 - fy);
  const double w10 = (1.0 - fx) * fy, w11 = fx * fy;
  auto a = grid.cell(y0, x0), b = grid.cell(y0, x1), d = grid.cell(y1, x0), e = grid.cell(y1, x1);
  for (std::size_t k = 0; k < c; ++k) out[k] = w00 * a[k] + w01 * b[k] + w10 * d[k] + w11 * e[k];
}

inline std::vector<double> bilinear_sample(const FeatureGrid& grid, double u, double v) {
  require_rank(grid, 3, "bilinear_sample");
  if (!std::isfinite(u) || !std::isfinite(v)) throw DomainError("bilinear_sample: non-finite coordinate");
  std::vector<double> out(grid.dim(2));
  bilinear_sample_into(grid, u, v, out);
  return out;
}

/// Cosine similarity between each channel plane of an X x Y x C grid and an
/// X x Y map, both flattened. Zero-norm operands give 0.
inline std::vector<double> channel_cosine(const FeatureGrid& grid, const FeatureGrid& map) {
  require_rank(grid, 3, "channel_cosine");
  require_rank(map, 2, "channel_cosine");
  if (grid.dim(0) != map.dim(0) || grid.dim(1) != map.dim(1)) {
    throw ShapeError("channel_cosine: spatial shape mismatch");
  }
  const std::size_t c = grid.dim(2);
  std::vector<double> num(c, 0.0), sq(c, 0.0);
  double map_sq = 0.0;
  for (std::size_t i = 0; i < grid.dim(0); ++i) {
    for (std::size_t j = 0; j < grid.dim(1); ++j) {
      const double m = map(i, j);
      map_sq += m * m;
      auto f = grid.cell(i, j);
      for (std::size_t k = 0; k < c; ++k) {
        num[k] += f[k] * m;
        sq[k] += f[k] * f[k];
      }
    }
  }
  std::vector<double> out(c, 0.0);
  const double map_norm = std::sqrt(map_sq);
  for (std::size_t k = 0; k < c; ++k) {
    const double denom = std::sqrt(sq[k]) * map_norm;
    if (denom > 0.0) out[k] = std::clamp(num[k] / denom, -1.0, 1.0);
  }
  return out;
}

/// (v - min) / (max - min). A constant input maps to all ones so that a flat
/// retained distribution keeps every retained entry active.
inline std::vector<double> minmax_normalize(std::span<const double> values) {
  if (values.empty()) throw DomainError("minmax_normalize: empty input");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> out(values.size(), 1.0);
  if (hi > lo) {
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - lo) / (hi - lo);
  }
  return out;
}

/// Central-difference gradient check.
///
/// Returns max_i |fd_i - g_i| / max(1, |fd_i|, |g_i|) where
/// fd_i = (f(x + h e_i) - f(x - h e_i)) / 2h.
template <typename F>
double fd_gradient_check(F&& f, std::span<const double> x, std::span<const double> analytic, double h) {
  if (!(h > 0.0)) throw DomainError("fd_gradient_check: step must be positive");
  if (analytic.size() != x.size()) throw ShapeError("fd_gradient_check: gradient size mismatch");
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double fp = f(std::span<const double>(probe));
    probe[i] = saved - h;
    const double fm = f(std::span<const double>(probe));
    probe[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("fd_gradient_check: non-finite objective at coordinate " + std::to_string(i));
    }
    const double fd = (fp - fm) / (2.0 * h);
    const double err = std::abs(fd - analytic[i]) / std::max({1.0, std::abs(fd), std::abs(analytic[i])});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace sifuse

#endif  // SIFUSE_NUMERICS_HPP_
