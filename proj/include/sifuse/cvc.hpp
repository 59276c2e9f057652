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

#ifndef SIFUSE_CVC_HPP_
#define SIFUSE_CVC_HPP_

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "sifuse/errors.hpp"
#include "sifuse/numerics.hpp"
#include "sifuse/scene_synth.hpp"

namespace sifuse {

/// Learnable query token T_q.
struct Token {
  std::vector<double> value;

  static Token seeded(std::size_t channels, SeededRng rng) {
    Token t{std::vector<double>(channels)};
    for (auto& v : t.value) v = rng.normal(0.0, 0.02);
    return t;
  }
};

struct Proposal {
  std::vector<double> feature;
  ObjectClass cls = ObjectClass::kCar;
};

struct ProposalSet {
  std::vector<Proposal> items;
  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
};

inline constexpr std::size_t kBoxGeometryDims = 8;

/// Normalized (u_min, v_min, u_max, v_max, center_u, center_v, log w, log h).
inline std::array<double, kBoxGeometryDims> box_geometry(const Box2D& b, std::size_t height, std::size_t width) {
  const double w = static_cast<double>(width), h = static_cast<double>(height);
  const double bw = std::max(b.u_max - b.u_min, 1.0), bh = std::max(b.v_max - b.v_min, 1.0);
  return {b.u_min / w, b.v_min / h, b.u_max / w, b.v_max / h, 0.5 * (b.u_min + b.u_max) / w,
          0.5 * (b.v_min + b.v_max) / h, std::log(bw), std::log(bh)};
}

/// Turns 2D boxes into proposal features: mean context over the box interior
/// plus a seeded linear embedding of the box geometry.
struct ProposalEncoder {
  Dense geometry;  // C x 8

  static ProposalEncoder seeded(std::size_t channels, SeededRng rng) {
    return {Dense::seeded(channels, kBoxGeometryDims, rng)};
  }

  ProposalSet encode(const FeatureGrid& context, const std::vector<Box2D>& boxes) const {
    require_rank(context, 3, "ProposalEncoder::encode");
    const std::size_t h = context.dim(0), w = context.dim(1), ch = context.dim(2);
    if (geometry.out != ch) throw ShapeError("ProposalEncoder: channel mismatch");
    ProposalSet set;
    for (const auto& b : boxes) {
      Proposal p{std::vector<double>(ch, 0.0), b.cls};
      const auto r0 = static_cast<long>(std::ceil(b.v_min)), r1 = static_cast<long>(std::floor(b.v_max));
      const auto c0 = static_cast<long>(std::ceil(b.u_min)), c1 = static_cast<long>(std::floor(b.u_max));
      std::size_t n = 0;
      for (long r = std::max(0L, r0); r <= std::min(static_cast<long>(h) - 1, r1); ++r) {
        for (long c = std::max(0L, c0); c <= std::min(static_cast<long>(w) - 1, c1); ++c) {
          auto f = context.cell(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
          for (std::size_t k = 0; k < ch; ++k) p.feature[k] += f[k];
          ++n;
        }
      }
      if (n == 0) {
        // Thin box between pixel centers: fall back to the nearest pixel.
        const auto r = static_cast<std::size_t>(std::clamp(std::round(0.5 * (b.v_min + b.v_max)), 0.0, double(h - 1)));
        const auto c = static_cast<std::size_t>(std::clamp(std::round(0.5 * (b.u_min + b.u_max)), 0.0, double(w - 1)));
        auto f = context.cell(r, c);
        std::copy(f.begin(), f.end(), p.feature.begin());
        n = 1;
      }
      for (auto& v : p.feature) v /= static_cast<double>(n);
      const auto g = geometry(box_geometry(b, h, w));
      for (std::size_t k = 0; k < ch; ++k) p.feature[k] += g[k];
      set.items.push_back(std::move(p));
    }
    return set;
  }
};

struct TokenAttentionWeights {
  Dense query, key, value;  // C x C each

  static TokenAttentionWeights seeded(std::size_t channels, SeededRng rng) {
    TokenAttentionWeights w;
    w.query = Dense::seeded(channels, channels, rng);
    w.key = Dense::seeded(channels, channels, rng);
    w.value = Dense::seeded(channels, channels, rng);
    return w;
  }
};

struct TokenAggregate {
  std::vector<double> output;   // token row of the attention output
  std::vector<double> weights;  // over [token, proposals...]
};

/// Single-head scaled dot-product self-attention over [T_q; proposals];
/// only the token's output row is computed.
inline TokenAggregate token_aggregate(std::span<const double> token, const ProposalSet& proposals,
                                      const TokenAttentionWeights& attn) {
  const std::size_t ch = token.size();
  if (attn.query.in != ch) throw ShapeError("token_aggregate: channel mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(ch));
  const auto q = attn.query(token);
  std::vector<std::vector<double>> values;
  TokenAggregate out;
  out.weights.reserve(proposals.size() + 1);
  const auto visit = [&](std::span<const double> x) {
    out.weights.push_back(dot(q, attn.key(x)) * scale);
    values.push_back(attn.value(x));
  };
  visit(token);
  for (const auto& p : proposals.items) {
    if (p.feature.size() != ch) throw ShapeError("token_aggregate: proposal channel mismatch");
    visit(p.feature);
  }
  softmax_inplace(out.weights);
  out.output.assign(ch, 0.0);
  for (std::size_t j = 0; j < values.size(); ++j)
    for (std::size_t k = 0; k < ch; ++k) out.output[k] += out.weights[j] * values[j][k];
  return out;
}

/// Gradient of a scalar loss with respect to the token, given the gradient
/// with respect to token_aggregate's output. The token enters as the query,
/// as the first key, and as the first value.
inline std::vector<double> token_aggregate_backward(std::span<const double> token, const ProposalSet& proposals,
                                                    const TokenAttentionWeights& attn,
                                                    std::span<const double> grad_output) {
  const std::size_t ch = token.size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(ch));
  const auto q = attn.query(token);
  std::vector<std::vector<double>> keys, values;
  keys.push_back(attn.key(token));
  values.push_back(attn.value(token));
  for (const auto& p : proposals.items) {
    keys.push_back(attn.key(p.feature));
    values.push_back(attn.value(p.feature));
  }
  const std::size_t n = keys.size();
  std::vector<double> w(n);
  for (std::size_t j = 0; j < n; ++j) w[j] = dot(q, keys[j]) * scale;
  softmax_inplace(w);

  std::vector<double> g_w(n);
  double mean = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    g_w[j] = dot(grad_output, values[j]);
    mean += w[j] * g_w[j];
  }
  std::vector<double> g_q(ch, 0.0);
  std::vector<double> g_logit(n);
  for (std::size_t j = 0; j < n; ++j) {
    g_logit[j] = w[j] * (g_w[j] - mean);
    for (std::size_t k = 0; k < ch; ++k) g_q[k] += g_logit[j] * keys[j][k] * scale;
  }
  std::vector<double> g_k0(ch), g_v0(ch);
  for (std::size_t k = 0; k < ch; ++k) {
    g_k0[k] = g_logit[0] * q[k] * scale;
    g_v0[k] = w[0] * grad_output[k];
  }
  auto g = attn.query.transpose_apply(g_q);
  const auto gk = attn.key.transpose_apply(g_k0);
  const auto gv = attn.value.transpose_apply(g_v0);
  for (std::size_t k = 0; k < ch; ++k) g[k] += gk[k] + gv[k];
  return g;
}

/// Object and background BEV encoders: independent 1x1 linear + ReLU maps.
struct CvcEncoders {
  Dense object;
  Dense background;

  static CvcEncoders seeded(std::size_t channels, SeededRng rng, double gain = 1.0) {
    CvcEncoders e;
    e.object = Dense::seeded(channels, channels, rng, gain);
    e.background = Dense::seeded(channels, channels, rng, gain);
    return e;
  }
};

inline std::pair<FeatureGrid, FeatureGrid> encode_object_background(const FeatureGrid& rc_bev, const CvcEncoders& enc) {
  require_rank(rc_bev, 3, "encode_object_background");
  return {apply_per_cell(rc_bev, enc.object, true), apply_per_cell(rc_bev, enc.background, true)};
}

/// Correlation map sigmoid(F . t) per BEV cell.
inline FeatureGrid correlate(const FeatureGrid& features, std::span<const double> token) {
  require_rank(features, 3, "correlate");
  if (features.dim(2) != token.size()) throw ShapeError("correlate: channel mismatch");
  std::vector<Axis> axes(features.axes().begin(), features.axes().begin() + 2);
  FeatureGrid m(std::move(axes));
  for (std::size_t i = 0; i < features.dim(0); ++i)
    for (std::size_t j = 0; j < features.dim(1); ++j) m(i, j) = sigmoid(dot(features.cell(i, j), token));
  return m;
}

struct Reweighted {
  std::vector<double> similarity;  // v
  FeatureGrid features;            // F scaled channel-wise by v
};

inline Reweighted reweight(const FeatureGrid& features, const FeatureGrid& corr) {
  Reweighted r{channel_cosine(features, corr), features};
  for (std::size_t i = 0; i < features.dim(0); ++i) {
    for (std::size_t j = 0; j < features.dim(1); ++j) {
      auto f = r.features.cell(i, j);
      for (std::size_t k = 0; k < f.size(); ++k) f[k] *= r.similarity[k];
    }
  }
  return r;
}

struct CvcWeights {
  ProposalEncoder proposal_encoder;
  TokenAttentionWeights attention;
  CvcEncoders encoders;
};

struct CvcOutput {
  FeatureGrid activated;
  FeatureGrid corr_object;
  FeatureGrid corr_background;
  std::vector<double> sim_object;
  std::vector<double> sim_background;
  std::vector<double> aggregated;
};

/// Full cross-view correlation: token aggregation, object/background
/// encoding, correlation maps, cosine re-weighting, additive merge.
inline CvcOutput cvc_forward(const ProposalSet& proposals, const FeatureGrid& rc_bev, const Token& token,
                             const CvcWeights& weights) {
  CvcOutput out;
  out.aggregated = token_aggregate(token.value, proposals, weights.attention).output;
  auto [f_o, f_b] = encode_object_background(rc_bev, weights.encoders);
  out.corr_object = correlate(f_o, out.aggregated);
  out.corr_background = correlate(f_b, out.aggregated);
  auto ro = reweight(f_o, out.corr_object);
  auto rb = reweight(f_b, out.corr_background);
  out.sim_object = std::move(ro.similarity);
  out.sim_background = std::move(rb.similarity);
  out.activated = std::move(ro.features);
  const auto& fb = rb.features.values();
  auto& act = out.activated.values();
  for (std::size_t n = 0; n < act.size(); ++n) act[n] += fb[n];
  return out;
}

}  // namespace sifuse

#endif  // SIFUSE_CVC_HPP_
