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

#include <cmath>

#include <gtest/gtest.h>

#include "sifuse/cvc.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

namespace sifuse {
namespace {

std::vector<double> random_vec(SeededRng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, scale);
  return v;
}

ProposalSet random_proposals(SeededRng& rng, std::size_t n, std::size_t ch) {
  ProposalSet set;
  for (std::size_t k = 0; k < n; ++k) set.items.push_back({random_vec(rng, ch), ObjectClass::kCar});
  return set;
}

TEST(TokenAggregate, NoProposalsReturnsValueOfToken) {
  const auto attn = TokenAttentionWeights::seeded(5, SeededRng(1));
  SeededRng rng(2);
  const auto t = random_vec(rng, 5);
  const auto out = token_aggregate(t, {}, attn);
  ASSERT_EQ(out.weights.size(), 1u);
  EXPECT_EQ(out.weights[0], 1.0);
  const auto vt = oracle::matvec(attn.value, t);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(out.output[k], vt[k], 1e-15);
}

TEST(TokenAggregate, WeightsFormADistribution) {
  SeededRng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto attn = TokenAttentionWeights::seeded(6, rng.fork(static_cast<std::uint32_t>(100 + trial)));
    const auto out = token_aggregate(random_vec(rng, 6), random_proposals(rng, 1 + rng.index(6), 6), attn);
    double sum = 0.0;
    for (double w : out.weights) {
      EXPECT_GE(w, 0.0);
      sum += w;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(TokenAggregate, DuplicateProposalsClosedForm) {
  // N copies of p: the token keeps e^a / (e^a + N e^b) of the mass.
  const std::size_t ch = 4, n = 3;
  const auto attn = TokenAttentionWeights::seeded(ch, SeededRng(4));
  SeededRng rng(5);
  const auto t = random_vec(rng, ch), p = random_vec(rng, ch);
  ProposalSet set;
  for (std::size_t k = 0; k < n; ++k) set.items.push_back({p, ObjectClass::kCar});
  const auto q = oracle::matvec(attn.query, t);
  double a = 0.0, b = 0.0;
  const auto kt = oracle::matvec(attn.key, t), kp = oracle::matvec(attn.key, p);
  for (std::size_t k = 0; k < ch; ++k) {
    a += q[k] * kt[k] / 2.0;
    b += q[k] * kp[k] / 2.0;
  }
  const double wt = 1.0 / (1.0 + static_cast<double>(n) * std::exp(b - a));
  const auto vt = oracle::matvec(attn.value, t), vp = oracle::matvec(attn.value, p);
  const auto out = token_aggregate(t, set, attn);
  EXPECT_NEAR(out.weights[0], wt, 1e-12);
  for (std::size_t k = 0; k < ch; ++k) EXPECT_NEAR(out.output[k], wt * vt[k] + (1.0 - wt) * vp[k], 1e-12);
}

TEST(TokenAggregate, BackwardMatchesFiniteDifferences) {
  SeededRng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t ch = 5;
    const auto attn = TokenAttentionWeights::seeded(ch, rng.fork(static_cast<std::uint32_t>(200 + trial)));
    const auto props = random_proposals(rng, rng.index(4), ch);
    const auto t = random_vec(rng, ch), gout = random_vec(rng, ch);
    const auto f = [&](std::span<const double> x) {
      const auto o = token_aggregate(x, props, attn).output;
      return dot(o, gout);
    };
    const auto g = token_aggregate_backward(t, props, attn, gout);
    EXPECT_LT(fd_gradient_check(f, t, g, 1e-6), 1e-6);
  }
}

TEST(ProposalEncoder, MeanContextPlusGeometry) {
  SeededRng rng(7);
  const auto ctx = gen::random_grid(rng, 6, 8, 3);
  const auto enc = ProposalEncoder::seeded(3, SeededRng(8));
  Box2D b;
  b.u_min = 1.5;
  b.u_max = 3.2;
  b.v_min = 0.0;
  b.v_max = 1.0;  // pixels: columns 2..3, rows 0..1
  const auto set = enc.encode(ctx, {b});
  ASSERT_EQ(set.size(), 1u);
  const auto geo = box_geometry(b, 6, 8);
  const auto g = oracle::matvec(enc.geometry, std::vector<double>(geo.begin(), geo.end()));
  for (std::size_t k = 0; k < 3; ++k) {
    const double mean = (ctx(0, 2, k) + ctx(0, 3, k) + ctx(1, 2, k) + ctx(1, 3, k)) / 4.0;
    EXPECT_NEAR(set.items[0].feature[k], mean + g[k], 1e-12);
  }
}

TEST(Encoders, ZeroInputGivesZero) {
  const auto enc = CvcEncoders::seeded(4, SeededRng(9));
  const auto z = FeatureGrid::zeros({{"X", 3}, {"Y", 3}, {"C", 4}});
  const auto [fo, fb] = encode_object_background(z, enc);
  EXPECT_TRUE(fo.all_zero());
  EXPECT_TRUE(fb.all_zero());
}

TEST(Encoders, ObjectAndBackgroundDiffer) {
  const auto enc = CvcEncoders::seeded(4, SeededRng(10));
  SeededRng rng(11);
  const auto [fo, fb] = encode_object_background(gen::random_grid(rng, 3, 3, 4), enc);
  EXPECT_NE(fo, fb);
  for (double v : fo.values()) EXPECT_GE(v, 0.0);
}

TEST(Correlate, ZeroTokenIsOneHalf) {
  SeededRng rng(12);
  const auto m = correlate(gen::random_grid(rng, 3, 4, 2), std::vector<double>{0.0, 0.0});
  for (double v : m.values()) EXPECT_EQ(v, 0.5);
}

TEST(Correlate, SingleCellExample) {
  FeatureGrid f = FeatureGrid::zeros({{"X", 1}, {"Y", 1}, {"C", 2}});
  f(0, 0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(correlate(f, std::vector<double>{2.0, 0.0})(0, 0), 1.0 / (1.0 + std::exp(-2.0)));
}

TEST(Correlate, ChannelMismatchThrows) {
  EXPECT_THROW(correlate(FeatureGrid::zeros({{"X", 1}, {"Y", 1}, {"C", 2}}), std::vector<double>{1.0}), ShapeError);
}

TEST(Reweight, SimilarityInvariantToPositiveMapScale) {
  SeededRng rng(13);
  const auto f = gen::random_grid(rng, 4, 4, 3);
  FeatureGrid m = FeatureGrid::zeros({{"X", 4}, {"Y", 4}});
  for (auto& v : m.data()) v = rng.uniform(0.1, 0.9);
  FeatureGrid m2 = m;
  for (auto& v : m2.data()) v *= 3.7;
  const auto a = reweight(f, m).similarity, b = reweight(f, m2).similarity;
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
}

TEST(Reweight, ScalesEachChannel) {
  SeededRng rng(14);
  const auto f = gen::random_grid(rng, 3, 2, 4);
  FeatureGrid m = FeatureGrid::zeros({{"X", 3}, {"Y", 2}});
  for (auto& v : m.data()) v = rng.uniform();
  const auto r = reweight(f, m);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(r.features(i, j, k), f(i, j, k) * r.similarity[k]);
}

CvcWeights seeded_weights(std::size_t ch, std::uint64_t seed) {
  return {ProposalEncoder::seeded(ch, SeededRng(seed, 1)), TokenAttentionWeights::seeded(ch, SeededRng(seed, 2)),
          CvcEncoders::seeded(ch, SeededRng(seed, 3))};
}

TEST(CvcForward, ZeroBevGivesHalfCorrelation) {
  const auto w = seeded_weights(3, 15);
  SeededRng rng(16);
  const auto out = cvc_forward(random_proposals(rng, 2, 3), FeatureGrid::zeros({{"X", 2}, {"Y", 2}, {"C", 3}}),
                               Token{random_vec(rng, 3)}, w);
  for (double v : out.corr_object.values()) EXPECT_EQ(v, 0.5);
  EXPECT_TRUE(out.activated.all_zero());
}

TEST(CvcForward, HandComposition) {
  const std::size_t ch = 3;
  const auto w = seeded_weights(ch, 17);
  SeededRng rng(18);
  const auto rc = gen::random_grid(rng, 2, 2, ch);
  const auto props = random_proposals(rng, 1, ch);
  const Token token{random_vec(rng, ch)};
  const auto out = cvc_forward(props, rc, token, w);

  // Attention over two rows, written out.
  const auto q = oracle::matvec(w.attention.query, token.value);
  const auto k0 = oracle::matvec(w.attention.key, token.value), k1 = oracle::matvec(w.attention.key, props.items[0].feature);
  const auto v0 = oracle::matvec(w.attention.value, token.value), v1 = oracle::matvec(w.attention.value, props.items[0].feature);
  double l0 = 0.0, l1 = 0.0;
  for (std::size_t k = 0; k < ch; ++k) {
    l0 += q[k] * k0[k] / std::sqrt(3.0);
    l1 += q[k] * k1[k] / std::sqrt(3.0);
  }
  const double w0 = std::exp(l0) / (std::exp(l0) + std::exp(l1));
  std::vector<double> agg(ch);
  for (std::size_t k = 0; k < ch; ++k) agg[k] = w0 * v0[k] + (1.0 - w0) * v1[k];

  const auto branch = [&](const Dense& enc) {
    std::vector<std::vector<double>> f(4);
    std::vector<double> m(4);
    for (std::size_t n = 0; n < 4; ++n) {
      const auto cell = rc.cell(n / 2, n % 2);
      f[n] = oracle::matvec(enc, {cell.begin(), cell.end()});
      for (auto& v : f[n]) v = std::max(v, 0.0);
      double s = 0.0;
      for (std::size_t k = 0; k < ch; ++k) s += f[n][k] * agg[k];
      m[n] = 1.0 / (1.0 + std::exp(-s));
    }
    std::vector<double> sim(ch);
    for (std::size_t k = 0; k < ch; ++k) {
      double num = 0.0, a = 0.0, b = 0.0;
      for (std::size_t n = 0; n < 4; ++n) {
        num += f[n][k] * m[n];
        a += f[n][k] * f[n][k];
        b += m[n] * m[n];
      }
      sim[k] = a > 0.0 ? num / std::sqrt(a * b) : 0.0;
    }
    std::vector<double> scaled(4 * ch);
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t k = 0; k < ch; ++k) scaled[n * ch + k] = f[n][k] * sim[k];
    return std::make_pair(m, scaled);
  };
  const auto [mo, so] = branch(w.encoders.object);
  const auto [mb, sb] = branch(w.encoders.background);
  for (std::size_t n = 0; n < 4; ++n) {
    EXPECT_NEAR(out.corr_object.values()[n], mo[n], 1e-12);
    EXPECT_NEAR(out.corr_background.values()[n], mb[n], 1e-12);
  }
  for (std::size_t n = 0; n < 4 * ch; ++n) EXPECT_NEAR(out.activated.values()[n], so[n] + sb[n], 1e-12);
}

}  // namespace
}  // namespace sifuse
