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

#ifndef SIFUSE_FDL_HPP_
#define SIFUSE_FDL_HPP_

// Feature disentanglement learning: plain gradient descent on the token and
// the object/background encoders, with closed-form gradients through
// correlate, the cosine re-weighting, the encoders and token aggregation.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sifuse/cvc.hpp"
#include "sifuse/errors.hpp"
#include "sifuse/losses.hpp"
#include "sifuse/numerics.hpp"

namespace sifuse {

/// Everything the FDL objective depends on that is not trained.
struct FdlProblem {
  FeatureGrid rc_bev;             // F_RC, X x Y x C
  ProposalSet proposals;
  TokenAttentionWeights attention;
  FeatureGrid occ_object;         // m_o
  FeatureGrid occ_background;     // m_b
  LossWeights weights;
};

struct FdlParameters {
  std::vector<double> token;
  Dense object;
  Dense background;

  std::size_t packed_size() const { return token.size() + object.weight.size() + background.weight.size(); }

  std::vector<double> pack() const {
    std::vector<double> x(token);
    x.insert(x.end(), object.weight.begin(), object.weight.end());
    x.insert(x.end(), background.weight.begin(), background.weight.end());
    return x;
  }

  void unpack(std::span<const double> x) {
    if (x.size() != packed_size()) throw ShapeError("FdlParameters::unpack: size mismatch");
    auto it = x.begin();
    std::copy(it, it + static_cast<long>(token.size()), token.begin());
    it += static_cast<long>(token.size());
    std::copy(it, it + static_cast<long>(object.weight.size()), object.weight.begin());
    it += static_cast<long>(object.weight.size());
    std::copy(it, it + static_cast<long>(background.weight.size()), background.weight.begin());
  }
};

struct FdlTerms {
  double seg_object = 0.0;
  double seg_background = 0.0;
  double neg_object = 0.0;
  double neg_background = 0.0;
  double total = 0.0;
};

struct FdlEvaluation {
  FdlTerms terms;
  std::vector<double> grad;  // packed like FdlParameters::pack
  FeatureGrid corr_object;
  FeatureGrid corr_background;
};

namespace fdl_detail {

struct BranchResult {
  double seg = 0.0;
  double neg = 0.0;
  FeatureGrid corr;
  std::vector<double> grad_t;       // dL/dt from this branch
  std::vector<double> grad_weight;  // dL/dW, out x in
};

// One of the two correlation branches, scaled by the loss weights.
inline BranchResult branch(const FeatureGrid& rc, const Dense& enc, std::span<const double> t, const FeatureGrid& target,
                           const LossWeights& w, bool want_grad) {
  const std::size_t nx = rc.dim(0), ny = rc.dim(1), ch = rc.dim(2), cells = nx * ny;
  BranchResult out;
  FeatureGrid pre = apply_per_cell(rc, enc, false);
  FeatureGrid feat = pre;
  for (auto& v : feat.data()) v = std::max(v, 0.0);
  out.corr = correlate(feat, t);
  const auto seg = loss_seg(out.corr, target);
  const auto sim = channel_cosine(feat, out.corr);
  const auto neg = loss_neg(sim);
  out.seg = seg.value;
  out.neg = neg.value;
  if (!want_grad) return out;

  const auto& m = out.corr.values();
  const auto& a = feat.values();
  // Cosine statistics per channel.
  double msq = 0.0;
  for (double v : m) msq += v * v;
  const double mnorm = std::sqrt(msq);
  std::vector<double> anorm(ch, 0.0);
  for (std::size_t x = 0; x < cells; ++x)
    for (std::size_t c = 0; c < ch; ++c) anorm[c] += a[x * ch + c] * a[x * ch + c];
  for (auto& v : anorm) v = std::sqrt(v);
  std::vector<double> g_sim(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    g_sim[c] = (anorm[c] > 0.0 && mnorm > 0.0) ? w.lambda2 * neg.grad[c] : 0.0;
  }

  // dL/dm and dL/da.
  std::vector<double> g_m(cells), g_a(cells * ch, 0.0);
  for (std::size_t x = 0; x < cells; ++x) {
    double gm = w.lambda3 * seg.grad[x];
    for (std::size_t c = 0; c < ch; ++c) {
      if (g_sim[c] == 0.0) continue;
      const double ac = a[x * ch + c];
      gm += g_sim[c] * (ac / (anorm[c] * mnorm) - sim[c] * m[x] / msq);
      g_a[x * ch + c] += g_sim[c] * (m[x] / (anorm[c] * mnorm) - sim[c] * ac / (anorm[c] * anorm[c]));
    }
    g_m[x] = gm;
  }

  out.grad_t.assign(ch, 0.0);
  out.grad_weight.assign(enc.weight.size(), 0.0);
  const auto& p = pre.values();
  const auto& in = rc.values();
  for (std::size_t x = 0; x < cells; ++x) {
    const double gs = g_m[x] * m[x] * (1.0 - m[x]);
    for (std::size_t c = 0; c < ch; ++c) {
      out.grad_t[c] += gs * a[x * ch + c];
      if (p[x * ch + c] <= 0.0) continue;
      const double gpre = gs * t[c] + g_a[x * ch + c];
      double* row = out.grad_weight.data() + c * enc.in;
      for (std::size_t k = 0; k < enc.in; ++k) row[k] += gpre * in[x * enc.in + k];
    }
  }
  return out;
}

}  // namespace fdl_detail

/// Objective lambda3 * (Lseg(m_o) + Lseg(m_b)) + lambda2 * (Lneg(v_o) + Lneg(v_b))
/// and, if requested, its gradient with respect to the packed parameters.
inline FdlEvaluation evaluate_fdl(const FdlProblem& problem, const FdlParameters& params, bool want_grad = true) {
  require_rank(problem.rc_bev, 3, "evaluate_fdl");
  const auto agg = token_aggregate(params.token, problem.proposals, problem.attention);
  auto ob = fdl_detail::branch(problem.rc_bev, params.object, agg.output, problem.occ_object, problem.weights, want_grad);
  auto bg = fdl_detail::branch(problem.rc_bev, params.background, agg.output, problem.occ_background, problem.weights,
                               want_grad);
  FdlEvaluation ev;
  ev.terms.seg_object = ob.seg;
  ev.terms.seg_background = bg.seg;
  ev.terms.neg_object = ob.neg;
  ev.terms.neg_background = bg.neg;
  ev.terms.total = problem.weights.lambda3 * (ob.seg + bg.seg) + problem.weights.lambda2 * (ob.neg + bg.neg);
  ev.corr_object = std::move(ob.corr);
  ev.corr_background = std::move(bg.corr);
  if (!want_grad) return ev;

  std::vector<double> g_t(ob.grad_t);
  for (std::size_t c = 0; c < g_t.size(); ++c) g_t[c] += bg.grad_t[c];
  ev.grad = token_aggregate_backward(params.token, problem.proposals, problem.attention, g_t);
  ev.grad.insert(ev.grad.end(), ob.grad_weight.begin(), ob.grad_weight.end());
  ev.grad.insert(ev.grad.end(), bg.grad_weight.begin(), bg.grad_weight.end());
  return ev;
}

struct FdlTrace {
  std::vector<FdlTerms> steps;  // steps[k] = objective after k updates
  FdlParameters final_params;
  FeatureGrid corr_object;      // m_o at the final parameters
};

class FdlDivergence : public OptimizerError {
 public:
  FdlDivergence(const std::string& what, FdlTrace trace) : OptimizerError(what), trace_(std::move(trace)) {}
  const FdlTrace& trace() const { return trace_; }

 private:
  FdlTrace trace_;
};

/// Plain gradient descent. Throws FdlDivergence if the objective exceeds ten
/// times its initial value or the parameters stop being finite.
inline FdlTrace fdl_optimize(const FdlProblem& problem, FdlParameters params, std::size_t steps, double learning_rate) {
  FdlTrace trace;
  auto ev = evaluate_fdl(problem, params, steps > 0);
  const double initial = ev.terms.total;
  trace.steps.push_back(ev.terms);
  const auto diverged = [&](std::size_t step) {
    trace.final_params = params;
    trace.corr_object = ev.corr_object;
    return FdlDivergence("fdl_optimize: objective diverged at step " + std::to_string(step), std::move(trace));
  };
  for (std::size_t step = 0; step < steps; ++step) {
    auto x = params.pack();
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= learning_rate * ev.grad[i];
    params.unpack(x);
    if (!std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); })) throw diverged(step + 1);
    try {
      ev = evaluate_fdl(problem, params, step + 1 < steps);
    } catch (const NumericError&) {
      throw diverged(step + 1);
    }
    trace.steps.push_back(ev.terms);
    if (!std::isfinite(ev.terms.total) || ev.terms.total > 10.0 * initial) throw diverged(step + 1);
  }
  trace.final_params = std::move(params);
  trace.corr_object = std::move(ev.corr_object);
  return trace;
}

}  // namespace sifuse

#endif  // SIFUSE_FDL_HPP_
