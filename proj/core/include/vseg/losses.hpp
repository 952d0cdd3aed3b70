#pragma once

#include "vseg/autodiff_nn.hpp"
#include "vseg/deformation.hpp"
#include "vseg/unet.hpp"

namespace vseg {

struct FocalTverskyParams {
  double alpha = 0.7;        // false-negative weight
  double beta = 0.3;         // false-positive weight
  double gamma = 4.0 / 3.0;  // focal exponent; loss = (1 - TI)^(1/gamma)
  double epsilon = 1e-6;

  void validate() const {
    if (alpha < 0 || beta < 0)
      throw ValidationError("invalid-params: focal-Tversky alpha/beta must be >= 0");
    if (std::abs(alpha + beta - 1.0) > 1e-12)
      throw ValidationError("invalid-params: focal-Tversky alpha + beta must equal 1");
    if (!(gamma > 0)) throw ValidationError("invalid-params: focal-Tversky gamma must be > 0");
    if (epsilon < 0) throw ValidationError("invalid-params: focal-Tversky epsilon must be >= 0");
  }
};

// Per-scale aggregation weights; index 0 is the finest scale.
struct MssWeights {
  std::vector<double> alphas{1.0, 0.75, 0.5};

  void validate() const {
    if (alphas.empty()) throw ValidationError("MssWeights: need at least one alpha");
    double total = 0.0;
    for (double a : alphas) {
      if (a < 0) throw ValidationError("MssWeights: alphas must be nonnegative");
      total += a;
    }
    if (!(total > 0)) throw ValidationError("MssWeights: at least one alpha must be > 0");
  }

  static MssWeights defaults_for(int m) {
    MssWeights w;
    w.alphas.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) w.alphas[static_cast<std::size_t>(i)] = 1.0 - 0.25 * i;
    return w;
  }
};

template <typename T>
struct MssLossBreakdown {
  std::vector<Tensor<T>> per_scale;
  Tensor<T> total;  // sum(alpha_i * l_i) / sum(alpha_i)
  std::int64_t batch = 0;
};

struct ConsistencyCriterion {
  enum class Kind { mean_squared, focal_tversky_soft };
  Kind kind = Kind::mean_squared;
  double lambda = 1.0;
  FocalTverskyParams ft;  // used by the soft focal-Tversky variant

  void validate() const {
    if (lambda < 0) throw ValidationError("invalid-params: consistency weight must be >= 0");
  }
};

// Focal-Tversky loss, per-sample Tversky index then mean over the batch:
//   TI = (sum(pg) + eps) / (sum(pg) + alpha*sum(g(1-p)) + beta*sum(p(1-g)) + eps)
//   loss = (1 - TI)^(1/gamma)
// Rank-5 inputs reduce per sample over (C,X,Y,Z); lower ranks are treated
// as a single sample. An all-empty sample (denominator 0 at eps=0) counts
// as perfect agreement.
template <typename T>
Tensor<T> focal_tversky(const Tensor<T>& p, const Tensor<T>& g,
                        const FocalTverskyParams& params) {
  params.validate();
  detail::check_same_tape(p, g);
  detail::check_same_shape(p, g, "focal_tversky");

  const bool batched = p.shape().size() == 5;
  auto reduce = [&](const Tensor<T>& t) { return batched ? sum_samplewise(t) : sum(t); };

  Tensor<T> s_tp = reduce(mul(p, g));
  Tensor<T> s_fn = reduce(mul(g, scalar_rsub(1.0, p)));
  Tensor<T> s_fp = reduce(mul(p, scalar_rsub(1.0, g)));

  Tensor<T> num = scalar_add(s_tp, params.epsilon);
  Tensor<T> den = scalar_add(
      add(s_tp, add(scalar_mul(s_fn, params.alpha), scalar_mul(s_fp, params.beta))),
      params.epsilon);

  // Empty-vs-empty guard: force TI = 1 where the denominator vanishes.
  bool any_zero = false;
  std::vector<T> guard(den.values().size(), T(0));
  for (std::size_t i = 0; i < guard.size(); ++i)
    if (den.values()[i] == T(0)) {
      guard[i] = T(1);
      any_zero = true;
    }
  if (any_zero) {
    Tensor<T> ind = p.tape->constant(den.shape(), std::move(guard));
    num = add(num, ind);
    den = add(den, ind);
  }

  Tensor<T> ti = mul(num, pow_scalar(den, -1.0));
  Tensor<T> loss_per_sample = pow_scalar(scalar_rsub(1.0, ti), 1.0 / params.gamma);
  return mean(loss_per_sample);
}

// Eq-style MSS aggregation: l_i = focal_tversky(scale_i, y);
// L = sum(alpha_i * l_i) / sum(alpha_i).
template <typename T>
MssLossBreakdown<T> mss_loss(const MultiScaleOutput<T>& outputs, const Tensor<T>& y,
                             const MssWeights& w, const FocalTverskyParams& ft) {
  w.validate();
  if (static_cast<std::size_t>(outputs.m()) != w.alphas.size())
    throw ValidationError("mss_loss: " + std::to_string(outputs.m()) +
                          " outputs vs " + std::to_string(w.alphas.size()) + " weights");
  MssLossBreakdown<T> breakdown;
  breakdown.batch = y.shape().size() == 5 ? y.shape()[0] : 1;
  double alpha_total = 0.0;
  Tensor<T> acc;
  for (int i = 0; i < outputs.m(); ++i) {
    Tensor<T> li = focal_tversky(outputs.scales[static_cast<std::size_t>(i)], y, ft);
    breakdown.per_scale.push_back(li);
    const double a = w.alphas[static_cast<std::size_t>(i)];
    alpha_total += a;
    Tensor<T> weighted = scalar_mul(li, a);
    acc = (i == 0) ? weighted : add(acc, weighted);
  }
  breakdown.total = scalar_mul(acc, 1.0 / alpha_total);
  return breakdown;
}

// Supervised loss of the two Siamese branches: per-sample sum, batch mean.
// With per-scale losses already batch-averaged this is simply the sum of
// the branch aggregates.
template <typename T>
Tensor<T> supervised_loss(const MssLossBreakdown<T>& branch1,
                          const MssLossBreakdown<T>& branch2) {
  if (branch1.batch != branch2.batch)
    throw ValidationError("supervised_loss: batch-size mismatch");
  return add(branch1.total, branch2.total);
}

// Consistency between deform-then-predict and predict-then-deform:
// C(warp(y1, t), y2) with the same field t used on the branch-2 input.
template <typename T>
Tensor<T> consistency_loss(const Tensor<T>& y1, const Tensor<T>& y2,
                           std::shared_ptr<const std::vector<std::int64_t>> gather,
                           const ConsistencyCriterion& crit) {
  crit.validate();
  detail::check_same_shape(y1, y2, "consistency_loss");
  Tensor<T> warped = warp_gather(y1, std::move(gather));
  switch (crit.kind) {
    case ConsistencyCriterion::Kind::mean_squared: {
      Tensor<T> d = sub(warped, y2);
      return mean(mul(d, d));
    }
    case ConsistencyCriterion::Kind::focal_tversky_soft:
      return focal_tversky(warped, y2, crit.ft);
  }
  throw ValidationError("unknown consistency criterion");
}

template <typename T>
Tensor<T> consistency_loss(const Tensor<T>& y1, const Tensor<T>& y2,
                           const DeformationField& t, const ConsistencyCriterion& crit) {
  return consistency_loss(y1, y2, gather_indices(t), crit);
}

// Total objective: supervised + lambda * consistency.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& sup, const Tensor<T>& cons,
                     const ConsistencyCriterion& crit) {
  crit.validate();
  if (!std::isfinite(static_cast<double>(sup.item())) ||
      !std::isfinite(static_cast<double>(cons.item())))
    throw ValidationError("total_loss: non-finite input");
  return add(sup, scalar_mul(cons, crit.lambda));
}

}  // namespace vseg
