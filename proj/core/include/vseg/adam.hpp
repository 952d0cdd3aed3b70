#pragma once

#include "vseg/unet.hpp"

namespace vseg {

template <typename T>
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;
  std::vector<std::vector<T>> m1;  // first moments, parallel to Parameters order
  std::vector<std::vector<T>> m2;  // second moments

  void init_like(const Parameters<T>& params) {
    m1.clear();
    m2.clear();
    step_count = 0;
    for (const auto& t : params.tensors()) {
      m1.emplace_back(t.values.size(), T(0));
      m2.emplace_back(t.values.size(), T(0));
    }
  }
};

// Standard bias-corrected Adam update. Returns false without touching any
// state when a gradient is non-finite (the caller logs and skips the step).
template <typename T>
bool adam_step(Parameters<T>& params, const std::vector<std::vector<T>>& grads,
               AdamState<T>& state) {
  auto& tensors = params.tensors();
  if (grads.size() != tensors.size() || state.m1.size() != tensors.size())
    throw ValidationError("adam_step: gradient/state list does not match parameters");
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (grads[k].size() != tensors[k].values.size())
      throw ValidationError("adam_step: gradient shape mismatch for " + tensors[k].name);
    for (T g : grads[k])
      if (!std::isfinite(static_cast<double>(g))) return false;
  }

  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T one_minus_b1 = static_cast<T>(1.0 - state.beta1);
  const T one_minus_b2 = static_cast<T>(1.0 - state.beta2);
  const T step_size = static_cast<T>(state.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(state.eps);

  for (std::size_t k = 0; k < grads.size(); ++k) {
    T* p = tensors[k].values.data();
    T* m = state.m1[k].data();
    T* v = state.m2[k].data();
    const T* g = grads[k].data();
    const std::size_t n = grads[k].size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + one_minus_b1 * g[i];
      v[i] = b2 * v[i] + one_minus_b2 * g[i] * g[i];
      p[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
  }
  return true;
}

}  // namespace vseg
