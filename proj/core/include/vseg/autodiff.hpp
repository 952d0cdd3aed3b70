#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "vseg/error.hpp"

namespace vseg {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

enum class Prim {
  leaf,
  add,
  sub,
  mul,
  scalar_add,
  scalar_mul,
  scalar_rsub,
  pow_scalar,
  relu,
  sigmoid,
  sum,
  mean,
  sum_samplewise,
  conv3d,
  maxpool3d,
  upsample_nearest,
  concat_channels,
  warp_gather,
  batchnorm,
};

struct ScalarAttr {
  double value = 0.0;
};
struct ConvAttrs {
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  bool has_bias = false;
};
struct PoolSaved {
  std::vector<std::int64_t> argmax;  // flat input index per output element
};
struct ResizeAttrs {
  Shape in_spatial;  // (X,Y,Z) of the input
};
struct ConcatAttrs {
  std::int64_t channels_a = 0;
  std::int64_t channels_b = 0;
};
struct WarpAttrs {
  // flat spatial gather map, one input index per output voxel of one (n,c) slab
  std::shared_ptr<const std::vector<std::int64_t>> gather;
};
template <typename T>
struct BnSaved {
  std::vector<T> mean;    // per channel
  std::vector<T> invstd;  // per channel
};

template <typename T>
class Tape;

// Lightweight handle into a tape. Copyable; values live on the tape.
template <typename T>
struct Tensor {
  Tape<T>* tape = nullptr;
  std::int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Shape& shape() const;
  const std::vector<T>& values() const;
  bool requires_grad() const;
  std::int64_t size() const { return numel(shape()); }
  T item() const;
};

template <typename T>
struct TapeNode {
  using Attrs = std::variant<std::monostate, ScalarAttr, ConvAttrs, PoolSaved,
                             ResizeAttrs, ConcatAttrs, WarpAttrs, BnSaved<T>>;
  using BackwardFn = void (*)(Tape<T>&, std::int32_t);

  Prim prim = Prim::leaf;
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily during backward
  bool requires_grad = false;
  std::array<std::int32_t, 3> inputs{-1, -1, -1};
  Attrs attrs;
  BackwardFn backward_fn = nullptr;
};

// Append-only tape of one forward program; creation order is topological
// order. One tape per training step, confined to one logical thread.
template <typename T>
class Tape {
 public:
  using Node = TapeNode<T>;

  std::int32_t size() const { return static_cast<std::int32_t>(nodes_.size()); }
  Node& node(std::int32_t id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)]; }
  void clear() { nodes_.clear(); }

  Tensor<T> leaf(Shape shape, std::vector<T> values, bool requires_grad) {
    if (numel(shape) != static_cast<std::int64_t>(values.size()))
      throw ValidationError("leaf value count does not match shape " + shape_str(shape));
    Node n;
    n.prim = Prim::leaf;
    n.shape = std::move(shape);
    n.value = std::move(values);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  Tensor<T> constant(Shape shape, std::vector<T> values) {
    return leaf(std::move(shape), std::move(values), false);
  }

  Tensor<T> scalar(T v) { return constant({1}, {v}); }

  Tensor<T> push(Node&& n) {
    nodes_.push_back(std::move(n));
    return Tensor<T>{this, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  // Reverse-mode sweep from a scalar root. Gradients accumulate by sum over
  // all paths; reverse creation order is a valid reverse topological order.
  void backward(const Tensor<T>& root) {
    if (root.tape != this || root.id < 0 || root.id >= size())
      throw ValidationError("backward: root-not-on-tape");
    if (numel(node(root.id).shape) != 1)
      throw ValidationError("backward: root-not-scalar");
    for (auto& n : nodes_) {
      n.grad.clear();
    }
    node(root.id).grad.assign(1, T(1));
    for (std::int32_t id = root.id; id >= 0; --id) {
      Node& n = node(id);
      if (n.grad.empty() || n.backward_fn == nullptr || !n.requires_grad) continue;
      n.backward_fn(*this, id);
    }
  }

  const std::vector<T>& grad(const Tensor<T>& t) const {
    if (t.tape != this) throw ValidationError("grad: tensor not on this tape");
    const Node& n = node(t.id);
    if (n.grad.empty()) throw ValidationError("grad: no gradient recorded for tensor");
    return n.grad;
  }

  bool has_grad(const Tensor<T>& t) const {
    return t.tape == this && !node(t.id).grad.empty();
  }

  // Ensures the gradient buffer of `id` exists (zero-filled).
  std::vector<T>& grad_buffer(std::int32_t id) {
    Node& n = node(id);
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
  }

 private:
  std::vector<Node> nodes_;
};

template <typename T>
const Shape& Tensor<T>::shape() const {
  return tape->node(id).shape;
}
template <typename T>
const std::vector<T>& Tensor<T>::values() const {
  return tape->node(id).value;
}
template <typename T>
bool Tensor<T>::requires_grad() const {
  return tape->node(id).requires_grad;
}
template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ValidationError("item() on non-scalar tensor");
  return values()[0];
}

namespace detail {

template <typename T>
void check_same_tape(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.tape != b.tape) throw ValidationError("tensors live on different tapes");
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!same_shape(a.shape(), b.shape()))
    throw ValidationError(std::string("shape-mismatch in ") + op + ": " +
                          shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
bool any_requires_grad(const Tensor<T>& a) {
  return a.requires_grad();
}
template <typename T>
bool any_requires_grad(const Tensor<T>& a, const Tensor<T>& b) {
  return a.requires_grad() || b.requires_grad();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops (no broadcasting; scalar-with-tensor has its own ops)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_tape(a, b);
  detail::check_same_shape(a, b, "add");
  TapeNode<T> n;
  n.prim = Prim::add;
  n.shape = a.shape();
  n.inputs = {a.id, b.id, -1};
  n.requires_grad = detail::any_requires_grad(a, b);
  n.value.resize(a.values().size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] + bv[i];
  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    const auto& g = node.grad;
    for (int k = 0; k < 2; ++k) {
      const auto in = node.inputs[k];
      if (!tape.node(in).requires_grad) continue;
      auto& gi = tape.grad_buffer(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  };
  return a.tape->push(std::move(n));
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_tape(a, b);
  detail::check_same_shape(a, b, "sub");
  TapeNode<T> n;
  n.prim = Prim::sub;
  n.shape = a.shape();
  n.inputs = {a.id, b.id, -1};
  n.requires_grad = detail::any_requires_grad(a, b);
  n.value.resize(a.values().size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] - bv[i];
  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    const auto& g = node.grad;
    if (tape.node(node.inputs[0]).requires_grad) {
      auto& ga = tape.grad_buffer(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tape.node(node.inputs[1]).requires_grad) {
      auto& gb = tape.grad_buffer(node.inputs[1]);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  };
  return a.tape->push(std::move(n));
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_tape(a, b);
  detail::check_same_shape(a, b, "mul");
  TapeNode<T> n;
  n.prim = Prim::mul;
  n.shape = a.shape();
  n.inputs = {a.id, b.id, -1};
  n.requires_grad = detail::any_requires_grad(a, b);
  n.value.resize(a.values().size());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] * bv[i];
  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    const auto& g = node.grad;
    const auto& av = tape.node(node.inputs[0]).value;
    const auto& bv = tape.node(node.inputs[1]).value;
    if (tape.node(node.inputs[0]).requires_grad) {
      auto& ga = tape.grad_buffer(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tape.node(node.inputs[1]).requires_grad) {
      auto& gb = tape.grad_buffer(node.inputs[1]);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  };
  return a.tape->push(std::move(n));
}

// ---------------------------------------------------------------------------
// Scalar-with-tensor ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> scalar_add(const Tensor<T>& a, double c) {
  TapeNode<T> n;
  n.prim = Prim::scalar_add;
  n.shape = a.shape();
  n.inputs = {a.id, -1, -1};
  n.requires_grad = a.requires_grad();
  n.attrs = ScalarAttr{c};
  n.value.resize(a.values().size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] + static_cast<T>(c);
  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    auto& gi = tape.grad_buffer(node.inputs[0]);
    for (std::size_t i = 0; i < node.grad.size(); ++i) gi[i] += node.grad[i];
  };
  return a.tape->push(std::move(n));
}

template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& a, double c) {
  TapeNode<T> n;
  n.prim = Prim::scalar_mul;
  n.shape = a.shape();
  n.inputs = {a.id, -1, -1};
  n.requires_grad = a.requires_grad();
  n.attrs = ScalarAttr{c};
  n.value.resize(a.values().size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] * static_cast<T>(c);
  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    const T c = static_cast<T>(std::get<ScalarAttr>(node.attrs).value);
    auto& gi = tape.grad_buffer(node.inputs[0]);
    for (std::size_t i = 0; i < node.grad.size(); ++i) gi[i] += node.grad[i] * c;
  };
  return a.tape->push(std::move(n));
}

// c - a, elementwise; the usual route to (1 - p).
template <typename T>
Tensor<T> scalar_rsub(double c, const Tensor<T>& a) {
  TapeNode<T> n;
  n.prim = Prim::scalar_rsub;
  n.shape = a.shape();
  n.inputs = {a.id, -1, -1};
  n.requires_grad = a.requires_grad();
  n.attrs = ScalarAttr{c};
  n.value.resize(a.values().size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = static_cast<T>(c) - av[i];
  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    auto& gi = tape.grad_buffer(node.inputs[0]);
    for (std::size_t i = 0; i < node.grad.size(); ++i) gi[i] -= node.grad[i];
  };
  return a.tape->push(std::move(n));
}

// Elementwise a^e with real exponent. The derivative e*a^(e-1) is
// undefined at a=0 for e<1; callers keep arguments away from 0 there.
template <typename T>
Tensor<T> pow_scalar(const Tensor<T>& a, double e) {
  TapeNode<T> n;
  n.prim = Prim::pow_scalar;
  n.shape = a.shape();
  n.inputs = {a.id, -1, -1};
  n.requires_grad = a.requires_grad();
  n.attrs = ScalarAttr{e};
  n.value.resize(a.values().size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i)
    n.value[i] = std::pow(av[i], static_cast<T>(e));
  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    const double e = std::get<ScalarAttr>(node.attrs).value;
    const auto& av = tape.node(node.inputs[0]).value;
    auto& gi = tape.grad_buffer(node.inputs[0]);
    for (std::size_t i = 0; i < node.grad.size(); ++i)
      gi[i] += node.grad[i] * static_cast<T>(e) * std::pow(av[i], static_cast<T>(e - 1.0));
  };
  return a.tape->push(std::move(n));
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

// Subgradient at exactly 0 is 0.
template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  TapeNode<T> n;
  n.prim = Prim::relu;
  n.shape = a.shape();
  n.inputs = {a.id, -1, -1};
  n.requires_grad = a.requires_grad();
  n.value.resize(a.values().size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] > T(0) ? av[i] : T(0);
  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    const auto& av = tape.node(node.inputs[0]).value;
    auto& gi = tape.grad_buffer(node.inputs[0]);
    for (std::size_t i = 0; i < node.grad.size(); ++i)
      if (av[i] > T(0)) gi[i] += node.grad[i];
  };
  return a.tape->push(std::move(n));
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  TapeNode<T> n;
  n.prim = Prim::sigmoid;
  n.shape = a.shape();
  n.inputs = {a.id, -1, -1};
  n.requires_grad = a.requires_grad();
  n.value.resize(a.values().size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i)
    n.value[i] = T(1) / (T(1) + std::exp(-av[i]));
  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    const auto& ov = node.value;
    auto& gi = tape.grad_buffer(node.inputs[0]);
    for (std::size_t i = 0; i < node.grad.size(); ++i)
      gi[i] += node.grad[i] * ov[i] * (T(1) - ov[i]);
  };
  return a.tape->push(std::move(n));
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  TapeNode<T> n;
  n.prim = Prim::sum;
  n.shape = {1};
  n.inputs = {a.id, -1, -1};
  n.requires_grad = a.requires_grad();
  T acc = T(0);
  for (T v : a.values()) acc += v;
  n.value = {acc};
  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    const T g = node.grad[0];
    auto& gi = tape.grad_buffer(node.inputs[0]);
    for (auto& v : gi) v += g;
  };
  return a.tape->push(std::move(n));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  TapeNode<T> n;
  n.prim = Prim::mean;
  n.shape = {1};
  n.inputs = {a.id, -1, -1};
  n.requires_grad = a.requires_grad();
  T acc = T(0);
  for (T v : a.values()) acc += v;
  const std::int64_t count = a.size();
  n.value = {acc / static_cast<T>(count)};
  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    auto& gi = tape.grad_buffer(node.inputs[0]);
    const T g = node.grad[0] / static_cast<T>(gi.size());
    for (auto& v : gi) v += g;
  };
  return a.tape->push(std::move(n));
}

// Reduces every dim except dim 0: (N, ...) -> (N). Used for per-sample
// loss terms.
template <typename T>
Tensor<T> sum_samplewise(const Tensor<T>& a) {
  const Shape& s = a.shape();
  if (s.empty()) throw ValidationError("sum_samplewise needs rank >= 1");
  const std::int64_t n_samples = s[0];
  const std::int64_t per = numel(s) / n_samples;
  TapeNode<T> n;
  n.prim = Prim::sum_samplewise;
  n.shape = {n_samples};
  n.inputs = {a.id, -1, -1};
  n.requires_grad = a.requires_grad();
  n.value.assign(static_cast<std::size_t>(n_samples), T(0));
  const auto& av = a.values();
  for (std::int64_t i = 0; i < n_samples; ++i) {
    T acc = T(0);
    const T* p = av.data() + i * per;
    for (std::int64_t j = 0; j < per; ++j) acc += p[j];
    n.value[static_cast<std::size_t>(i)] = acc;
  }
  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    auto& gi = tape.grad_buffer(node.inputs[0]);
    const std::int64_t n_samples = node.shape[0];
    const std::int64_t per = static_cast<std::int64_t>(gi.size()) / n_samples;
    for (std::int64_t i = 0; i < n_samples; ++i) {
      const T g = node.grad[static_cast<std::size_t>(i)];
      T* p = gi.data() + i * per;
      for (std::int64_t j = 0; j < per; ++j) p[j] += g;
    }
  };
  return a.tape->push(std::move(n));
}

// ---------------------------------------------------------------------------
// Gradient checking against central finite differences
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
};

// f builds a scalar program on the given tape from leaf tensors created from
// `inputs`. Analytic gradients are compared elementwise against central
// differences; rel-err = |a - n| / max(|a|, |n|, 1e-8). 64-bit only.
template <typename F>
GradCheckReport grad_check(F&& f, std::vector<std::pair<Shape, std::vector<double>>> inputs,
                           double h = 1e-5, double tol = 1e-4) {
  Tape<double> tape;
  std::vector<Tensor<double>> leaves;
  leaves.reserve(inputs.size());
  for (auto& [shape, vals] : inputs) leaves.push_back(tape.leaf(shape, vals, true));
  Tensor<double> root = f(tape, leaves);
  if (root.size() != 1) throw ValidationError("grad_check: program is not scalar-valued");
  tape.backward(root);
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves)
    analytic.push_back(tape.has_grad(leaf) ? tape.grad(leaf)
                                           : std::vector<double>(leaf.size(), 0.0));

  auto eval = [&](const std::vector<std::pair<Shape, std::vector<double>>>& in) {
    Tape<double> t;
    std::vector<Tensor<double>> ls;
    ls.reserve(in.size());
    for (auto& [shape, vals] : in) ls.push_back(t.leaf(shape, vals, true));
    return f(t, ls).item();
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].second.size(); ++i) {
      auto probe = inputs;
      probe[k].second[i] = inputs[k].second[i] + h;
      const double fp = eval(probe);
      probe[k].second[i] = inputs[k].second[i] - h;
      const double fm = eval(probe);
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      report.max_rel_err = std::max(report.max_rel_err, rel);
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace vseg
