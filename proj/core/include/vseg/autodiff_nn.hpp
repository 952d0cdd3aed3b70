#pragma once

#include <Eigen/Core>

#include "vseg/autodiff.hpp"
#include "vseg/parallel.hpp"

namespace vseg {

// Global worker count for the heavy kernels. 1 (the default) is the fully
// deterministic single-threaded mode; results are identical for any value
// because work decomposition is fixed, not thread-count dependent.
int compute_threads();
void set_compute_threads(int n);

namespace detail {

inline std::atomic<int>& compute_threads_slot() {
  static std::atomic<int> n{1};
  return n;
}

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap =
    Eigen::Map<MatRM<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap =
    Eigen::Map<const MatRM<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

constexpr std::int64_t kConvChunk = 2048;  // output voxels per GEMM task

struct ConvDims {
  std::int64_t n, cin, x, y, z;
  std::int64_t cout, k;
  std::int64_t ox, oy, oz;
  int stride, pad;
  std::int64_t kdim() const { return cin * k * k * k; }
  std::int64_t out_voxels() const { return ox * oy * oz; }
  std::int64_t in_voxels() const { return x * y * z; }
};

inline ConvDims conv_dims(const Shape& xs, const Shape& ws, int stride, int pad) {
  if (xs.size() != 5 || ws.size() != 5)
    throw ValidationError("conv3d expects rank-5 input and weight");
  if (xs[1] != ws[1])
    throw ValidationError("shape-mismatch in conv3d: input channels " +
                          std::to_string(xs[1]) + " vs weight " + std::to_string(ws[1]));
  if (ws[2] != ws[3] || ws[3] != ws[4])
    throw ValidationError("conv3d kernel must be cubic");
  ConvDims d;
  d.n = xs[0];
  d.cin = xs[1];
  d.x = xs[2];
  d.y = xs[3];
  d.z = xs[4];
  d.cout = ws[0];
  d.k = ws[2];
  d.stride = stride;
  d.pad = pad;
  if (stride < 1) throw ValidationError("conv3d stride must be >= 1");
  if (pad < 0) throw ValidationError("conv3d padding must be >= 0");
  d.ox = (d.x + 2 * pad - d.k) / stride + 1;
  d.oy = (d.y + 2 * pad - d.k) / stride + 1;
  d.oz = (d.z + 2 * pad - d.k) / stride + 1;
  if (d.ox < 1 || d.oy < 1 || d.oz < 1)
    throw ValidationError("conv3d output would be empty for input " + shape_str(xs));
  return d;
}

// Fills the column block for output voxels [v0, v1) of sample n.
// Row r = kx + K*(ky + K*(kz + K*ci)) matches the weight layout, so the
// GEMM below is a plain W * cols.
template <typename T>
void im2col_block(const T* x, const ConvDims& d, std::int64_t n, std::int64_t v0,
                  std::int64_t v1, MatRM<T>& cols) {
  const std::int64_t nv = v1 - v0;
  const T* xin = x + n * d.cin * d.in_voxels();
  std::int64_t r = 0;
  for (std::int64_t ci = 0; ci < d.cin; ++ci) {
    const T* plane = xin + ci * d.in_voxels();
    for (std::int64_t kz = 0; kz < d.k; ++kz)
      for (std::int64_t ky = 0; ky < d.k; ++ky)
        for (std::int64_t kx = 0; kx < d.k; ++kx, ++r) {
          T* row = cols.data() + r * nv;
          for (std::int64_t v = v0; v < v1; ++v) {
            const std::int64_t ox = v % d.ox;
            const std::int64_t oy = (v / d.ox) % d.oy;
            const std::int64_t oz = v / (d.ox * d.oy);
            const std::int64_t ix = ox * d.stride + kx - d.pad;
            const std::int64_t iy = oy * d.stride + ky - d.pad;
            const std::int64_t iz = oz * d.stride + kz - d.pad;
            row[v - v0] =
                (ix >= 0 && ix < d.x && iy >= 0 && iy < d.y && iz >= 0 && iz < d.z)
                    ? plane[ix + d.x * (iy + d.y * iz)]
                    : T(0);
          }
        }
  }
}

// Scatter-add of a column block back into the input gradient (col2im).
template <typename T>
void col2im_block(const MatRM<T>& cols, const ConvDims& d, std::int64_t n,
                  std::int64_t v0, std::int64_t v1, T* gx) {
  const std::int64_t nv = v1 - v0;
  T* gin = gx + n * d.cin * d.in_voxels();
  std::int64_t r = 0;
  for (std::int64_t ci = 0; ci < d.cin; ++ci) {
    T* plane = gin + ci * d.in_voxels();
    for (std::int64_t kz = 0; kz < d.k; ++kz)
      for (std::int64_t ky = 0; ky < d.k; ++ky)
        for (std::int64_t kx = 0; kx < d.k; ++kx, ++r) {
          const T* row = cols.data() + r * nv;
          for (std::int64_t v = v0; v < v1; ++v) {
            const std::int64_t ox = v % d.ox;
            const std::int64_t oy = (v / d.ox) % d.oy;
            const std::int64_t oz = v / (d.ox * d.oy);
            const std::int64_t ix = ox * d.stride + kx - d.pad;
            const std::int64_t iy = oy * d.stride + ky - d.pad;
            const std::int64_t iz = oz * d.stride + kz - d.pad;
            if (ix >= 0 && ix < d.x && iy >= 0 && iy < d.y && iz >= 0 && iz < d.z)
              plane[ix + d.x * (iy + d.y * iz)] += row[v - v0];
          }
        }
  }
}

template <typename T>
void conv3d_backward(Tape<T>& tape, std::int32_t id);

template <typename T>
void upsample_backward(Tape<T>& tape, std::int32_t id);

template <typename T>
std::array<std::vector<std::int64_t>, 3> nearest_index_luts(const Shape& in_spatial,
                                                            const Shape& out_spatial) {
  std::array<std::vector<std::int64_t>, 3> lut;
  for (int a = 0; a < 3; ++a) {
    lut[a].resize(static_cast<std::size_t>(out_spatial[a]));
    for (std::int64_t i = 0; i < out_spatial[a]; ++i)
      lut[a][static_cast<std::size_t>(i)] = (i * in_spatial[a]) / out_spatial[a];
  }
  return lut;
}

}  // namespace detail

inline int compute_threads() { return detail::compute_threads_slot().load(); }
inline void set_compute_threads(int n) {
  detail::compute_threads_slot().store(n < 1 ? 1 : n);
}

// ---------------------------------------------------------------------------
// conv3d: cubic kernel, zero padding, configurable stride.
// x: (N, Cin, X, Y, Z), w: (Cout, Cin, K, K, K), bias: (Cout) or invalid.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int stride = 1, int padding = 1) {
  detail::check_same_tape(x, w);
  const auto d = detail::conv_dims(x.shape(), w.shape(), stride, padding);
  const bool has_bias = bias.valid();
  if (has_bias) {
    detail::check_same_tape(x, bias);
    if (bias.shape() != Shape{d.cout})
      throw ValidationError("shape-mismatch in conv3d: bias must be (Cout)");
  }

  TapeNode<T> n;
  n.prim = Prim::conv3d;
  n.shape = {d.n, d.cout, d.ox, d.oy, d.oz};
  n.inputs = {x.id, w.id, has_bias ? bias.id : -1};
  n.requires_grad = x.requires_grad() || w.requires_grad() ||
                    (has_bias && bias.requires_grad());
  n.attrs = ConvAttrs{static_cast<int>(d.k), stride, padding, has_bias};
  n.value.assign(static_cast<std::size_t>(d.n * d.cout * d.out_voxels()), T(0));

  const T* xv = x.values().data();
  const T* wv = w.values().data();
  const T* bv = has_bias ? bias.values().data() : nullptr;
  T* ov = n.value.data();

  const std::int64_t n_chunks =
      (d.out_voxels() + detail::kConvChunk - 1) / detail::kConvChunk;
  const std::int64_t tasks = d.n * n_chunks;
  Eigen::Map<const detail::MatRM<T>> wmat(wv, d.cout, d.kdim());

  parallel_for(static_cast<std::size_t>(tasks), compute_threads(), [&](std::size_t t) {
    const std::int64_t ni = static_cast<std::int64_t>(t) / n_chunks;
    const std::int64_t ci = static_cast<std::int64_t>(t) % n_chunks;
    const std::int64_t v0 = ci * detail::kConvChunk;
    const std::int64_t v1 = std::min(v0 + detail::kConvChunk, d.out_voxels());
    detail::MatRM<T> cols(d.kdim(), v1 - v0);
    detail::im2col_block(xv, d, ni, v0, v1, cols);
    detail::StridedMap<T> out(ov + ni * d.cout * d.out_voxels() + v0, d.cout, v1 - v0,
                              Eigen::OuterStride<>(d.out_voxels()));
    out.noalias() = wmat * cols;
    if (bv)
      for (std::int64_t co = 0; co < d.cout; ++co)
        out.row(co).array() += bv[co];
  });

  n.backward_fn = &detail::conv3d_backward<T>;
  return x.tape->push(std::move(n));
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, int stride = 1,
                 int padding = 1) {
  return conv3d(x, w, Tensor<T>{}, stride, padding);
}

namespace detail {

template <typename T>
void conv3d_backward(Tape<T>& tape, std::int32_t id) {
  auto& node = tape.node(id);
  const auto attrs = std::get<ConvAttrs>(node.attrs);
  const auto& xn = tape.node(node.inputs[0]);
  const auto& wn = tape.node(node.inputs[1]);
  const auto d = conv_dims(xn.shape, wn.shape, attrs.stride, attrs.padding);

  const T* xv = xn.value.data();
  const T* wv = wn.value.data();
  const T* gov = node.grad.data();
  const std::int64_t n_chunks = (d.out_voxels() + kConvChunk - 1) / kConvChunk;
  const std::int64_t tasks = d.n * n_chunks;

  const bool need_gw = wn.requires_grad;
  const bool need_gb = attrs.has_bias && tape.node(node.inputs[2]).requires_grad;
  const bool need_gx = xn.requires_grad;

  if (need_gw || need_gb) {
    // Parallel partials per task, reduced serially in task order so that the
    // accumulation order never depends on the thread count.
    std::vector<MatRM<T>> gw_parts;
    std::vector<std::vector<T>> gb_parts;
    if (need_gw) gw_parts.assign(tasks, MatRM<T>());
    if (need_gb) gb_parts.assign(tasks, {});
    parallel_for(static_cast<std::size_t>(tasks), compute_threads(), [&](std::size_t t) {
      const std::int64_t ni = static_cast<std::int64_t>(t) / n_chunks;
      const std::int64_t ci = static_cast<std::int64_t>(t) % n_chunks;
      const std::int64_t v0 = ci * kConvChunk;
      const std::int64_t v1 = std::min(v0 + kConvChunk, d.out_voxels());
      ConstStridedMap<T> go(gov + ni * d.cout * d.out_voxels() + v0, d.cout, v1 - v0,
                            Eigen::OuterStride<>(d.out_voxels()));
      if (need_gw) {
        MatRM<T> cols(d.kdim(), v1 - v0);
        im2col_block(xv, d, ni, v0, v1, cols);
        gw_parts[t].noalias() = go * cols.transpose();
      }
      if (need_gb) {
        gb_parts[t].resize(static_cast<std::size_t>(d.cout));
        for (std::int64_t co = 0; co < d.cout; ++co)
          gb_parts[t][static_cast<std::size_t>(co)] = go.row(co).sum();
      }
    });
    if (need_gw) {
      auto& gw = tape.grad_buffer(node.inputs[1]);
      Eigen::Map<MatRM<T>> gwm(gw.data(), d.cout, d.kdim());
      for (std::int64_t t = 0; t < tasks; ++t) gwm += gw_parts[static_cast<std::size_t>(t)];
    }
    if (need_gb) {
      auto& gb = tape.grad_buffer(node.inputs[2]);
      for (std::int64_t t = 0; t < tasks; ++t)
        for (std::int64_t co = 0; co < d.cout; ++co)
          gb[static_cast<std::size_t>(co)] += gb_parts[static_cast<std::size_t>(t)]
                                                      [static_cast<std::size_t>(co)];
    }
  }

  if (need_gx) {
    // Serial: adjacent chunks scatter into overlapping input regions.
    auto& gx = tape.grad_buffer(node.inputs[0]);
    Eigen::Map<const MatRM<T>> wmat(wv, d.cout, d.kdim());
    MatRM<T> gcols;
    for (std::int64_t t = 0; t < tasks; ++t) {
      const std::int64_t ni = t / n_chunks;
      const std::int64_t ci = t % n_chunks;
      const std::int64_t v0 = ci * kConvChunk;
      const std::int64_t v1 = std::min(v0 + kConvChunk, d.out_voxels());
      ConstStridedMap<T> go(gov + ni * d.cout * d.out_voxels() + v0, d.cout, v1 - v0,
                            Eigen::OuterStride<>(d.out_voxels()));
      gcols.noalias() = wmat.transpose() * go;
      col2im_block(gcols, d, ni, v0, v1, gx.data());
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// max-pool3d, 2x2x2 window, stride 2. Ties break to the lowest flat index.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 5) throw ValidationError("maxpool3d expects rank-5 input");
  if (s[2] % 2 || s[3] % 2 || s[4] % 2)
    throw ValidationError("shape-mismatch in maxpool3d: spatial dims must be even, got " +
                          shape_str(s));
  const std::int64_t N = s[0], C = s[1], X = s[2], Y = s[3], Z = s[4];
  const std::int64_t OX = X / 2, OY = Y / 2, OZ = Z / 2;

  TapeNode<T> n;
  n.prim = Prim::maxpool3d;
  n.shape = {N, C, OX, OY, OZ};
  n.inputs = {x.id, -1, -1};
  n.requires_grad = x.requires_grad();
  n.value.resize(static_cast<std::size_t>(N * C * OX * OY * OZ));
  PoolSaved saved;
  saved.argmax.resize(n.value.size());

  const T* xv = x.values().data();
  std::size_t o = 0;
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const std::int64_t base = nc * X * Y * Z;
    for (std::int64_t oz = 0; oz < OZ; ++oz)
      for (std::int64_t oy = 0; oy < OY; ++oy)
        for (std::int64_t ox = 0; ox < OX; ++ox, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t best_idx = -1;
          for (std::int64_t kz = 0; kz < 2; ++kz)
            for (std::int64_t ky = 0; ky < 2; ++ky)
              for (std::int64_t kx = 0; kx < 2; ++kx) {
                const std::int64_t idx =
                    base + (2 * ox + kx) + X * ((2 * oy + ky) + Y * (2 * oz + kz));
                if (xv[idx] > best) {
                  best = xv[idx];
                  best_idx = idx;
                }
              }
          n.value[o] = best;
          saved.argmax[o] = best_idx;
        }
  }
  n.attrs = std::move(saved);
  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    const auto& argmax = std::get<PoolSaved>(node.attrs).argmax;
    auto& gx = tape.grad_buffer(node.inputs[0]);
    for (std::size_t i = 0; i < node.grad.size(); ++i)
      gx[static_cast<std::size_t>(argmax[i])] += node.grad[i];
  };
  return x.tape->push(std::move(n));
}

// ---------------------------------------------------------------------------
// Nearest-neighbor upsample to an arbitrary spatial target.
// Output index i maps to input index floor(i * in / out).
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, const Shape& target_spatial) {
  const Shape& s = x.shape();
  if (s.size() != 5) throw ValidationError("upsample_nearest expects rank-5 input");
  if (target_spatial.size() != 3)
    throw ValidationError("upsample_nearest target must be (X,Y,Z)");
  for (auto t : target_spatial)
    if (t <= 0) throw ValidationError("non-positive target size in upsample_nearest");
  const std::int64_t N = s[0], C = s[1];
  const Shape in_spatial{s[2], s[3], s[4]};
  const auto lut = detail::nearest_index_luts<T>(in_spatial, target_spatial);
  const std::int64_t TX = target_spatial[0], TY = target_spatial[1], TZ = target_spatial[2];

  TapeNode<T> n;
  n.prim = Prim::upsample_nearest;
  n.shape = {N, C, TX, TY, TZ};
  n.inputs = {x.id, -1, -1};
  n.requires_grad = x.requires_grad();
  n.attrs = ResizeAttrs{in_spatial};
  n.value.resize(static_cast<std::size_t>(N * C * TX * TY * TZ));

  const T* xv = x.values().data();
  const std::int64_t in_vox = numel(in_spatial);
  T* out = n.value.data();
  for (std::int64_t nc = 0; nc < N * C; ++nc) {
    const T* plane = xv + nc * in_vox;
    for (std::int64_t tz = 0; tz < TZ; ++tz)
      for (std::int64_t ty = 0; ty < TY; ++ty) {
        const std::int64_t in_row =
            in_spatial[0] * (lut[1][static_cast<std::size_t>(ty)] +
                             in_spatial[1] * lut[2][static_cast<std::size_t>(tz)]);
        for (std::int64_t tx = 0; tx < TX; ++tx, ++out)
          *out = plane[lut[0][static_cast<std::size_t>(tx)] + in_row];
      }
  }
  n.backward_fn = &detail::upsample_backward<T>;
  return x.tape->push(std::move(n));
}

// Convenience x2 form.
template <typename T>
Tensor<T> upsample_nearest_2x(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 5) throw ValidationError("upsample_nearest expects rank-5 input");
  return upsample_nearest(x, {s[2] * 2, s[3] * 2, s[4] * 2});
}

namespace detail {

template <typename T>
void upsample_backward(Tape<T>& tape, std::int32_t id) {
  auto& node = tape.node(id);
  const Shape& in_spatial = std::get<ResizeAttrs>(node.attrs).in_spatial;
  const Shape out_spatial{node.shape[2], node.shape[3], node.shape[4]};
  const auto lut = nearest_index_luts<T>(in_spatial, out_spatial);
  auto& gx = tape.grad_buffer(node.inputs[0]);
  const std::int64_t NC = node.shape[0] * node.shape[1];
  const std::int64_t in_vox = numel(in_spatial);
  const T* g = node.grad.data();
  for (std::int64_t nc = 0; nc < NC; ++nc) {
    T* plane = gx.data() + nc * in_vox;
    for (std::int64_t tz = 0; tz < out_spatial[2]; ++tz)
      for (std::int64_t ty = 0; ty < out_spatial[1]; ++ty) {
        const std::int64_t in_row =
            in_spatial[0] * (lut[1][static_cast<std::size_t>(ty)] +
                             in_spatial[1] * lut[2][static_cast<std::size_t>(tz)]);
        for (std::int64_t tx = 0; tx < out_spatial[0]; ++tx, ++g)
          plane[lut[0][static_cast<std::size_t>(tx)] + in_row] += *g;
      }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Channel concatenation of two rank-5 tensors.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 5 || sb.size() != 5)
    throw ValidationError("concat_channels expects rank-5 inputs");
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3] || sa[4] != sb[4])
    throw ValidationError("shape-mismatch in concat_channels: " + shape_str(sa) +
                          " vs " + shape_str(sb));
  const std::int64_t N = sa[0], Ca = sa[1], Cb = sb[1];
  const std::int64_t vox = sa[2] * sa[3] * sa[4];

  TapeNode<T> n;
  n.prim = Prim::concat_channels;
  n.shape = {N, Ca + Cb, sa[2], sa[3], sa[4]};
  n.inputs = {a.id, b.id, -1};
  n.requires_grad = detail::any_requires_grad(a, b);
  n.attrs = ConcatAttrs{Ca, Cb};
  n.value.resize(static_cast<std::size_t>(N * (Ca + Cb) * vox));
  const T* av = a.values().data();
  const T* bv = b.values().data();
  for (std::int64_t ni = 0; ni < N; ++ni) {
    std::copy(av + ni * Ca * vox, av + (ni + 1) * Ca * vox,
              n.value.data() + ni * (Ca + Cb) * vox);
    std::copy(bv + ni * Cb * vox, bv + (ni + 1) * Cb * vox,
              n.value.data() + ni * (Ca + Cb) * vox + Ca * vox);
  }
  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    const auto at = std::get<ConcatAttrs>(node.attrs);
    const std::int64_t N = node.shape[0];
    const std::int64_t vox = node.shape[2] * node.shape[3] * node.shape[4];
    const std::int64_t Ca = at.channels_a, Cb = at.channels_b;
    const T* g = node.grad.data();
    if (tape.node(node.inputs[0]).requires_grad) {
      auto& ga = tape.grad_buffer(node.inputs[0]);
      for (std::int64_t ni = 0; ni < N; ++ni) {
        const T* src = g + ni * (Ca + Cb) * vox;
        T* dst = ga.data() + ni * Ca * vox;
        for (std::int64_t i = 0; i < Ca * vox; ++i) dst[i] += src[i];
      }
    }
    if (tape.node(node.inputs[1]).requires_grad) {
      auto& gb = tape.grad_buffer(node.inputs[1]);
      for (std::int64_t ni = 0; ni < N; ++ni) {
        const T* src = g + ni * (Ca + Cb) * vox + Ca * vox;
        T* dst = gb.data() + ni * Cb * vox;
        for (std::int64_t i = 0; i < Cb * vox; ++i) dst[i] += src[i];
      }
    }
  };
  return a.tape->push(std::move(n));
}

// ---------------------------------------------------------------------------
// Differentiable nearest-neighbor warp: pure gather with a precomputed flat
// spatial index map (one entry per output voxel, applied to every (n,c)).
// Backward is the matching scatter-add.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> warp_gather(const Tensor<T>& x,
                      std::shared_ptr<const std::vector<std::int64_t>> gather) {
  const Shape& s = x.shape();
  if (s.size() != 5) throw ValidationError("warp_gather expects rank-5 input");
  const std::int64_t vox = s[2] * s[3] * s[4];
  if (static_cast<std::int64_t>(gather->size()) != vox)
    throw ValidationError("shape-mismatch in warp_gather: index map covers " +
                          std::to_string(gather->size()) + " voxels, tensor has " +
                          std::to_string(vox));

  TapeNode<T> n;
  n.prim = Prim::warp_gather;
  n.shape = s;
  n.inputs = {x.id, -1, -1};
  n.requires_grad = x.requires_grad();
  n.attrs = WarpAttrs{gather};
  n.value.resize(x.values().size());
  const T* xv = x.values().data();
  const auto& g = *gather;
  const std::int64_t NC = s[0] * s[1];
  for (std::int64_t nc = 0; nc < NC; ++nc) {
    const T* in_plane = xv + nc * vox;
    T* out_plane = n.value.data() + nc * vox;
    for (std::int64_t i = 0; i < vox; ++i) out_plane[i] = in_plane[g[static_cast<std::size_t>(i)]];
  }
  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    const auto& g = *std::get<WarpAttrs>(node.attrs).gather;
    auto& gx = tape.grad_buffer(node.inputs[0]);
    const std::int64_t vox = node.shape[2] * node.shape[3] * node.shape[4];
    const std::int64_t NC = node.shape[0] * node.shape[1];
    for (std::int64_t nc = 0; nc < NC; ++nc) {
      const T* go = node.grad.data() + nc * vox;
      T* gi = gx.data() + nc * vox;
      for (std::int64_t i = 0; i < vox; ++i) gi[g[static_cast<std::size_t>(i)]] += go[i];
    }
  };
  return x.tape->push(std::move(n));
}

// ---------------------------------------------------------------------------
// Batch normalization over (N, X, Y, Z) per channel, training mode (batch
// statistics, biased variance). gamma/beta are rank-1 (C) tensors.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    double eps = 1e-5) {
  detail::check_same_tape(x, gamma);
  detail::check_same_tape(x, beta);
  const Shape& s = x.shape();
  if (s.size() != 5) throw ValidationError("batchnorm expects rank-5 input");
  const std::int64_t N = s[0], C = s[1];
  const std::int64_t vox = s[2] * s[3] * s[4];
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
    throw ValidationError("shape-mismatch in batchnorm: gamma/beta must be (C)");

  BnSaved<T> saved;
  saved.mean.assign(static_cast<std::size_t>(C), T(0));
  saved.invstd.assign(static_cast<std::size_t>(C), T(0));
  const T* xv = x.values().data();
  const std::int64_t m = N * vox;
  for (std::int64_t c = 0; c < C; ++c) {
    T acc = T(0);
    for (std::int64_t ni = 0; ni < N; ++ni) {
      const T* p = xv + (ni * C + c) * vox;
      for (std::int64_t i = 0; i < vox; ++i) acc += p[i];
    }
    const T mu = acc / static_cast<T>(m);
    T var = T(0);
    for (std::int64_t ni = 0; ni < N; ++ni) {
      const T* p = xv + (ni * C + c) * vox;
      for (std::int64_t i = 0; i < vox; ++i) var += (p[i] - mu) * (p[i] - mu);
    }
    var /= static_cast<T>(m);
    saved.mean[static_cast<std::size_t>(c)] = mu;
    saved.invstd[static_cast<std::size_t>(c)] = T(1) / std::sqrt(var + static_cast<T>(eps));
  }

  TapeNode<T> n;
  n.prim = Prim::batchnorm;
  n.shape = s;
  n.inputs = {x.id, gamma.id, beta.id};
  n.requires_grad = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  n.value.resize(x.values().size());
  const T* gv = gamma.values().data();
  const T* bv = beta.values().data();
  for (std::int64_t ni = 0; ni < N; ++ni)
    for (std::int64_t c = 0; c < C; ++c) {
      const T* p = xv + (ni * C + c) * vox;
      T* o = n.value.data() + (ni * C + c) * vox;
      const T mu = saved.mean[static_cast<std::size_t>(c)];
      const T is = saved.invstd[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < vox; ++i) o[i] = (p[i] - mu) * is * gv[c] + bv[c];
    }
  n.attrs = std::move(saved);

  n.backward_fn = [](Tape<T>& tape, std::int32_t id) {
    auto& node = tape.node(id);
    const auto& saved = std::get<BnSaved<T>>(node.attrs);
    const auto& xn = tape.node(node.inputs[0]);
    const auto& gn = tape.node(node.inputs[1]);
    const std::int64_t N = node.shape[0], C = node.shape[1];
    const std::int64_t vox = node.shape[2] * node.shape[3] * node.shape[4];
    const std::int64_t m = N * vox;
    const T* xv = xn.value.data();
    const T* gv = gn.value.data();
    const T* dy = node.grad.data();

    for (std::int64_t c = 0; c < C; ++c) {
      const T mu = saved.mean[static_cast<std::size_t>(c)];
      const T is = saved.invstd[static_cast<std::size_t>(c)];
      T sum_dy = T(0), sum_dy_xhat = T(0);
      for (std::int64_t ni = 0; ni < N; ++ni) {
        const T* px = xv + (ni * C + c) * vox;
        const T* pg = dy + (ni * C + c) * vox;
        for (std::int64_t i = 0; i < vox; ++i) {
          sum_dy += pg[i];
          sum_dy_xhat += pg[i] * (px[i] - mu) * is;
        }
      }
      if (tape.node(node.inputs[1]).requires_grad)
        tape.grad_buffer(node.inputs[1])[static_cast<std::size_t>(c)] += sum_dy_xhat;
      if (tape.node(node.inputs[2]).requires_grad)
        tape.grad_buffer(node.inputs[2])[static_cast<std::size_t>(c)] += sum_dy;
      if (xn.requires_grad) {
        auto& gx = tape.grad_buffer(node.inputs[0]);
        const T scale = gv[c] * is / static_cast<T>(m);
        for (std::int64_t ni = 0; ni < N; ++ni) {
          const T* px = xv + (ni * C + c) * vox;
          const T* pg = dy + (ni * C + c) * vox;
          T* pgx = gx.data() + (ni * C + c) * vox;
          for (std::int64_t i = 0; i < vox; ++i) {
            const T xhat = (px[i] - mu) * is;
            pgx[i] += scale * (static_cast<T>(m) * pg[i] - sum_dy - xhat * sum_dy_xhat);
          }
        }
      }
    }
  };
  return x.tape->push(std::move(n));
}

}  // namespace vseg
