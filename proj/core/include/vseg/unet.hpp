#pragma once

#include <map>
#include <string>

#include "vseg/autodiff_nn.hpp"
#include "vseg/rng.hpp"

namespace vseg {

struct NetworkConfig {
  enum class Norm { none, batch };

  int depth = 4;             // levels; depth-1 poolings
  int base_channels = 16;    // channels at the finest level
  int supervision_scales = 3;  // m; scale 1 is the finest decoder output
  int in_channels = 1;
  int out_channels = 1;
  Norm normalization = Norm::none;

  std::int64_t pool_factor() const { return std::int64_t{1} << (depth - 1); }
  std::int64_t channels_at(int level) const {
    return static_cast<std::int64_t>(base_channels) << level;
  }

  void validate() const {
    if (depth < 2) throw ValidationError("invalid-config: depth must be >= 2");
    if (base_channels < 1) throw ValidationError("invalid-config: base_channels must be >= 1");
    if (in_channels < 1 || out_channels < 1)
      throw ValidationError("invalid-config: channel counts must be >= 1");
    if (supervision_scales < 1 || supervision_scales > depth - 1)
      throw ValidationError("invalid-config: need 1 <= m <= depth-1, got m=" +
                            std::to_string(supervision_scales) + " depth=" +
                            std::to_string(depth));
  }
};

template <typename T>
struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<T> values;
};

// Ordered, uniquely named parameter tensors. Order is fixed by build() and
// carries through checkpoints and Adam moments.
template <typename T>
class Parameters {
 public:
  std::vector<NamedTensor<T>>& tensors() { return tensors_; }
  const std::vector<NamedTensor<T>>& tensors() const { return tensors_; }

  void add(std::string name, Shape shape, std::vector<T> values) {
    if (index_.count(name)) throw ValidationError("duplicate parameter name: " + name);
    index_[name] = tensors_.size();
    tensors_.push_back({std::move(name), std::move(shape), std::move(values)});
  }

  const NamedTensor<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("no parameter named " + name);
    return tensors_[it->second];
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  std::int64_t total_count() const {
    std::int64_t n = 0;
    for (const auto& t : tensors_) n += numel(t.shape);
    return n;
  }

  void validate() const {
    for (const auto& t : tensors_) {
      if (numel(t.shape) != static_cast<std::int64_t>(t.values.size()))
        throw ValidationError("parameter " + t.name + " size mismatch");
      for (T v : t.values)
        if (!std::isfinite(static_cast<double>(v)))
          throw ValidationError("parameter " + t.name + " has non-finite values");
    }
  }

 private:
  std::vector<NamedTensor<T>> tensors_;
  std::map<std::string, std::size_t> index_;
};

// Decoder outputs, one per supervision scale, each already nearest-upsampled
// to the input's spatial size and squashed through a sigmoid. scales[0] is
// the finest (the final decoder output).
template <typename T>
struct MultiScaleOutput {
  std::vector<Tensor<T>> scales;
  const Tensor<T>& finest() const { return scales.front(); }
  int m() const { return static_cast<int>(scales.size()); }
};

// Parameter tensors bound onto a tape as grad-tracked leaves, in the
// canonical order of Parameters.
template <typename T>
struct BoundParams {
  std::vector<Tensor<T>> leaves;
  std::map<std::string, std::size_t> index;

  const Tensor<T>& at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw ValidationError("no bound parameter named " + name);
    return leaves[it->second];
  }
};

template <typename T>
BoundParams<T> bind_parameters(Tape<T>& tape, const Parameters<T>& params,
                               bool requires_grad = true) {
  BoundParams<T> bound;
  bound.leaves.reserve(params.tensors().size());
  for (const auto& t : params.tensors()) {
    bound.index[t.name] = bound.leaves.size();
    bound.leaves.push_back(tape.leaf(t.shape, t.values, requires_grad));
  }
  return bound;
}

namespace detail {

// Block list shared by build() and forward(): two 3x3x3 convs per level,
// 2x max-pool downsampling, nearest x2 + 3x3x3 conv upsampling with skip
// concatenation, 1x1x1 conv + sigmoid heads on the m finest decoder levels.
template <typename T, typename F>
void for_each_conv_block(const NetworkConfig& cfg, F&& visit) {
  // visit(name, cout, cin, kernel)
  for (int level = 0; level < cfg.depth; ++level) {
    const std::int64_t ch = cfg.channels_at(level);
    const std::int64_t in0 = level == 0 ? cfg.in_channels : cfg.channels_at(level - 1);
    visit("enc" + std::to_string(level) + "_conv1", ch, in0, 3);
    visit("enc" + std::to_string(level) + "_conv2", ch, ch, 3);
  }
  for (int level = cfg.depth - 2; level >= 0; --level) {
    const std::int64_t ch = cfg.channels_at(level);
    const std::int64_t ch_below = cfg.channels_at(level + 1);
    visit("dec" + std::to_string(level) + "_up", ch, ch_below, 3);
    visit("dec" + std::to_string(level) + "_conv1", ch, 2 * ch, 3);
    visit("dec" + std::to_string(level) + "_conv2", ch, ch, 3);
  }
  for (int s = 1; s <= cfg.supervision_scales; ++s)
    visit("head" + std::to_string(s), static_cast<std::int64_t>(cfg.out_channels),
          cfg.channels_at(s - 1), 1);
}

}  // namespace detail

// Kaiming-style initialization: kernels ~ Normal(0, sqrt(2/fan_in)), biases 0,
// batchnorm gamma 1 / beta 0. Deterministic given seed (stream "init").
template <typename T>
Parameters<T> build(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Parameters<T> params;
  Rng rng = stream_rng(seed, "init");
  const bool use_bn = cfg.normalization == NetworkConfig::Norm::batch;
  detail::for_each_conv_block<T>(
      cfg, [&](const std::string& name, std::int64_t cout, std::int64_t cin,
               std::int64_t k) {
        const std::int64_t fan_in = cin * k * k * k;
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        std::vector<T> w(static_cast<std::size_t>(cout * fan_in));
        for (auto& v : w) v = static_cast<T>(rng.normal(0.0, stddev));
        params.add(name + "_w", {cout, cin, k, k, k}, std::move(w));
        params.add(name + "_b", {cout}, std::vector<T>(static_cast<std::size_t>(cout), T(0)));
        if (use_bn && k == 3) {
          params.add(name + "_gamma", {cout},
                     std::vector<T>(static_cast<std::size_t>(cout), T(1)));
          params.add(name + "_beta", {cout},
                     std::vector<T>(static_cast<std::size_t>(cout), T(0)));
        }
      });
  return params;
}

namespace detail {

template <typename T>
Tensor<T> conv_block(const NetworkConfig& cfg, const BoundParams<T>& p,
                     const std::string& name, const Tensor<T>& x) {
  Tensor<T> h = conv3d(x, p.at(name + "_w"), p.at(name + "_b"), 1, 1);
  if (cfg.normalization == NetworkConfig::Norm::batch)
    h = batchnorm(h, p.at(name + "_gamma"), p.at(name + "_beta"));
  return relu(h);
}

}  // namespace detail

// Encoder-decoder forward pass emitting the m supervision outputs.
// x: (batch, in_channels, X, Y, Z); spatial dims divisible by 2^(depth-1).
template <typename T>
MultiScaleOutput<T> forward(const NetworkConfig& cfg, const BoundParams<T>& p,
                            const Tensor<T>& x) {
  cfg.validate();
  const Shape& s = x.shape();
  if (s.size() != 5 || s[1] != cfg.in_channels)
    throw ValidationError("shape-mismatch: forward expects (N," +
                          std::to_string(cfg.in_channels) + ",X,Y,Z), got " + shape_str(s));
  const std::int64_t factor = cfg.pool_factor();
  for (int a = 2; a < 5; ++a)
    if (s[static_cast<std::size_t>(a)] % factor != 0)
      throw ValidationError("shape-mismatch: spatial dims " + shape_str(s) +
                            " not divisible by " + std::to_string(factor));
  const Shape full_spatial{s[2], s[3], s[4]};

  std::vector<Tensor<T>> skips;
  skips.reserve(static_cast<std::size_t>(cfg.depth));
  Tensor<T> h = x;
  for (int level = 0; level < cfg.depth; ++level) {
    if (level > 0) h = maxpool3d(h);
    const std::string prefix = "enc" + std::to_string(level) + "_";
    h = detail::conv_block(cfg, p, prefix + "conv1", h);
    h = detail::conv_block(cfg, p, prefix + "conv2", h);
    skips.push_back(h);
  }

  std::vector<Tensor<T>> decoder_out(static_cast<std::size_t>(cfg.depth - 1));
  for (int level = cfg.depth - 2; level >= 0; --level) {
    const std::string prefix = "dec" + std::to_string(level) + "_";
    h = upsample_nearest_2x(h);
    h = conv3d(h, p.at(prefix + "up_w"), p.at(prefix + "up_b"), 1, 1);
    h = concat_channels(h, skips[static_cast<std::size_t>(level)]);
    h = detail::conv_block(cfg, p, prefix + "conv1", h);
    h = detail::conv_block(cfg, p, prefix + "conv2", h);
    decoder_out[static_cast<std::size_t>(level)] = h;
  }

  MultiScaleOutput<T> out;
  out.scales.reserve(static_cast<std::size_t>(cfg.supervision_scales));
  for (int scale = 1; scale <= cfg.supervision_scales; ++scale) {
    const std::string head = "head" + std::to_string(scale);
    Tensor<T> logits = conv3d(decoder_out[static_cast<std::size_t>(scale - 1)],
                              p.at(head + "_w"), p.at(head + "_b"), 1, 0);
    Tensor<T> prob = sigmoid(logits);
    if (scale > 1) prob = upsample_nearest(prob, full_spatial);
    out.scales.push_back(prob);
  }
  return out;
}

}  // namespace vseg
