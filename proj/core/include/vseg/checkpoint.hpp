#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "vseg/adam.hpp"
#include "vseg/rng.hpp"
#include "vseg/unet.hpp"

namespace vseg {

// Versioned binary container: magic, version, dtype, config echo, named
// tensor table (name, shape, little-endian payload), optimizer state, rng
// stream states, training progress. Load never crashes on truncated or
// foreign files; it throws ValidationError.

inline constexpr char kCheckpointMagic[8] = {'V', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  NetworkConfig net;
  Parameters<T> params;
  AdamState<T> adam;
  std::int64_t epochs_done = 0;
  double best_val_dice = 0.0;
  std::map<std::string, Rng::State> rng_states;
};

namespace detail {

class BinWriter {
 public:
  explicit BinWriter(const std::string& path);
  void bytes(const void* p, std::size_t n);
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void i32(std::int32_t v) { bytes(&v, 4); }
  void i64(std::int64_t v) { bytes(&v, 8); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void str(const std::string& s);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path);
  void bytes(void* p, std::size_t n);
  std::uint8_t u8();
  std::uint32_t u32();
  std::int32_t i32();
  std::int64_t i64();
  std::uint64_t u64();
  double f64();
  std::string str();

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace detail

template <typename T>
constexpr std::uint8_t dtype_tag() {
  return sizeof(T) == 4 ? 0 : 1;  // 0 = f32, 1 = f64
}

// Dtype tag of an existing checkpoint file (0 = f32, 1 = f64).
std::uint8_t checkpoint_dtype(const std::string& path);

template <typename T>
void save_checkpoint(const Checkpoint<T>& ckpt, const std::string& path) {
  detail::BinWriter w(path);
  w.bytes(kCheckpointMagic, 8);
  w.u32(kCheckpointVersion);
  w.u8(dtype_tag<T>());

  w.i32(ckpt.net.depth);
  w.i32(ckpt.net.base_channels);
  w.i32(ckpt.net.supervision_scales);
  w.i32(ckpt.net.in_channels);
  w.i32(ckpt.net.out_channels);
  w.u8(ckpt.net.normalization == NetworkConfig::Norm::batch ? 1 : 0);

  w.i64(ckpt.epochs_done);
  w.f64(ckpt.best_val_dice);

  w.u32(static_cast<std::uint32_t>(ckpt.rng_states.size()));
  for (const auto& [name, state] : ckpt.rng_states) {
    w.str(name);
    for (auto word : state) w.u64(word);
  }

  const auto& tensors = ckpt.params.tensors();
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.i64(d);
    w.bytes(t.values.data(), t.values.size() * sizeof(T));
  }

  w.f64(ckpt.adam.lr);
  w.f64(ckpt.adam.beta1);
  w.f64(ckpt.adam.beta2);
  w.f64(ckpt.adam.eps);
  w.i64(ckpt.adam.step_count);
  for (const auto& m : ckpt.adam.m1) w.bytes(m.data(), m.size() * sizeof(T));
  for (const auto& m : ckpt.adam.m2) w.bytes(m.data(), m.size() * sizeof(T));
  w.close();
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  detail::BinReader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw ValidationError("not a checkpoint file: " + path);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw ValidationError("version-mismatch: checkpoint version " +
                          std::to_string(version) + " in " + path);
  const std::uint8_t dtype = r.u8();
  if (dtype != dtype_tag<T>())
    throw ValidationError("checkpoint dtype mismatch (file has " +
                          std::string(dtype == 0 ? "f32" : "f64") + "): " + path);

  Checkpoint<T> ckpt;
  ckpt.net.depth = r.i32();
  ckpt.net.base_channels = r.i32();
  ckpt.net.supervision_scales = r.i32();
  ckpt.net.in_channels = r.i32();
  ckpt.net.out_channels = r.i32();
  ckpt.net.normalization = r.u8() ? NetworkConfig::Norm::batch : NetworkConfig::Norm::none;
  ckpt.net.validate();

  ckpt.epochs_done = r.i64();
  ckpt.best_val_dice = r.f64();

  const std::uint32_t n_rng = r.u32();
  for (std::uint32_t i = 0; i < n_rng; ++i) {
    const std::string name = r.str();
    Rng::State st;
    for (auto& word : st) word = r.u64();
    ckpt.rng_states[name] = st;
  }

  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 5) throw ValidationError("malformed checkpoint: tensor rank > 5");
    Shape shape(rank);
    for (auto& d : shape) {
      d = r.i64();
      if (d <= 0 || d > (std::int64_t{1} << 32))
        throw ValidationError("malformed checkpoint: bad tensor dim");
    }
    std::vector<T> values(static_cast<std::size_t>(numel(shape)));
    r.bytes(values.data(), values.size() * sizeof(T));
    ckpt.params.add(name, std::move(shape), std::move(values));
  }

  ckpt.adam.lr = r.f64();
  ckpt.adam.beta1 = r.f64();
  ckpt.adam.beta2 = r.f64();
  ckpt.adam.eps = r.f64();
  ckpt.adam.step_count = r.i64();
  for (const auto& t : ckpt.params.tensors()) {
    std::vector<T> m(t.values.size());
    r.bytes(m.data(), m.size() * sizeof(T));
    ckpt.adam.m1.push_back(std::move(m));
  }
  for (const auto& t : ckpt.params.tensors()) {
    std::vector<T> m(t.values.size());
    r.bytes(m.data(), m.size() * sizeof(T));
    ckpt.adam.m2.push_back(std::move(m));
  }
  return ckpt;
}

}  // namespace vseg
