#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace vseg {

// Counter-free 64-bit mixer used for seeding and stream derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// xoshiro256++ with explicit, serializable state. All randomness in the
// project flows through this type so that runs are reproducible bit-for-bit
// and checkpoints can capture generator state exactly.
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Index in [0, n). n must be > 0.
  std::uint64_t next_index(std::uint64_t n) { return next_u64() % n; }

  // Box-Muller without a cached spare so that the state alone determines
  // the stream.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

  const State& state() const { return state_; }
  void set_state(const State& s) { state_ = s; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  State state_{};
};

// Derives an independent generator for a named stream ("init", "patches",
// "deform", "phantom"). Adding a consumer stream never perturbs the others.
inline Rng stream_rng(std::uint64_t run_seed, std::string_view stream) {
  std::uint64_t s = run_seed ^ fnv1a64(stream);
  return Rng(splitmix64(s));
}

}  // namespace vseg
