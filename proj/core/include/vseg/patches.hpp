#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vseg/rng.hpp"
#include "vseg/volume.hpp"

namespace vseg {

struct PatchSpec {
  std::array<std::int64_t, 3> patch{64, 64, 64};
  std::array<std::int64_t, 3> stride{32, 32, 16};

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (patch[a] < 1) throw ValidationError("patch size must be positive");
      if (stride[a] < 1 || stride[a] > patch[a])
        throw ValidationError("need 0 < stride <= patch size componentwise");
    }
  }
};

struct PatchWindow {
  std::array<std::int64_t, 3> origin{0, 0, 0};
};

// Sliding-window cover: per axis {0, S, 2S, ...} plus a final flush window
// at D-P when the stride does not land there exactly. Every voxel is inside
// at least one window.
struct PatchGrid {
  std::array<std::int64_t, 3> dims{0, 0, 0};
  PatchSpec spec;
  std::array<std::vector<std::int64_t>, 3> origins;

  std::int64_t count() const {
    return static_cast<std::int64_t>(origins[0].size()) *
           static_cast<std::int64_t>(origins[1].size()) *
           static_cast<std::int64_t>(origins[2].size());
  }
  // x-fastest enumeration of the Cartesian product.
  PatchWindow window(std::int64_t i) const {
    const auto nx = static_cast<std::int64_t>(origins[0].size());
    const auto ny = static_cast<std::int64_t>(origins[1].size());
    PatchWindow w;
    w.origin[0] = origins[0][static_cast<std::size_t>(i % nx)];
    w.origin[1] = origins[1][static_cast<std::size_t>((i / nx) % ny)];
    w.origin[2] = origins[2][static_cast<std::size_t>(i / (nx * ny))];
    return w;
  }
};

PatchGrid extract_grid(const std::array<std::int64_t, 3>& dims, const PatchSpec& spec);

// One sampled training patch: (volume index, window).
struct PatchDraw {
  std::int32_t volume = 0;
  PatchWindow window;
};

// Uniform draws (with replacement) over all (volume, grid-window) pairs.
// The returned order is the consumption order; it depends only on the rng
// state, never on producer scheduling.
std::vector<PatchDraw> sample_epoch(const std::vector<PatchGrid>& grids,
                                    std::int64_t count, Rng& rng);

// Copies the window [origin, origin+patch) out of v, x-fastest.
std::vector<float> crop_patch(const Volume3D& v, const PatchWindow& w,
                              const std::array<std::int64_t, 3>& patch);

// Overlap-aware mean blending of per-window predictions back into a full
// probability volume.
class VolumeAccumulator {
 public:
  VolumeAccumulator(const std::array<std::int64_t, 3>& dims,
                    const std::array<double, 3>& spacing);
  void add_patch(const PatchWindow& w, const std::array<std::int64_t, 3>& patch,
                 const float* values);
  // Requires coverage count >= 1 everywhere (missing-window otherwise).
  Volume3D finish() const;

 private:
  std::array<std::int64_t, 3> dims_;
  std::array<double, 3> spacing_;
  std::vector<double> sum_;
  std::vector<std::int32_t> count_;
};

// One-shot form: one prediction per grid window, in grid enumeration order.
Volume3D reassemble(const PatchGrid& grid, const std::vector<std::vector<float>>& patches,
                    const std::array<double, 3>& spacing = {1.0, 1.0, 1.0});

}  // namespace vseg
