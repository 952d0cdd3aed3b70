#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "vseg/rng.hpp"
#include "vseg/volume.hpp"

namespace vseg {

struct DeformationParams {
  double scale_min = 1.0;      // per-slice displacement scale s ~ U(min, max)
  double scale_max = 5.0;
  int kernel_size = 15;        // Gaussian taps
  double kernel_sigma = 100.0; // sigma >> support makes the kernel near-uniform
  bool shared_across_slices = false;
  enum class Noise { uniform, gaussian } noise = Noise::uniform;

  void validate() const {
    if (!(scale_min <= scale_max))
      throw ValidationError("invalid-params: scale range low > high");
    if (kernel_size < 1 || kernel_size % 2 == 0)
      throw ValidationError("invalid-params: kernel size must be odd positive");
    if (!(kernel_sigma > 0)) throw ValidationError("invalid-params: kernel sigma <= 0");
  }
};

// Per-slice in-plane displacement maps in voxel units. No displacement
// along z.
struct DeformationField {
  std::int64_t nx = 0, ny = 0, nz = 0;
  std::vector<double> dx;  // nz slices of nx*ny, slice-major
  std::vector<double> dy;
  std::uint64_t seed = 0;

  double dx_at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return dx[static_cast<std::size_t>(x + nx * (y + ny * z))];
  }
  double dy_at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return dy[static_cast<std::size_t>(x + nx * (y + ny * z))];
  }
};

// Separable convolution with a normalized Gaussian kernel,
// clamp-to-edge padding. map is width*height, row-major.
std::vector<double> smooth_field(const std::vector<double>& map, std::int64_t width,
                                 std::int64_t height, const DeformationParams& params);

// Per slice: draw s ~ U(scale_min, scale_max), fill dx/dy with i.i.d. noise
// of scale s, then smooth each map. Deterministic given seed.
DeformationField sample_field(std::int64_t nx, std::int64_t ny, std::int64_t nz,
                              const DeformationParams& params, std::uint64_t seed);

// Flat gather map implementing backward warping with nearest-neighbor
// lookup: out(x,y,z) = in(clamp(round(x+dx),...), clamp(round(y+dy),...), z).
// One input index per output voxel; shared by volume and tensor warps.
std::shared_ptr<const std::vector<std::int64_t>> gather_indices(const DeformationField& t);

// Warps a volume (pure gather; binary masks stay binary).
Volume3D warp(const Volume3D& v, const DeformationField& t);

// Applies a precomputed gather map to one contiguous x-fastest slab.
template <typename S>
void apply_gather(const std::vector<std::int64_t>& gather, const S* in, S* out) {
  for (std::size_t i = 0; i < gather.size(); ++i) out[i] = in[gather[i]];
}

}  // namespace vseg
