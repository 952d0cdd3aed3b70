#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vseg/error.hpp"

namespace vseg {

enum class VolumeKind { intensity, binary_mask, probability };

std::string to_string(VolumeKind k);
VolumeKind volume_kind_from_string(const std::string& s);

// Dense scalar 3D grid, x-fastest storage. Values are immutable by
// convention once a volume leaves its producer; all consumers share const
// references.
struct Volume3D {
  std::array<std::int64_t, 3> dims{0, 0, 0};      // (nx, ny, nz)
  std::array<double, 3> spacing{1.0, 1.0, 1.0};   // millimeters
  std::vector<float> data;                         // nx*ny*nz, x-fastest
  VolumeKind kind = VolumeKind::intensity;

  std::int64_t nx() const { return dims[0]; }
  std::int64_t ny() const { return dims[1]; }
  std::int64_t nz() const { return dims[2]; }
  std::int64_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }

  std::int64_t index(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return x + dims[0] * (y + dims[1] * z);
  }
  float at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data[index(x, y, z)];
  }
  float& at(std::int64_t x, std::int64_t y, std::int64_t z) {
    return data[index(x, y, z)];
  }

  // Throws ValidationError on any violated invariant (size, spacing,
  // kind-specific value ranges).
  void validate() const;
};

Volume3D make_volume(std::int64_t nx, std::int64_t ny, std::int64_t nz,
                     VolumeKind kind = VolumeKind::intensity, float fill = 0.0f);

// Row-major 2D image used for MIPs and figure emission.
struct Image2D {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<float> pixels;  // width*height, x-fastest (row-major)

  float at(std::int64_t x, std::int64_t y) const { return pixels[x + width * y]; }
  float& at(std::int64_t x, std::int64_t y) { return pixels[x + width * y]; }
};

enum class Axis { x, y, z };

Axis axis_from_string(const std::string& s);

// Maximum-intensity projection along the given axis. The output keeps the
// two remaining dims in (fast, slow) order: x->(y,z), y->(x,z), z->(x,y).
Image2D mip(const Volume3D& v, Axis axis);

}  // namespace vseg
