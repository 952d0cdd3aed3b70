#include "vseg/volume.hpp"

#include <algorithm>
#include <cmath>

namespace vseg {

std::string to_string(VolumeKind k) {
  switch (k) {
    case VolumeKind::intensity: return "intensity";
    case VolumeKind::binary_mask: return "binary-mask";
    case VolumeKind::probability: return "probability";
  }
  return "intensity";
}

VolumeKind volume_kind_from_string(const std::string& s) {
  if (s == "intensity") return VolumeKind::intensity;
  if (s == "binary-mask") return VolumeKind::binary_mask;
  if (s == "probability") return VolumeKind::probability;
  throw ValidationError("unknown volume kind: " + s);
}

void Volume3D::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (dims[i] <= 0) throw ValidationError("Volume3D dims must be positive");
    if (!(spacing[i] > 0.0)) throw ValidationError("Volume3D spacing must be positive");
  }
  if (static_cast<std::int64_t>(data.size()) != voxel_count())
    throw ValidationError("Volume3D data length does not match dims");
  if (kind == VolumeKind::binary_mask) {
    for (float v : data)
      if (v != 0.0f && v != 1.0f)
        throw ValidationError("binary-mask volume has values outside {0,1}");
  } else if (kind == VolumeKind::probability) {
    for (float v : data)
      if (!(v >= 0.0f && v <= 1.0f))
        throw ValidationError("probability volume has values outside [0,1]");
  } else {
    for (float v : data)
      if (!std::isfinite(v)) throw ValidationError("intensity volume has non-finite values");
  }
}

Volume3D make_volume(std::int64_t nx, std::int64_t ny, std::int64_t nz,
                     VolumeKind kind, float fill) {
  Volume3D v;
  v.dims = {nx, ny, nz};
  v.kind = kind;
  if (nx <= 0 || ny <= 0 || nz <= 0) throw ValidationError("volume dims must be positive");
  v.data.assign(static_cast<std::size_t>(nx * ny * nz), fill);
  return v;
}

Axis axis_from_string(const std::string& s) {
  if (s == "x") return Axis::x;
  if (s == "y") return Axis::y;
  if (s == "z") return Axis::z;
  throw ValidationError("axis must be one of x|y|z, got: " + s);
}

Image2D mip(const Volume3D& v, Axis axis) {
  Image2D img;
  const auto [nx, ny, nz] = v.dims;
  switch (axis) {
    case Axis::z: {
      img.width = nx;
      img.height = ny;
      img.pixels.assign(static_cast<std::size_t>(nx * ny),
                        -std::numeric_limits<float>::infinity());
      for (std::int64_t z = 0; z < nz; ++z)
        for (std::int64_t y = 0; y < ny; ++y)
          for (std::int64_t x = 0; x < nx; ++x)
            img.at(x, y) = std::max(img.at(x, y), v.at(x, y, z));
      break;
    }
    case Axis::y: {
      img.width = nx;
      img.height = nz;
      img.pixels.assign(static_cast<std::size_t>(nx * nz),
                        -std::numeric_limits<float>::infinity());
      for (std::int64_t z = 0; z < nz; ++z)
        for (std::int64_t y = 0; y < ny; ++y)
          for (std::int64_t x = 0; x < nx; ++x)
            img.at(x, z) = std::max(img.at(x, z), v.at(x, y, z));
      break;
    }
    case Axis::x: {
      img.width = ny;
      img.height = nz;
      img.pixels.assign(static_cast<std::size_t>(ny * nz),
                        -std::numeric_limits<float>::infinity());
      for (std::int64_t z = 0; z < nz; ++z)
        for (std::int64_t y = 0; y < ny; ++y)
          for (std::int64_t x = 0; x < nx; ++x)
            img.at(y, z) = std::max(img.at(y, z), v.at(x, y, z));
      break;
    }
  }
  return img;
}

}  // namespace vseg
