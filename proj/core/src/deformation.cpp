#include "vseg/deformation.hpp"

#include <cmath>

namespace vseg {
namespace {

std::vector<double> gaussian_taps(const DeformationParams& p) {
  const int r = p.kernel_size / 2;
  std::vector<double> taps(static_cast<std::size_t>(p.kernel_size));
  double total = 0.0;
  for (int i = 0; i < p.kernel_size; ++i) {
    const double d = i - r;
    taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * p.kernel_sigma * p.kernel_sigma));
    total += taps[static_cast<std::size_t>(i)];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

}  // namespace

std::vector<double> smooth_field(const std::vector<double>& map, std::int64_t width,
                                 std::int64_t height, const DeformationParams& params) {
  params.validate();
  const auto taps = gaussian_taps(params);
  const int r = params.kernel_size / 2;

  std::vector<double> tmp(map.size());
  for (std::int64_t y = 0; y < height; ++y)
    for (std::int64_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        const std::int64_t xi = std::clamp<std::int64_t>(x + k, 0, width - 1);
        acc += taps[static_cast<std::size_t>(k + r)] *
               map[static_cast<std::size_t>(xi + width * y)];
      }
      tmp[static_cast<std::size_t>(x + width * y)] = acc;
    }
  std::vector<double> out(map.size());
  for (std::int64_t y = 0; y < height; ++y)
    for (std::int64_t x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        const std::int64_t yi = std::clamp<std::int64_t>(y + k, 0, height - 1);
        acc += taps[static_cast<std::size_t>(k + r)] *
               tmp[static_cast<std::size_t>(x + width * yi)];
      }
      out[static_cast<std::size_t>(x + width * y)] = acc;
    }
  return out;
}

DeformationField sample_field(std::int64_t nx, std::int64_t ny, std::int64_t nz,
                              const DeformationParams& params, std::uint64_t seed) {
  params.validate();
  if (nx <= 0 || ny <= 0 || nz <= 0)
    throw ValidationError("invalid-params: field dims must be positive");

  DeformationField field;
  field.nx = nx;
  field.ny = ny;
  field.nz = nz;
  field.seed = seed;
  const std::size_t slice = static_cast<std::size_t>(nx * ny);
  field.dx.resize(slice * static_cast<std::size_t>(nz));
  field.dy.resize(slice * static_cast<std::size_t>(nz));

  Rng rng(seed);
  std::vector<double> raw_x(slice), raw_y(slice);
  const std::int64_t n_draws = params.shared_across_slices ? 1 : nz;
  for (std::int64_t z = 0; z < n_draws; ++z) {
    const double s = rng.uniform(params.scale_min, params.scale_max);
    for (auto& v : raw_x)
      v = params.noise == DeformationParams::Noise::uniform ? rng.uniform(-s, s)
                                                            : rng.normal(0.0, s);
    for (auto& v : raw_y)
      v = params.noise == DeformationParams::Noise::uniform ? rng.uniform(-s, s)
                                                            : rng.normal(0.0, s);
    const auto sx = smooth_field(raw_x, nx, ny, params);
    const auto sy = smooth_field(raw_y, nx, ny, params);
    std::copy(sx.begin(), sx.end(), field.dx.begin() + z * slice);
    std::copy(sy.begin(), sy.end(), field.dy.begin() + z * slice);
  }
  if (params.shared_across_slices) {
    for (std::int64_t z = 1; z < nz; ++z) {
      std::copy(field.dx.begin(), field.dx.begin() + slice, field.dx.begin() + z * slice);
      std::copy(field.dy.begin(), field.dy.begin() + slice, field.dy.begin() + z * slice);
    }
  }
  return field;
}

std::shared_ptr<const std::vector<std::int64_t>> gather_indices(const DeformationField& t) {
  auto idx = std::make_shared<std::vector<std::int64_t>>();
  idx->resize(static_cast<std::size_t>(t.nx * t.ny * t.nz));
  std::size_t o = 0;
  for (std::int64_t z = 0; z < t.nz; ++z)
    for (std::int64_t y = 0; y < t.ny; ++y)
      for (std::int64_t x = 0; x < t.nx; ++x, ++o) {
        const std::int64_t sx = std::clamp<std::int64_t>(
            static_cast<std::int64_t>(std::floor(x + t.dx_at(x, y, z) + 0.5)), 0, t.nx - 1);
        const std::int64_t sy = std::clamp<std::int64_t>(
            static_cast<std::int64_t>(std::floor(y + t.dy_at(x, y, z) + 0.5)), 0, t.ny - 1);
        (*idx)[o] = sx + t.nx * (sy + t.ny * z);
      }
  return idx;
}

Volume3D warp(const Volume3D& v, const DeformationField& t) {
  if (v.dims[0] != t.nx || v.dims[1] != t.ny || v.dims[2] != t.nz)
    throw ValidationError("dims-mismatch: volume " + std::to_string(v.dims[0]) + "x" +
                          std::to_string(v.dims[1]) + "x" + std::to_string(v.dims[2]) +
                          " vs field " + std::to_string(t.nx) + "x" +
                          std::to_string(t.ny) + "x" + std::to_string(t.nz));
  Volume3D out = v;
  const auto idx = gather_indices(t);
  apply_gather(*idx, v.data.data(), out.data.data());
  return out;
}

}  // namespace vseg
