#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "vseg/rng.hpp"
#include "vseg/volume.hpp"

namespace vseg {

struct PhantomConfig {
  std::array<std::int64_t, 3> dims{96, 96, 96};
  int vessels_min = 6;
  int vessels_max = 10;
  double radius_min = 0.75;  // voxels
  double radius_max = 3.0;
  double radius_bias = 2.0;  // r = min + (max-min) * u^bias; > 1 favors thin vessels
  int waypoints = 4;         // smooth polyline control points per vessel
  double vessel_intensity = 1.0;
  double background_intensity = 0.1;
  double noise_sigma = 0.05;  // additive Gaussian
  double psf_sigma = 0.6;     // blur in voxels; 0 disables
  double gap_probability = 0.0;  // per centerline segment
  double gap_fraction_min = 0.25;
  double gap_fraction_max = 0.6;

  void validate() const {
    for (auto d : dims)
      if (d < 8) throw ValidationError("invalid-config: phantom dims must be >= 8");
    if (vessels_min < 1 || vessels_max < vessels_min)
      throw ValidationError("invalid-config: bad vessel count range");
    if (!(radius_min > 0) || radius_max < radius_min)
      throw ValidationError("invalid-config: bad radius range");
    if (waypoints < 2) throw ValidationError("invalid-config: need >= 2 waypoints");
    if (noise_sigma < 0 || psf_sigma < 0)
      throw ValidationError("invalid-config: sigmas must be >= 0");
    if (gap_probability < 0 || gap_probability > 1)
      throw ValidationError("invalid-config: gap probability must be in [0,1]");
  }
};

struct PhantomVolumes {
  Volume3D intensity;  // blurred, noisy image
  Volume3D label;      // exact ground truth from the tube distance predicate
  Volume3D corrupted;  // label with centerline gaps; subset of label
};

// Tubes as constant-radius sweeps of Catmull-Rom curves through random
// waypoints, rasterized by dense centerline sampling (0.25-voxel steps).
// Deterministic given seed.
PhantomVolumes generate(const PhantomConfig& cfg, std::uint64_t seed);

struct DatasetSplit {
  std::vector<int> train, val, test;
};

// Random assignment in exact 6:2:3 proportion (largest-remainder rounding,
// total preserved). n = 11 gives (6, 2, 3).
DatasetSplit split_6_2_3(int n_volumes, Rng& rng);

std::array<int, 3> split_sizes_6_2_3(int n_volumes);

}  // namespace vseg
