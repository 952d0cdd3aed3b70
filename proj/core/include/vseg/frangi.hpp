#pragma once

#include <array>
#include <vector>

#include "vseg/volume.hpp"

namespace vseg {

struct VesselnessParams {
  std::vector<double> scales{0.5, 1.0, 1.5, 2.0};  // sigma in voxels
  double alpha = 0.5;  // plate vs line sensitivity
  double beta = 0.5;   // blob sensitivity
  double c = 0.0;      // structure sensitivity; <= 0 means auto (half max
                       // Hessian Frobenius norm per scale)
  double mask_threshold = 0.0;  // <= 0 means 0.5 of the max response

  void validate() const {
    if (scales.empty()) throw ValidationError("frangi: empty scale list");
    for (double s : scales)
      if (!(s > 0)) throw ValidationError("frangi: scales must be > 0");
    if (!(alpha > 0) || !(beta > 0))
      throw ValidationError("frangi: alpha and beta must be > 0");
  }
};

// Six unique Hessian components at Gaussian scale sigma, gamma-normalized
// by sigma^2. Order: xx, yy, zz, xy, xz, yz.
struct HessianVolumes {
  std::array<std::vector<double>, 6> comp;
  std::array<std::int64_t, 3> dims;
};

HessianVolumes hessian_at_scale(const Volume3D& v, double sigma);

// Eigenvalues of a symmetric 3x3 matrix, ordered by |l1| <= |l2| <= |l3|
// (closed-form trigonometric method; ties keep input order).
std::array<double, 3> symmetric_eigenvalues(double xx, double yy, double zz,
                                            double xy, double xz, double yz);

// Frangi tubularity measure for bright structures:
// 0 when l2 > 0 or l3 > 0, else
// (1 - exp(-Ra^2/2a^2)) * exp(-Rb^2/2b^2) * (1 - exp(-S^2/2c^2)).
double vesselness(const std::array<double, 3>& eig, double alpha, double beta, double c);

struct FrangiResult {
  Volume3D response;  // per-voxel max over scales, probability kind
  Volume3D mask;      // response >= threshold
  double threshold_used = 0.0;
};

FrangiResult frangi_multiscale(const Volume3D& v, const VesselnessParams& params);

}  // namespace vseg
