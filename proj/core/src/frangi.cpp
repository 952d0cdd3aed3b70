#include "vseg/frangi.hpp"

#include <algorithm>
#include <cmath>

namespace vseg {
namespace {

std::vector<double> gaussian_taps(double sigma, int& radius) {
  radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += taps[static_cast<std::size_t>(i + radius)];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

// Separable Gaussian smoothing with clamp-to-edge padding, double precision.
std::vector<double> smooth_volume(const std::vector<double>& in,
                                  const std::array<std::int64_t, 3>& dims, double sigma) {
  int radius = 0;
  const auto taps = gaussian_taps(sigma, radius);
  const std::int64_t nx = dims[0], ny = dims[1], nz = dims[2];
  std::vector<double> a(in.size()), b(in.size());

  auto idx = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    return static_cast<std::size_t>(x + nx * (y + ny * z));
  };
  for (std::int64_t z = 0; z < nz; ++z)
    for (std::int64_t y = 0; y < ny; ++y)
      for (std::int64_t x = 0; x < nx; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += taps[static_cast<std::size_t>(k + radius)] *
                 in[idx(std::clamp<std::int64_t>(x + k, 0, nx - 1), y, z)];
        a[idx(x, y, z)] = acc;
      }
  for (std::int64_t z = 0; z < nz; ++z)
    for (std::int64_t y = 0; y < ny; ++y)
      for (std::int64_t x = 0; x < nx; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += taps[static_cast<std::size_t>(k + radius)] *
                 a[idx(x, std::clamp<std::int64_t>(y + k, 0, ny - 1), z)];
        b[idx(x, y, z)] = acc;
      }
  for (std::int64_t z = 0; z < nz; ++z)
    for (std::int64_t y = 0; y < ny; ++y)
      for (std::int64_t x = 0; x < nx; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += taps[static_cast<std::size_t>(k + radius)] *
                 b[idx(x, y, std::clamp<std::int64_t>(z + k, 0, nz - 1))];
        a[idx(x, y, z)] = acc;
      }
  return a;
}

}  // namespace

HessianVolumes hessian_at_scale(const Volume3D& v, double sigma) {
  if (!(sigma > 0)) throw ValidationError("hessian_at_scale: sigma must be > 0");
  const std::int64_t nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];
  std::vector<double> smooth_in(v.data.begin(), v.data.end());
  const auto s = smooth_volume(smooth_in, v.dims, sigma);

  HessianVolumes h;
  h.dims = v.dims;
  for (auto& c : h.comp) c.assign(s.size(), 0.0);

  auto at = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    x = std::clamp<std::int64_t>(x, 0, nx - 1);
    y = std::clamp<std::int64_t>(y, 0, ny - 1);
    z = std::clamp<std::int64_t>(z, 0, nz - 1);
    return s[static_cast<std::size_t>(x + nx * (y + ny * z))];
  };
  const double g = sigma * sigma;  // gamma-normalization, gamma = 2
  std::size_t i = 0;
  for (std::int64_t z = 0; z < nz; ++z)
    for (std::int64_t y = 0; y < ny; ++y)
      for (std::int64_t x = 0; x < nx; ++x, ++i) {
        const double c = at(x, y, z);
        h.comp[0][i] = g * (at(x + 1, y, z) - 2 * c + at(x - 1, y, z));
        h.comp[1][i] = g * (at(x, y + 1, z) - 2 * c + at(x, y - 1, z));
        h.comp[2][i] = g * (at(x, y, z + 1) - 2 * c + at(x, y, z - 1));
        h.comp[3][i] = g * 0.25 *
                       (at(x + 1, y + 1, z) - at(x + 1, y - 1, z) -
                        at(x - 1, y + 1, z) + at(x - 1, y - 1, z));
        h.comp[4][i] = g * 0.25 *
                       (at(x + 1, y, z + 1) - at(x + 1, y, z - 1) -
                        at(x - 1, y, z + 1) + at(x - 1, y, z - 1));
        h.comp[5][i] = g * 0.25 *
                       (at(x, y + 1, z + 1) - at(x, y + 1, z - 1) -
                        at(x, y - 1, z + 1) + at(x, y - 1, z - 1));
      }
  return h;
}

std::array<double, 3> symmetric_eigenvalues(double xx, double yy, double zz,
                                            double xy, double xz, double yz) {
  std::array<double, 3> eig;
  const double p1 = xy * xy + xz * xz + yz * yz;
  if (p1 == 0.0) {
    eig = {xx, yy, zz};
  } else {
    const double q = (xx + yy + zz) / 3.0;
    const double p2 =
        (xx - q) * (xx - q) + (yy - q) * (yy - q) + (zz - q) * (zz - q) + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    const double bxx = (xx - q) / p, byy = (yy - q) / p, bzz = (zz - q) / p;
    const double bxy = xy / p, bxz = xz / p, byz = yz / p;
    const double det = bxx * byy * bzz + 2.0 * bxy * bxz * byz - bxx * byz * byz -
                       byy * bxz * bxz - bzz * bxy * bxy;
    const double r = std::clamp(det / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double e1 = q + 2.0 * p * std::cos(phi);
    const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    eig = {e1, 3.0 * q - e1 - e3, e3};
  }
  std::stable_sort(eig.begin(), eig.end(),
                   [](double a, double b) { return std::abs(a) < std::abs(b); });
  return eig;
}

double vesselness(const std::array<double, 3>& eig, double alpha, double beta, double c) {
  const double l1 = eig[0], l2 = eig[1], l3 = eig[2];
  if (l2 > 0.0 || l3 > 0.0) return 0.0;  // bright-vessel polarity
  const double a2 = std::abs(l2), a3 = std::abs(l3);
  if (a3 == 0.0 || a2 == 0.0) return 0.0;
  const double ra = a2 / a3;
  const double rb = std::abs(l1) / std::sqrt(a2 * a3);
  const double s2 = l1 * l1 + l2 * l2 + l3 * l3;
  const double line = 1.0 - std::exp(-ra * ra / (2.0 * alpha * alpha));
  const double blob = std::exp(-rb * rb / (2.0 * beta * beta));
  const double structure = c > 0.0 ? 1.0 - std::exp(-s2 / (2.0 * c * c)) : 0.0;
  return line * blob * structure;
}

FrangiResult frangi_multiscale(const Volume3D& v, const VesselnessParams& params) {
  params.validate();
  v.validate();
  const std::size_t n = v.data.size();
  std::vector<double> best(n, 0.0);

  for (double sigma : params.scales) {
    const auto h = hessian_at_scale(v, sigma);
    double c = params.c;
    if (c <= 0.0) {
      // Auto: half the maximum Hessian Frobenius norm at this scale.
      double max_frob2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double f2 = h.comp[0][i] * h.comp[0][i] + h.comp[1][i] * h.comp[1][i] +
                          h.comp[2][i] * h.comp[2][i] +
                          2.0 * (h.comp[3][i] * h.comp[3][i] +
                                 h.comp[4][i] * h.comp[4][i] +
                                 h.comp[5][i] * h.comp[5][i]);
        max_frob2 = std::max(max_frob2, f2);
      }
      c = 0.5 * std::sqrt(max_frob2);
      if (c == 0.0) continue;  // constant volume, no response at this scale
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto eig = symmetric_eigenvalues(h.comp[0][i], h.comp[1][i], h.comp[2][i],
                                             h.comp[3][i], h.comp[4][i], h.comp[5][i]);
      best[i] = std::max(best[i], vesselness(eig, params.alpha, params.beta, c));
    }
  }

  FrangiResult result;
  result.response = make_volume(v.dims[0], v.dims[1], v.dims[2], VolumeKind::probability);
  result.response.spacing = v.spacing;
  double max_resp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    result.response.data[i] = static_cast<float>(best[i]);
    max_resp = std::max(max_resp, best[i]);
  }
  result.threshold_used =
      params.mask_threshold > 0.0 ? params.mask_threshold : 0.5 * max_resp;
  result.mask = make_volume(v.dims[0], v.dims[1], v.dims[2], VolumeKind::binary_mask);
  result.mask.spacing = v.spacing;
  if (max_resp > 0.0) {
    for (std::size_t i = 0; i < n; ++i)
      result.mask.data[i] = best[i] >= result.threshold_used ? 1.0f : 0.0f;
  }
  return result;
}

}  // namespace vseg
