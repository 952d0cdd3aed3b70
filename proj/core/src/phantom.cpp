#include "vseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vseg {
namespace {

struct Vec3 {
  double x, y, z;
};

Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3,
                 double t) {
  const double t2 = t * t, t3 = t2 * t;
  auto comp = [&](double a, double b, double c, double d) {
    return 0.5 * ((2 * b) + (-a + c) * t + (2 * a - 5 * b + 4 * c - d) * t2 +
                  (-a + 3 * b - 3 * c + d) * t3);
  };
  return {comp(p0.x, p1.x, p2.x, p3.x), comp(p0.y, p1.y, p2.y, p3.y),
          comp(p0.z, p1.z, p2.z, p3.z)};
}

struct CenterlineSample {
  Vec3 p;
  int segment;   // waypoint interval index
  bool dropped;  // excluded from the corrupted label
};

// Dense samples (~0.25 voxel steps) along a Catmull-Rom curve through the
// waypoints, tagged with their segment for gap corruption.
std::vector<CenterlineSample> sample_curve(const std::vector<Vec3>& wp) {
  std::vector<CenterlineSample> samples;
  const int k = static_cast<int>(wp.size());
  for (int s = 0; s + 1 < k; ++s) {
    const Vec3& p0 = wp[static_cast<std::size_t>(std::max(0, s - 1))];
    const Vec3& p1 = wp[static_cast<std::size_t>(s)];
    const Vec3& p2 = wp[static_cast<std::size_t>(s + 1)];
    const Vec3& p3 = wp[static_cast<std::size_t>(std::min(k - 1, s + 2))];
    const double len = std::sqrt((p2.x - p1.x) * (p2.x - p1.x) +
                                 (p2.y - p1.y) * (p2.y - p1.y) +
                                 (p2.z - p1.z) * (p2.z - p1.z));
    const int steps = std::max(2, static_cast<int>(std::ceil(len / 0.25)));
    for (int i = 0; i <= steps; ++i)
      samples.push_back({catmull_rom(p0, p1, p2, p3, static_cast<double>(i) / steps),
                         s, false});
  }
  return samples;
}

// Marks every voxel whose center lies within `radius` of a kept sample.
void stamp(const std::vector<CenterlineSample>& samples, double radius,
           bool include_dropped, Volume3D& label) {
  const std::int64_t nx = label.dims[0], ny = label.dims[1], nz = label.dims[2];
  const std::int64_t r_ceil = static_cast<std::int64_t>(std::ceil(radius));
  const double r2 = radius * radius;
  for (const auto& s : samples) {
    if (s.dropped && !include_dropped) continue;
    const std::int64_t cx = static_cast<std::int64_t>(std::floor(s.p.x));
    const std::int64_t cy = static_cast<std::int64_t>(std::floor(s.p.y));
    const std::int64_t cz = static_cast<std::int64_t>(std::floor(s.p.z));
    for (std::int64_t z = std::max<std::int64_t>(0, cz - r_ceil);
         z <= std::min(nz - 1, cz + r_ceil + 1); ++z)
      for (std::int64_t y = std::max<std::int64_t>(0, cy - r_ceil);
           y <= std::min(ny - 1, cy + r_ceil + 1); ++y)
        for (std::int64_t x = std::max<std::int64_t>(0, cx - r_ceil);
             x <= std::min(nx - 1, cx + r_ceil + 1); ++x) {
          const double dx = x - s.p.x, dy = y - s.p.y, dz = z - s.p.z;
          if (dx * dx + dy * dy + dz * dz <= r2) label.at(x, y, z) = 1.0f;
        }
  }
}

std::vector<double> blur3(const std::vector<double>& in,
                          const std::array<std::int64_t, 3>& dims, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += taps[static_cast<std::size_t>(i + radius)];
  }
  for (auto& t : taps) t /= total;

  const std::int64_t nx = dims[0], ny = dims[1], nz = dims[2];
  auto idx = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    return static_cast<std::size_t>(x + nx * (y + ny * z));
  };
  std::vector<double> a(in.size()), b(in.size());
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

PhantomVolumes generate(const PhantomConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);

  PhantomVolumes out;
  out.label = make_volume(cfg.dims[0], cfg.dims[1], cfg.dims[2], VolumeKind::binary_mask);
  out.corrupted =
      make_volume(cfg.dims[0], cfg.dims[1], cfg.dims[2], VolumeKind::binary_mask);
  out.label.spacing = out.corrupted.spacing = {0.3, 0.3, 0.3};

  const int n_vessels =
      cfg.vessels_min +
      static_cast<int>(rng.next_index(
          static_cast<std::uint64_t>(cfg.vessels_max - cfg.vessels_min + 1)));

  const double margin = 2.0;
  for (int v = 0; v < n_vessels; ++v) {
    std::vector<Vec3> wp(static_cast<std::size_t>(cfg.waypoints));
    for (auto& p : wp) {
      p.x = rng.uniform(margin, cfg.dims[0] - 1 - margin);
      p.y = rng.uniform(margin, cfg.dims[1] - 1 - margin);
      p.z = rng.uniform(margin, cfg.dims[2] - 1 - margin);
    }
    const double u = rng.next_double();
    const double radius =
        cfg.radius_min + (cfg.radius_max - cfg.radius_min) * std::pow(u, cfg.radius_bias);

    auto samples = sample_curve(wp);
    // Gap corruption: per segment, drop a contiguous parameter range.
    for (int seg = 0; seg + 1 < cfg.waypoints; ++seg) {
      const bool gap = rng.next_double() < cfg.gap_probability;
      const double frac = rng.uniform(cfg.gap_fraction_min, cfg.gap_fraction_max);
      const double start = rng.uniform(0.0, 1.0 - frac);
      if (!gap) continue;
      std::int64_t seg_count = 0;
      for (const auto& s : samples) seg_count += (s.segment == seg);
      std::int64_t i_in_seg = 0;
      for (auto& s : samples) {
        if (s.segment != seg) continue;
        const double t = static_cast<double>(i_in_seg) / std::max<std::int64_t>(1, seg_count - 1);
        if (t >= start && t <= start + frac) s.dropped = true;
        ++i_in_seg;
      }
    }
    stamp(samples, radius, true, out.label);
    stamp(samples, radius, false, out.corrupted);
  }

  // Intensity: step image, optional PSF blur, optional additive noise.
  std::vector<double> img(out.label.data.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = cfg.background_intensity +
             (cfg.vessel_intensity - cfg.background_intensity) * out.label.data[i];
  if (cfg.psf_sigma > 0.0) img = blur3(img, cfg.dims, cfg.psf_sigma);
  if (cfg.noise_sigma > 0.0)
    for (auto& v : img) v += rng.normal(0.0, cfg.noise_sigma);

  out.intensity = make_volume(cfg.dims[0], cfg.dims[1], cfg.dims[2], VolumeKind::intensity);
  out.intensity.spacing = {0.3, 0.3, 0.3};
  for (std::size_t i = 0; i < img.size(); ++i)
    out.intensity.data[i] = static_cast<float>(img[i]);
  return out;
}

std::array<int, 3> split_sizes_6_2_3(int n_volumes) {
  if (n_volumes < 3)
    throw ValidationError("dataset too small for a 6:2:3 split, need >= 3 volumes");
  const double total = 11.0;
  const std::array<double, 3> exact{6.0 * n_volumes / total, 2.0 * n_volumes / total,
                                    3.0 * n_volumes / total};
  std::array<int, 3> sizes{static_cast<int>(std::floor(exact[0])),
                           static_cast<int>(std::floor(exact[1])),
                           static_cast<int>(std::floor(exact[2]))};
  int remaining = n_volumes - (sizes[0] + sizes[1] + sizes[2]);
  // Largest remainder first; ties favor the earlier bucket (train).
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return exact[static_cast<std::size_t>(a)] - std::floor(exact[static_cast<std::size_t>(a)]) >
           exact[static_cast<std::size_t>(b)] - std::floor(exact[static_cast<std::size_t>(b)]);
  });
  for (int i = 0; remaining > 0; ++i, --remaining)
    sizes[static_cast<std::size_t>(order[static_cast<std::size_t>(i % 3)])] += 1;
  for (int s : sizes)
    if (s < 1) throw ValidationError("dataset too small: a split bucket would be empty");
  return sizes;
}

DatasetSplit split_6_2_3(int n_volumes, Rng& rng) {
  const auto sizes = split_sizes_6_2_3(n_volumes);
  std::vector<int> ids(static_cast<std::size_t>(n_volumes));
  std::iota(ids.begin(), ids.end(), 0);
  // Fisher-Yates with the project rng.
  for (int i = n_volumes - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.next_index(static_cast<std::uint64_t>(i + 1)));
    std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
  }
  DatasetSplit split;
  split.train.assign(ids.begin(), ids.begin() + sizes[0]);
  split.val.assign(ids.begin() + sizes[0], ids.begin() + sizes[0] + sizes[1]);
  split.test.assign(ids.begin() + sizes[0] + sizes[1], ids.end());
  return split;
}

}  // namespace vseg
