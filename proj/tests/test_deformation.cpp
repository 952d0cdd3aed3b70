#include <doctest.h>

#include <cmath>

#include "vseg/deformation.hpp"
#include "vseg/rng.hpp"

using namespace vseg;

TEST_CASE("sample_field is deterministic given the seed") {
  DeformationParams p;
  const auto a = sample_field(12, 10, 4, p, 123);
  const auto b = sample_field(12, 10, 4, p, 123);
  CHECK(a.dx == b.dx);
  CHECK(a.dy == b.dy);
  const auto c = sample_field(12, 10, 4, p, 124);
  CHECK(a.dx != c.dx);
}

TEST_CASE("smoothed displacements stay within the raw support") {
  DeformationParams p;  // scales in (1,5), uniform noise in [-s, s]
  const auto f = sample_field(16, 16, 6, p, 7);
  for (double v : f.dx) CHECK(std::abs(v) <= 5.0);
  for (double v : f.dy) CHECK(std::abs(v) <= 5.0);
}

TEST_CASE("field mean is 0 within 3 standard errors (~1e6 samples)") {
  DeformationParams p;
  const int fields = 60;
  const std::int64_t nx = 64, ny = 64, nz = 4;
  std::vector<double> field_means;
  double total_mean = 0.0;
  for (int k = 0; k < fields; ++k) {
    const auto f = sample_field(nx, ny, nz, p, 1000 + static_cast<std::uint64_t>(k));
    double m = 0.0;
    for (double v : f.dx) m += v;
    for (double v : f.dy) m += v;
    m /= static_cast<double>(f.dx.size() + f.dy.size());
    field_means.push_back(m);
    total_mean += m;
  }
  total_mean /= fields;
  double var = 0.0;
  for (double m : field_means) var += (m - total_mean) * (m - total_mean);
  const double stderr_mean = std::sqrt(var / (fields - 1)) / std::sqrt(fields);
  CHECK(std::abs(total_mean) <= 3.0 * stderr_mean);
}

TEST_CASE("smooth_field keeps constants and zeros") {
  DeformationParams p;
  std::vector<double> c(20 * 12, 3.7);
  for (double v : smooth_field(c, 20, 12, p)) CHECK(v == doctest::Approx(3.7).epsilon(1e-12));
  std::vector<double> z(20 * 12, 0.0);
  for (double v : smooth_field(z, 20, 12, p)) CHECK(v == 0.0);
}

TEST_CASE("smooth_field impulse response is the separable tap product") {
  DeformationParams p;  // 15 taps, sigma 100: near-uniform
  const std::int64_t n = 31;
  std::vector<double> impulse(static_cast<std::size_t>(n * n), 0.0);
  impulse[static_cast<std::size_t>(15 + n * 15)] = 1.0;
  const auto out = smooth_field(impulse, n, n, p);

  // Reference taps, normalized exactly like the implementation contract.
  std::vector<double> taps(15);
  double total = 0.0;
  for (int i = 0; i < 15; ++i) {
    const double d = i - 7;
    taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * 100.0 * 100.0));
    total += taps[static_cast<std::size_t>(i)];
  }
  for (auto& t : taps) t /= total;

  for (std::int64_t y = 0; y < n; ++y)
    for (std::int64_t x = 0; x < n; ++x) {
      const std::int64_t dx = x - 15, dy = y - 15;
      const double expect =
          (std::abs(dx) <= 7 && std::abs(dy) <= 7)
              ? taps[static_cast<std::size_t>(dx + 7)] * taps[static_cast<std::size_t>(dy + 7)]
              : 0.0;
      CHECK(out[static_cast<std::size_t>(x + n * y)] ==
            doctest::Approx(expect).epsilon(1e-12));
    }
  // Central tap squared at the impulse position.
  CHECK(out[static_cast<std::size_t>(15 + n * 15)] ==
        doctest::Approx(taps[7] * taps[7]).epsilon(1e-12));
}

TEST_CASE("warp with a zero field is the identity, bit-exact") {
  Volume3D v = make_volume(5, 4, 3);
  Rng rng(2);
  for (auto& x : v.data) x = static_cast<float>(rng.next_double());
  DeformationField zero;
  zero.nx = 5;
  zero.ny = 4;
  zero.nz = 3;
  zero.dx.assign(60, 0.0);
  zero.dy.assign(60, 0.0);
  const Volume3D w = warp(v, zero);
  CHECK(w.data == v.data);
}

TEST_CASE("warp gathers with clamping at the boundary") {
  // Row [1,2,3,4], dx=+1 everywhere: out = [2,3,4,4].
  Volume3D v = make_volume(4, 1, 1);
  v.data = {1, 2, 3, 4};
  DeformationField f;
  f.nx = 4;
  f.ny = 1;
  f.nz = 1;
  f.dx.assign(4, 1.0);
  f.dy.assign(4, 0.0);
  const Volume3D w = warp(v, f);
  CHECK(w.data == std::vector<float>{2, 3, 4, 4});
}

TEST_CASE("warp rounds half up in both directions") {
  Volume3D v = make_volume(4, 1, 1);
  v.data = {10, 20, 30, 40};
  DeformationField f;
  f.nx = 4;
  f.ny = 1;
  f.nz = 1;
  f.dy.assign(4, 0.0);
  f.dx = {0.5, 0.5, -0.5, -0.5};  // +0.5 -> next voxel, -0.5 -> same voxel
  const Volume3D w = warp(v, f);
  CHECK(w.data == std::vector<float>{20, 30, 30, 40});
}

TEST_CASE("warping a binary mask keeps it binary") {
  Volume3D m = make_volume(8, 8, 4, VolumeKind::binary_mask);
  Rng rng(6);
  for (auto& x : m.data) x = rng.next_double() < 0.5 ? 1.0f : 0.0f;
  DeformationParams p;
  const auto f = sample_field(8, 8, 4, p, 3);
  const Volume3D w = warp(m, f);
  for (float x : w.data) CHECK((x == 0.0f || x == 1.0f));
  CHECK_NOTHROW(w.validate());
}

TEST_CASE("warp rejects mismatched dims") {
  Volume3D v = make_volume(4, 4, 4);
  DeformationParams p;
  const auto f = sample_field(4, 4, 2, p, 1);
  CHECK_THROWS_AS(warp(v, f), ValidationError);
}

TEST_CASE("pointwise maps commute with warp exactly") {
  Rng rng(9);
  Volume3D v = make_volume(6, 6, 3);
  for (auto& x : v.data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  DeformationParams p;
  const auto f = sample_field(6, 6, 3, p, 77);
  auto phi = [](float x) { return x * x + 1.0f; };
  Volume3D phi_v = v;
  for (auto& x : phi_v.data) x = phi(x);
  const Volume3D a = warp(phi_v, f);  // warp(phi(v))
  Volume3D b = warp(v, f);            // phi(warp(v))
  for (auto& x : b.data) x = phi(x);
  CHECK(a.data == b.data);
}

TEST_CASE("shared-across-slices switch copies slice 0 everywhere") {
  DeformationParams p;
  p.shared_across_slices = true;
  const auto f = sample_field(6, 6, 4, p, 21);
  for (std::int64_t z = 1; z < 4; ++z)
    for (std::int64_t i = 0; i < 36; ++i) {
      CHECK(f.dx[static_cast<std::size_t>(z * 36 + i)] == f.dx[static_cast<std::size_t>(i)]);
      CHECK(f.dy[static_cast<std::size_t>(z * 36 + i)] == f.dy[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("deformation params are validated") {
  DeformationParams p;
  p.kernel_size = 14;  // even
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p.kernel_size = 15;
  p.scale_min = 6.0;  // min > max
  CHECK_THROWS_AS(p.validate(), ValidationError);
}
