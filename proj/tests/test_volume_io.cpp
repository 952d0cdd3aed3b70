#include <doctest.h>

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "vseg/nifti.hpp"
#include "vseg/png_io.hpp"
#include "vseg/rng.hpp"

using namespace vseg;
using vseg_test::TempDir;

namespace {

Volume3D random_volume(std::int64_t nx, std::int64_t ny, std::int64_t nz,
                       std::uint64_t seed) {
  Volume3D v = make_volume(nx, ny, nz);
  v.spacing = {0.3, 0.3, 0.3};
  Rng rng(seed);
  for (auto& x : v.data) x = static_cast<float>(rng.uniform(-10.0, 10.0));
  return v;
}

int run_py(const std::string& args) {
  const std::string cmd =
      "python3 " + vseg_test::tests_dir() + "/independent_nifti.py " + args;
  return std::system(cmd.c_str());
}

}  // namespace

TEST_CASE("nifti float32 roundtrip is bit-exact") {
  TempDir tmp;
  const Volume3D v = random_volume(7, 5, 3, 42);
  write_nifti(v, tmp.str("a.nii"));
  const Volume3D r = read_nifti(tmp.str("a.nii"));
  REQUIRE(r.dims == v.dims);
  CHECK(std::memcmp(r.data.data(), v.data.data(), v.data.size() * 4) == 0);
  CHECK(r.spacing[0] == doctest::Approx(0.3));
}

TEST_CASE("nifti mask roundtrips through uint8") {
  TempDir tmp;
  Volume3D mask = make_volume(6, 6, 6, VolumeKind::binary_mask);
  Rng rng(7);
  for (auto& x : mask.data) x = rng.next_double() < 0.3 ? 1.0f : 0.0f;
  write_nifti(mask, tmp.str("m.nii"), {NiftiDatatype::u8, "mask"});
  const Volume3D r = read_nifti(tmp.str("m.nii"), VolumeKind::binary_mask);
  CHECK(r.data == mask.data);
}

TEST_CASE("nifti int16 roundtrip is exact for integer values") {
  TempDir tmp;
  Volume3D v = make_volume(4, 4, 4);
  Rng rng(3);
  for (auto& x : v.data)
    x = static_cast<float>(static_cast<int>(rng.uniform(-3000, 3000)));
  write_nifti(v, tmp.str("i.nii"), {NiftiDatatype::i16, ""});
  const Volume3D r = read_nifti(tmp.str("i.nii"));
  CHECK(r.data == v.data);
}

TEST_CASE("malformed headers are rejected") {
  TempDir tmp;
  const Volume3D v = random_volume(4, 3, 2, 1);
  write_nifti(v, tmp.str("x.nii"));
  auto bytes = vseg_test::read_bytes(tmp.str("x.nii"));

  SUBCASE("wrong sizeof_hdr") {
    bytes[0] = 0x42;
    std::ofstream(tmp.str("bad.nii"), std::ios::binary) << bytes;
    CHECK_THROWS_AS(read_nifti(tmp.str("bad.nii")), ValidationError);
  }
  SUBCASE("wrong magic") {
    bytes[344] = 'x';
    std::ofstream(tmp.str("bad.nii"), std::ios::binary) << bytes;
    CHECK_THROWS_AS(read_nifti(tmp.str("bad.nii")), ValidationError);
  }
  SUBCASE("unsupported datatype") {
    bytes[70] = 64;  // float64 code
    bytes[71] = 0;
    std::ofstream(tmp.str("bad.nii"), std::ios::binary) << bytes;
    CHECK_THROWS_AS(read_nifti(tmp.str("bad.nii")), ValidationError);
  }
  SUBCASE("truncated payload") {
    bytes.resize(bytes.size() - 8);
    std::ofstream(tmp.str("bad.nii"), std::ios::binary) << bytes;
    CHECK_THROWS_AS(read_nifti(tmp.str("bad.nii")), ValidationError);
  }
}

TEST_CASE("writer layout: 348-byte header + 4-byte extender + payload") {
  TempDir tmp;
  const Volume3D v = make_volume(2, 2, 2);
  write_nifti(v, tmp.str("z.nii"));
  CHECK(std::filesystem::file_size(tmp.str("z.nii")) == 348 + 4 + 8 * 4);
}

TEST_CASE("reference volume from the independent writer reads correctly") {
  TempDir tmp;
  REQUIRE(run_py("write_ref " + tmp.str("ref.nii")) == 0);
  const Volume3D v = read_nifti(tmp.str("ref.nii"));
  REQUIRE(v.dims == std::array<std::int64_t, 3>{4, 3, 2});
  CHECK(v.spacing[0] == doctest::Approx(1.5));
  CHECK(v.spacing[1] == doctest::Approx(2.0));
  CHECK(v.spacing[2] == doctest::Approx(2.5));
  for (int i = 0; i < 24; ++i) CHECK(v.data[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("independent reader agrees with what we write") {
  TempDir tmp;
  const Volume3D v = random_volume(5, 4, 3, 99);
  write_nifti(v, tmp.str("w.nii"));
  REQUIRE(run_py("read " + tmp.str("w.nii") + " " + tmp.str("dump.txt")) == 0);
  std::ifstream dump(tmp.str("dump.txt"));
  std::string word;
  std::int64_t nx, ny, nz;
  dump >> word >> nx >> ny >> nz;
  REQUIRE(word == "dims");
  CHECK(nx == 5);
  CHECK(ny == 4);
  CHECK(nz == 3);
  double sx, sy, sz;
  dump >> word >> sx >> sy >> sz;
  CHECK(sx == doctest::Approx(0.3));
  dump >> word;
  REQUIRE(word == "values");
  for (float expected : v.data) {
    double got;
    dump >> got;
    CHECK(static_cast<float>(got) == expected);
  }
}

TEST_CASE("gzipped nii.gz is accepted on read") {
  TempDir tmp;
  const Volume3D v = random_volume(5, 5, 5, 11);
  write_nifti(v, tmp.str("p.nii"));
  REQUIRE(run_py("gzip " + tmp.str("p.nii") + " " + tmp.str("p.nii.gz")) == 0);
  const Volume3D r = read_nifti(tmp.str("p.nii.gz"));
  CHECK(r.data == v.data);
}

TEST_CASE("raw sidecar fallback roundtrips") {
  TempDir tmp;
  Volume3D v = random_volume(3, 4, 5, 5);
  v.kind = VolumeKind::intensity;
  write_raw_with_sidecar(v, tmp.str("v.raw"));
  const Volume3D r = read_raw_with_sidecar(tmp.str("v.raw"));
  CHECK(r.dims == v.dims);
  CHECK(r.kind == v.kind);
  CHECK(r.data == v.data);
}

TEST_CASE("volume invariants are enforced") {
  Volume3D v = make_volume(2, 2, 2, VolumeKind::binary_mask);
  v.data[3] = 0.5f;
  CHECK_THROWS_AS(v.validate(), ValidationError);
  CHECK_THROWS_AS(make_volume(0, 2, 2), ValidationError);
  Volume3D s = make_volume(2, 2, 2);
  s.spacing[1] = 0.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("mip projects the max along each axis") {
  // values: v(x,0,z) over 2x1x2, x-fastest: [1,5,3,2]
  Volume3D v = make_volume(2, 1, 2);
  v.data = {1, 5, 3, 2};
  const Image2D z = mip(v, Axis::z);
  REQUIRE(z.width == 2);
  REQUIRE(z.height == 1);
  CHECK(z.pixels[0] == 3);  // max(1,3)
  CHECK(z.pixels[1] == 5);  // max(5,2)

  Volume3D c = make_volume(4, 3, 2, VolumeKind::intensity, 2.5f);
  for (Axis a : {Axis::x, Axis::y, Axis::z})
    for (float px : mip(c, a).pixels) CHECK(px == 2.5f);
}

TEST_CASE("mip of a binary mask stays binary") {
  Volume3D m = make_volume(4, 4, 4, VolumeKind::binary_mask);
  Rng rng(13);
  for (auto& x : m.data) x = rng.next_double() < 0.4 ? 1.0f : 0.0f;
  for (float px : mip(m, Axis::y).pixels) CHECK((px == 0.0f || px == 1.0f));
}

TEST_CASE("mip commutes with axis transposition") {
  Volume3D v = make_volume(3, 4, 5);
  Rng rng(21);
  for (auto& x : v.data) x = static_cast<float>(rng.next_double());
  // Transpose x<->y, then projecting along z should give the transposed image.
  Volume3D t = make_volume(4, 3, 5);
  for (std::int64_t z = 0; z < 5; ++z)
    for (std::int64_t y = 0; y < 4; ++y)
      for (std::int64_t x = 0; x < 3; ++x) t.at(y, x, z) = v.at(x, y, z);
  const Image2D a = mip(v, Axis::z);
  const Image2D b = mip(t, Axis::z);
  for (std::int64_t y = 0; y < 4; ++y)
    for (std::int64_t x = 0; x < 3; ++x) CHECK(a.at(x, y) == b.at(y, x));
}

TEST_CASE("png windowing quantizes with round-half-up") {
  CHECK(window_to_u8(0.0f, 0.0f, 1.0f) == 0);
  CHECK(window_to_u8(-5.0f, 0.0f, 1.0f) == 0);
  CHECK(window_to_u8(2.0f, 0.0f, 1.0f) == 255);
  CHECK(window_to_u8(0.5f, 0.0f, 1.0f) == 128);  // round(127.5) half-up
  CHECK(window_to_u8(5.0f, 0.0f, 10.0f) == 128);
}

TEST_CASE("png emission is byte-deterministic") {
  TempDir tmp;
  Image2D img;
  img.width = 16;
  img.height = 9;
  img.pixels.resize(16 * 9);
  Rng rng(5);
  for (auto& p : img.pixels) p = static_cast<float>(rng.next_double());
  write_mip_png(img, tmp.str("a.png"), 0.0f, 1.0f);
  write_mip_png(img, tmp.str("b.png"), 0.0f, 1.0f);
  const auto a = vseg_test::read_bytes(tmp.str("a.png"));
  const auto b = vseg_test::read_bytes(tmp.str("b.png"));
  REQUIRE(!a.empty());
  CHECK(a == b);
  CHECK(static_cast<unsigned char>(a[0]) == 0x89);
  CHECK(a.substr(1, 3) == "PNG");
}

TEST_CASE("png rejects an invalid window") {
  TempDir tmp;
  Image2D img;
  img.width = img.height = 2;
  img.pixels = {0, 0, 0, 0};
  CHECK_THROWS_AS(write_mip_png(img, tmp.str("x.png"), 1.0f, 1.0f), ValidationError);
}
