#include <doctest.h>

#include "vseg/rng.hpp"
#include "vseg/unet.hpp"

using namespace vseg;

namespace {

NetworkConfig small_config() {
  NetworkConfig cfg;
  cfg.depth = 3;
  cfg.base_channels = 2;
  cfg.supervision_scales = 2;
  return cfg;
}

std::vector<double> random_input(std::int64_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("build is deterministic given (config, seed)") {
  const NetworkConfig cfg = small_config();
  const auto a = build<double>(cfg, 11);
  const auto b = build<double>(cfg, 11);
  REQUIRE(a.tensors().size() == b.tensors().size());
  for (std::size_t i = 0; i < a.tensors().size(); ++i) {
    CHECK(a.tensors()[i].name == b.tensors()[i].name);
    CHECK(a.tensors()[i].values == b.tensors()[i].values);
  }
  const auto c = build<double>(cfg, 12);
  CHECK(a.tensors()[0].values != c.tensors()[0].values);
}

TEST_CASE("parameter count matches the enumeration oracle") {
  // Default config (depth 4, base 16, in 1, out 1, m 3): block list summed
  // independently before the implementation existed.
  //   encoder weights: 432 + 6912 + 13824 + 27648 + 55296 + 110592
  //                    + 221184 + 442368               = 878256
  //   decoder weights: (221184+221184+110592) + (55296+55296+27648)
  //                    + (13824+13824+6912)            = 725760
  //   head weights:    16 + 32 + 64                    = 112
  //   biases:          480 (enc) + 336 (dec) + 3 (heads) = 819
  const NetworkConfig cfg;  // defaults
  const auto params = build<float>(cfg, 0);
  CHECK(params.total_count() == 1604947);

  // Independent re-count for the small config via the level formulas.
  const NetworkConfig s = small_config();
  std::int64_t expect = 0;
  auto conv = [&](std::int64_t cout, std::int64_t cin, std::int64_t k) {
    expect += cout * cin * k * k * k + cout;
  };
  conv(2, 1, 3); conv(2, 2, 3);    // enc0
  conv(4, 2, 3); conv(4, 4, 3);    // enc1
  conv(8, 4, 3); conv(8, 8, 3);    // enc2 (bottleneck)
  conv(4, 8, 3); conv(4, 8, 3); conv(4, 4, 3);  // dec1: up, conv1 (concat 8), conv2
  conv(2, 4, 3); conv(2, 4, 3); conv(2, 2, 3);  // dec0
  conv(1, 2, 1); conv(1, 4, 1);    // heads 1..2
  CHECK(build<double>(s, 5).total_count() == expect);
}

TEST_CASE("invalid configurations are rejected") {
  NetworkConfig cfg = small_config();
  cfg.supervision_scales = cfg.depth;  // m must be <= depth-1
  CHECK_THROWS_AS(build<double>(cfg, 0), ValidationError);
  cfg.supervision_scales = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = small_config();
  cfg.depth = 1;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("zero-initialized heads output sigmoid(0) = 0.5 everywhere") {
  const NetworkConfig cfg = small_config();
  auto params = build<double>(cfg, 3);
  for (auto& t : params.tensors())
    if (t.name.starts_with("head"))
      std::fill(t.values.begin(), t.values.end(), 0.0);
  Tape<double> tape;
  auto bound = bind_parameters(tape, params, false);
  auto x = tape.leaf({1, 1, 8, 8, 8}, random_input(512, 4), false);
  const auto out = forward(cfg, bound, x);
  for (const auto& scale : out.scales)
    for (double v : scale.values()) CHECK(v == 0.5);
}

TEST_CASE("every scale output matches the input spatial shape") {
  const NetworkConfig cfg = small_config();
  const auto params = build<double>(cfg, 8);
  Tape<double> tape;
  auto bound = bind_parameters(tape, params, false);
  auto x = tape.leaf({2, 1, 8, 12, 4}, random_input(2 * 8 * 12 * 4, 9), false);
  const auto out = forward(cfg, bound, x);
  REQUIRE(out.m() == cfg.supervision_scales);
  for (const auto& scale : out.scales) {
    CHECK(scale.shape() == Shape{2, 1, 8, 12, 4});
    for (double v : scale.values()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("indivisible spatial dims are rejected") {
  const NetworkConfig cfg = small_config();  // pool factor 4
  const auto params = build<double>(cfg, 8);
  Tape<double> tape;
  auto bound = bind_parameters(tape, params, false);
  auto x = tape.leaf({1, 1, 6, 8, 8}, random_input(6 * 8 * 8, 2), false);
  CHECK_THROWS_AS(forward(cfg, bound, x), ValidationError);
}

TEST_CASE("forward is deterministic") {
  const NetworkConfig cfg = small_config();
  const auto params = build<double>(cfg, 5);
  const auto input = random_input(8 * 8 * 8, 6);
  auto eval = [&]() {
    Tape<double> tape;
    auto bound = bind_parameters(tape, params, false);
    auto x = tape.leaf({1, 1, 8, 8, 8}, input, false);
    return forward(cfg, bound, x).finest().values();
  };
  CHECK(eval() == eval());
}

TEST_CASE("m=1 finest output equals the plain U-Net prediction") {
  // Heads are created after the shared trunk, so the same seed yields the
  // same trunk and head-1 weights for any m.
  NetworkConfig cfg = small_config();
  NetworkConfig plain = cfg;
  plain.supervision_scales = 1;
  const auto params_m2 = build<double>(cfg, 21);
  const auto params_m1 = build<double>(plain, 21);
  const auto input = random_input(8 * 8 * 8, 22);

  Tape<double> t1, t2;
  auto out_m2 = forward(cfg, bind_parameters(t1, params_m2, false),
                        t1.leaf({1, 1, 8, 8, 8}, input, false));
  auto out_m1 = forward(plain, bind_parameters(t2, params_m1, false),
                        t2.leaf({1, 1, 8, 8, 8}, input, false));
  CHECK(out_m1.finest().values() == out_m2.finest().values());
}

TEST_CASE("outputs shift with the input by the pooling period") {
  // Shifting by 2^(depth-1) keeps every pooling window aligned, so outputs
  // translate exactly wherever the receptive cone avoids the volume
  // boundary. For depth 3 (two 3^3 convs per level plus the decoder path)
  // the cone radius is 23 input voxels; compare only that interior.
  NetworkConfig cfg = small_config();  // depth 3, period 4
  const auto params = build<double>(cfg, 31);
  const std::int64_t n = 64;
  const std::int64_t shift = cfg.pool_factor();
  const std::int64_t margin = 24;  // cone radius 23, rounded up

  std::vector<double> base(static_cast<std::size_t>(n * n * n), 0.0);
  Rng rng(32);
  auto at = [&](std::vector<double>& v, std::int64_t x, std::int64_t y, std::int64_t z)
      -> double& { return v[static_cast<std::size_t>(x + n * (y + n * z))]; };
  std::vector<double> shifted = base;
  for (std::int64_t z = 28; z < 36; ++z)
    for (std::int64_t y = 28; y < 36; ++y)
      for (std::int64_t x = 26; x < 34; ++x) {
        const double val = rng.uniform(0.5, 2.0);
        at(base, x, y, z) = val;
        at(shifted, x + shift, y, z) = val;
      }

  auto run = [&](const std::vector<double>& v) {
    Tape<double> tape;
    auto bound = bind_parameters(tape, params, false);
    auto x = tape.leaf({1, 1, n, n, n}, v, false);
    return forward(cfg, bound, x).finest().values();
  };
  const auto out_base = run(base);
  const auto out_shifted = run(shifted);
  std::int64_t compared = 0;
  for (std::int64_t z = margin; z < n - margin; ++z)
    for (std::int64_t y = margin; y < n - margin; ++y)
      for (std::int64_t x = margin; x + shift < n - margin; ++x) {
        const double a = out_base[static_cast<std::size_t>(x + n * (y + n * z))];
        const double b = out_shifted[static_cast<std::size_t>(x + shift + n * (y + n * z))];
        REQUIRE(std::abs(a - b) < 1e-12);
        ++compared;
      }
  CHECK(compared > 1000);
}

TEST_CASE("batchnorm configuration builds and runs") {
  NetworkConfig cfg = small_config();
  cfg.normalization = NetworkConfig::Norm::batch;
  const auto params = build<double>(cfg, 41);
  CHECK(params.has("enc0_conv1_gamma"));
  Tape<double> tape;
  auto bound = bind_parameters(tape, params, false);
  auto x = tape.leaf({2, 1, 8, 8, 8}, random_input(2 * 512, 42), false);
  const auto out = forward(cfg, bound, x);
  for (double v : out.finest().values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}
