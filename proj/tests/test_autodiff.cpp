#include <doctest.h>

#include "vseg/autodiff_nn.hpp"
#include "vseg/rng.hpp"

using namespace vseg;

namespace {

std::vector<double> random_values(std::int64_t n, Rng& rng, double lo = -1.0,
                                  double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Values with pairwise separation well above the finite-difference step, so
// max-pool argmax and relu signs cannot flip under the probe.
std::vector<double> separated_values(std::int64_t n, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = 0.013 * static_cast<double>(i + 1) * (rng.next_double() < 0.5 ? -1.0 : 1.0) +
           0.31;
  for (std::size_t i = v.size() - 1; i > 0; --i)
    std::swap(v[i], v[static_cast<std::size_t>(rng.next_index(i + 1))]);
  return v;
}

// Direct-summation reference for conv3d, independent of the im2col path.
std::vector<double> conv3d_reference(const std::vector<double>& x, const Shape& xs,
                                     const std::vector<double>& w, const Shape& ws,
                                     const std::vector<double>& bias, int stride,
                                     int pad) {
  const std::int64_t N = xs[0], Cin = xs[1], X = xs[2], Y = xs[3], Z = xs[4];
  const std::int64_t Cout = ws[0], K = ws[2];
  const std::int64_t OX = (X + 2 * pad - K) / stride + 1;
  const std::int64_t OY = (Y + 2 * pad - K) / stride + 1;
  const std::int64_t OZ = (Z + 2 * pad - K) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(N * Cout * OX * OY * OZ), 0.0);
  auto xat = [&](std::int64_t n, std::int64_t c, std::int64_t i, std::int64_t j,
                 std::int64_t k) -> double {
    if (i < 0 || i >= X || j < 0 || j >= Y || k < 0 || k >= Z) return 0.0;
    return x[static_cast<std::size_t>(i + X * (j + Y * (k + Z * (c + Cin * n))))];
  };
  std::size_t o = 0;
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t co = 0; co < Cout; ++co)
      for (std::int64_t oz = 0; oz < OZ; ++oz)
        for (std::int64_t oy = 0; oy < OY; ++oy)
          for (std::int64_t ox = 0; ox < OX; ++ox) {
            double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(co)];
            for (std::int64_t ci = 0; ci < Cin; ++ci)
              for (std::int64_t kz = 0; kz < K; ++kz)
                for (std::int64_t ky = 0; ky < K; ++ky)
                  for (std::int64_t kx = 0; kx < K; ++kx)
                    acc += w[static_cast<std::size_t>(
                               kx + K * (ky + K * (kz + K * (ci + Cin * co))))] *
                           xat(n, ci, ox * stride + kx - pad, oy * stride + ky - pad,
                               oz * stride + kz - pad);
            // x-fastest output layout: ox + OX*(oy + OY*(oz + OZ*(co + Cout*n)))
            out[static_cast<std::size_t>(
                ox + OX * (oy + OY * (oz + OZ * (co + Cout * n))))] = acc;
            (void)o;
          }
  return out;
}

}  // namespace

TEST_CASE("conv3d matches the direct-summation oracle") {
  Rng rng(100);
  struct Case {
    Shape xs, ws;
    int stride, pad;
  };
  for (const Case& c : {Case{{2, 2, 5, 4, 6}, {3, 2, 3, 3, 3}, 1, 1},
                        Case{{1, 3, 6, 6, 6}, {2, 3, 3, 3, 3}, 2, 0},
                        Case{{2, 4, 4, 4, 4}, {3, 4, 1, 1, 1}, 1, 0},
                        Case{{1, 1, 5, 5, 5}, {1, 1, 3, 3, 3}, 1, 1}}) {
    const auto xv = random_values(numel(c.xs), rng);
    const auto wv = random_values(numel(c.ws), rng);
    const auto bv = random_values(c.ws[0], rng);
    Tape<double> tape;
    auto x = tape.leaf(c.xs, xv, false);
    auto w = tape.leaf(c.ws, wv, false);
    auto b = tape.leaf({c.ws[0]}, bv, false);
    auto y = conv3d(x, w, b, c.stride, c.pad);
    const auto ref = conv3d_reference(xv, c.xs, wv, c.ws, bv, c.stride, c.pad);
    REQUIRE(y.values().size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(y.values()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv3d of all-ones input and kernel counts the overlap") {
  Tape<double> tape;
  auto x = tape.leaf({1, 1, 3, 3, 3}, std::vector<double>(27, 1.0), false);
  auto w = tape.leaf({1, 1, 3, 3, 3}, std::vector<double>(27, 1.0), false);
  auto y = conv3d(x, w, 1, 1);
  auto at = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
    return y.values()[static_cast<std::size_t>(i + 3 * (j + 3 * k))];
  };
  CHECK(at(1, 1, 1) == 27.0);  // center
  CHECK(at(0, 1, 1) == 18.0);  // face center
  CHECK(at(0, 0, 1) == 12.0);  // edge center
  CHECK(at(0, 0, 0) == 8.0);   // corner
}

TEST_CASE("maxpool3d on a constant tensor halves dims and keeps the value") {
  Tape<double> tape;
  auto x = tape.leaf({1, 2, 4, 4, 4}, std::vector<double>(128, 3.5), false);
  auto y = maxpool3d(x);
  CHECK(y.shape() == Shape{1, 2, 2, 2, 2});
  for (double v : y.values()) CHECK(v == 3.5);
}

TEST_CASE("maxpool3d ties route gradient to the lowest flat index") {
  Tape<double> tape;
  auto x = tape.leaf({1, 1, 2, 2, 2}, std::vector<double>(8, 1.0), true);
  auto y = maxpool3d(x);
  auto loss = sum(y);
  tape.backward(loss);
  const auto& g = tape.grad(x);
  CHECK(g[0] == 1.0);
  for (std::size_t i = 1; i < 8; ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("maxpool3d rejects odd spatial dims") {
  Tape<double> tape;
  auto x = tape.leaf({1, 1, 3, 4, 4}, std::vector<double>(48, 0.0), false);
  CHECK_THROWS_AS(maxpool3d(x), ValidationError);
}

TEST_CASE("nearest upsample x2 replicates [a,b] to [a,a,b,b]") {
  Tape<double> tape;
  auto x = tape.leaf({1, 1, 2, 1, 1}, {1.0, 2.0}, false);
  auto y = upsample_nearest_2x(x);
  CHECK(y.shape() == Shape{1, 1, 4, 2, 2});
  // x-fastest: first row along x is [a,a,b,b]
  CHECK(y.values()[0] == 1.0);
  CHECK(y.values()[1] == 1.0);
  CHECK(y.values()[2] == 2.0);
  CHECK(y.values()[3] == 2.0);
}

TEST_CASE("nearest upsample to target maps i -> floor(i*in/out)") {
  Tape<double> tape;
  auto x = tape.leaf({1, 1, 3, 1, 1}, {10.0, 20.0, 30.0}, false);
  auto y = upsample_nearest(x, {7, 1, 1});
  const std::vector<double> expect{10, 10, 10, 20, 20, 30, 30};  // floor(i*3/7)
  for (std::size_t i = 0; i < 7; ++i) CHECK(y.values()[i] == expect[i]);
  CHECK_THROWS_AS(upsample_nearest(x, {0, 1, 1}), ValidationError);
}

TEST_CASE("backward of sum(w*x) with respect to w is x") {
  Tape<double> tape;
  Rng rng(4);
  const auto xv = random_values(24, rng);
  auto w = tape.leaf({24}, random_values(24, rng), true);
  auto x = tape.leaf({24}, xv, false);
  auto loss = sum(mul(w, x));
  tape.backward(loss);
  const auto& g = tape.grad(w);
  for (std::size_t i = 0; i < 24; ++i) CHECK(g[i] == doctest::Approx(xv[i]));
}

TEST_CASE("sigmoid gradient at 0 is 0.25") {
  Tape<double> tape;
  auto s = tape.leaf({1}, {0.0}, true);
  auto y = sigmoid(s);
  tape.backward(y);
  CHECK(tape.grad(s)[0] == doctest::Approx(0.25));
}

TEST_CASE("relu subgradient at exactly 0 is 0") {
  Tape<double> tape;
  auto x = tape.leaf({3}, {-1.0, 0.0, 2.0}, true);
  auto y = sum(relu(x));
  tape.backward(y);
  const auto& g = tape.grad(x);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 1.0);
}

TEST_CASE("gradient accumulates over multiple uses of a leaf") {
  Tape<double> tape;
  auto x = tape.leaf({4}, {1.0, 2.0, 3.0, 4.0}, true);
  auto loss = add(sum(x), scalar_mul(sum(x), 2.0));
  tape.backward(loss);
  for (double g : tape.grad(x)) CHECK(g == doctest::Approx(3.0));
}

TEST_CASE("backward rejects non-scalar and foreign roots") {
  Tape<double> tape;
  auto x = tape.leaf({4}, {1.0, 2.0, 3.0, 4.0}, true);
  CHECK_THROWS_AS(tape.backward(x), ValidationError);
  Tape<double> other;
  auto y = other.leaf({1}, {1.0}, true);
  CHECK_THROWS_AS(tape.backward(y), ValidationError);
}

TEST_CASE("elementwise ops reject mismatched shapes") {
  Tape<double> tape;
  auto a = tape.leaf({2, 3}, std::vector<double>(6, 1.0), false);
  auto b = tape.leaf({3, 2}, std::vector<double>(6, 1.0), false);
  CHECK_THROWS_AS(add(a, b), ValidationError);
  CHECK_THROWS_AS(mul(a, b), ValidationError);
}

TEST_CASE("linearity: grad(a*f + b*g) == a*grad(f) + b*grad(g)") {
  Rng rng(9);
  const Shape shape{2, 3, 4};
  const auto xv = random_values(numel(shape), rng, 0.2, 1.5);
  auto grad_of = [&](auto program) {
    Tape<double> tape;
    auto x = tape.leaf(shape, xv, true);
    tape.backward(program(tape, x));
    return tape.grad(x);
  };
  auto f = [](Tape<double>&, Tensor<double> x) { return sum(mul(x, x)); };
  auto g = [](Tape<double>&, Tensor<double> x) { return mean(sigmoid(x)); };
  const double ca = 1.7, cb = -0.6;
  auto combined = [&](Tape<double>& t, Tensor<double> x) {
    return add(scalar_mul(f(t, x), ca), scalar_mul(g(t, x), cb));
  };
  const auto gf = grad_of(f);
  const auto gg = grad_of(g);
  const auto gc = grad_of(combined);
  for (std::size_t i = 0; i < gc.size(); ++i)
    CHECK(std::abs(gc[i] - (ca * gf[i] + cb * gg[i])) < 1e-12);
}

TEST_CASE("forward evaluation is deterministic") {
  Rng rng(31);
  const Shape xs{2, 2, 4, 4, 4};
  const Shape ws{2, 2, 3, 3, 3};
  const auto xv = random_values(numel(xs), rng);
  const auto wv = random_values(numel(ws), rng);
  auto eval = [&]() {
    Tape<double> tape;
    auto x = tape.leaf(xs, xv, false);
    auto w = tape.leaf(ws, wv, false);
    return conv3d(x, w, 1, 1).values();
  };
  CHECK(eval() == eval());
}

// Finite-difference sweep over every primitive (the criterion-1 oracle).
TEST_CASE("grad_check passes for every primitive on randomized shapes") {
  Rng rng(77);
  const Shape shape{2, 3, 5, 5, 5};
  const std::int64_t n = numel(shape);

  SUBCASE("elementwise and reductions") {
    auto values = random_values(n, rng, 0.3, 1.7);
    auto values_b = random_values(n, rng, 0.3, 1.7);
    struct Named {
      const char* name;
      std::function<Tensor<double>(Tape<double>&, std::vector<Tensor<double>>&)> f;
    };
    const std::vector<Named> programs{
        {"add", [](Tape<double>&, auto& in) { return sum(add(in[0], in[1])); }},
        {"sub",
         [](Tape<double>&, auto& in) { return sum(mul(sub(in[0], in[1]), in[0])); }},
        {"mul", [](Tape<double>&, auto& in) { return sum(mul(in[0], in[1])); }},
        {"scalar_add",
         [](Tape<double>&, auto& in) { return mean(scalar_add(in[0], 0.7)); }},
        {"scalar_mul",
         [](Tape<double>&, auto& in) { return mean(scalar_mul(in[0], -1.3)); }},
        {"scalar_rsub",
         [](Tape<double>&, auto& in) { return sum(mul(scalar_rsub(2.0, in[0]), in[1])); }},
        {"pow_scalar",
         [](Tape<double>&, auto& in) { return sum(pow_scalar(in[0], 0.75)); }},
        {"relu", [](Tape<double>&, auto& in) { return sum(relu(in[0])); }},
        {"sigmoid", [](Tape<double>&, auto& in) { return mean(sigmoid(in[0])); }},
        {"sum_samplewise",
         [](Tape<double>&, auto& in) {
           return sum(pow_scalar(sum_samplewise(in[0]), 2.0));
         }},
    };
    for (const auto& p : programs) {
      INFO("primitive: ", p.name);
      const auto report = grad_check(p.f, {{shape, values}, {shape, values_b}});
      CHECK(report.pass);
    }
  }

  SUBCASE("relu away from the kink") {
    auto values = separated_values(n, rng);
    const auto report = grad_check(
        [](Tape<double>&, auto& in) { return sum(relu(in[0])); }, {{shape, values}});
    CHECK(report.pass);
  }

  SUBCASE("conv3d stride 1 pad 1") {
    const Shape xs{2, 2, 4, 4, 4}, ws{3, 2, 3, 3, 3};
    const auto report = grad_check(
        [&](Tape<double>&, auto& in) {
          return sum(conv3d(in[0], in[1], in[2], 1, 1));
        },
        {{xs, random_values(numel(xs), rng)},
         {ws, random_values(numel(ws), rng)},
         {{3}, random_values(3, rng)}});
    CHECK(report.pass);
  }

  SUBCASE("conv3d stride 2 pad 0") {
    const Shape xs{1, 2, 5, 5, 5}, ws{2, 2, 3, 3, 3};
    const auto report = grad_check(
        [&](Tape<double>&, auto& in) {
          return mean(conv3d(in[0], in[1], in[2], 2, 0));
        },
        {{xs, random_values(numel(xs), rng)},
         {ws, random_values(numel(ws), rng)},
         {{2}, random_values(2, rng)}});
    CHECK(report.pass);
  }

  SUBCASE("conv3d 1x1x1 head") {
    const Shape xs{2, 3, 4, 4, 4}, ws{1, 3, 1, 1, 1};
    const auto report = grad_check(
        [&](Tape<double>&, auto& in) {
          return sum(sigmoid(conv3d(in[0], in[1], in[2], 1, 0)));
        },
        {{xs, random_values(numel(xs), rng)},
         {ws, random_values(numel(ws), rng)},
         {{1}, random_values(1, rng)}});
    CHECK(report.pass);
  }

  SUBCASE("maxpool3d") {
    const Shape xs{2, 2, 4, 4, 4};
    const auto report = grad_check(
        [](Tape<double>&, auto& in) { return sum(maxpool3d(in[0])); },
        {{xs, separated_values(numel(xs), rng)}});
    CHECK(report.pass);
  }

  SUBCASE("upsample x2 and to-target") {
    const Shape xs{2, 2, 3, 3, 3};
    auto values = random_values(numel(xs), rng);
    auto r1 = grad_check(
        [](Tape<double>&, auto& in) {
          return mean(mul(upsample_nearest_2x(in[0]), upsample_nearest_2x(in[0])));
        },
        {{xs, values}});
    CHECK(r1.pass);
    auto r2 = grad_check(
        [](Tape<double>&, auto& in) {
          return sum(upsample_nearest(in[0], {7, 5, 4}));
        },
        {{xs, values}});
    CHECK(r2.pass);
  }

  SUBCASE("concat_channels") {
    const Shape sa{2, 2, 3, 3, 3}, sb{2, 3, 3, 3, 3};
    const auto report = grad_check(
        [](Tape<double>&, auto& in) {
          auto c = concat_channels(in[0], in[1]);
          return sum(mul(c, c));
        },
        {{sa, random_values(numel(sa), rng)}, {sb, random_values(numel(sb), rng)}});
    CHECK(report.pass);
  }

  SUBCASE("warp_gather") {
    const Shape xs{2, 1, 4, 4, 2};
    auto gather = std::make_shared<std::vector<std::int64_t>>();
    for (std::int64_t i = 0; i < 32; ++i)
      gather->push_back(static_cast<std::int64_t>(rng.next_index(32)));
    const auto report = grad_check(
        [&](Tape<double>&, auto& in) {
          auto w = warp_gather(in[0], gather);
          return sum(mul(w, w));
        },
        {{xs, random_values(numel(xs), rng)}});
    CHECK(report.pass);
  }

  SUBCASE("batchnorm") {
    // A fixed weighting keeps the loss sensitive to x; sum(bn(x)^2) is nearly
    // invariant under the normalization and starves the finite differences.
    const Shape xs{2, 2, 3, 3, 3};
    const auto weights = random_values(numel(xs), rng);
    const auto report = grad_check(
        [&](Tape<double>& t, auto& in) {
          auto c = t.constant(xs, weights);
          return sum(mul(batchnorm(in[0], in[1], in[2]), c));
        },
        {{xs, random_values(numel(xs), rng)},
         {{2}, {1.3, 0.8}},
         {{2}, {0.1, -0.2}}});
    CHECK(report.pass);
  }
}

TEST_CASE("grad_check on f(x)=sum(x^2) is exact") {
  Rng rng(55);
  const Shape shape{3, 4};
  const auto report = grad_check(
      [](Tape<double>&, auto& in) { return sum(mul(in[0], in[0])); },
      {{shape, random_values(numel(shape), rng)}});
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-9);
}

TEST_CASE("grad_check rejects non-scalar programs") {
  CHECK_THROWS_AS(
      grad_check([](Tape<double>&, auto& in) { return relu(in[0]); },
                 {{Shape{3}, {1.0, 2.0, 3.0}}}),
      ValidationError);
}
