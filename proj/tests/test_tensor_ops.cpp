#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "gwcosal/gradcheck.hpp"
#include "gwcosal/ops.hpp"
#include "gwcosal/rng.hpp"

#include "oracles.hpp"

using namespace gwcosal;
using oracles::random_tensor;

namespace {

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape == b.shape &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(T)) == 0;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    REQUIRE(a.shape == b.shape);
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::abs(double(a.data[i]) - double(b.data[i])));
    }
    return m;
}

ConvParams<double> random_params(Rng& rng, long out_c, long in_c, long k, long stride, long pad,
                                 bool with_bias = true) {
    ConvParams<double> p;
    p.weights = random_tensor<double>(rng, Shape4{out_c, in_c, k, k}, 0.5);
    p.bias.assign(static_cast<std::size_t>(out_c), 0.0);
    if (with_bias) {
        for (auto& b : p.bias) b = rng.normal() * 0.1;
    }
    p.stride = stride;
    p.pad = pad;
    return p;
}

} // namespace

TEST_CASE("conv2d matches the hand-computed 3x3 all-ones example") {
    TensorD x(Shape4{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    ConvParams<double> p;
    p.weights = TensorD(Shape4{1, 1, 3, 3}, std::vector<double>(9, 1.0));
    p.bias = {0.0};
    p.stride = 1;
    p.pad = 1;
    auto [y, ctx] = conv2d(x, p);
    const std::vector<double> expected = {12, 21, 16, 27, 45, 33, 24, 39, 28};
    REQUIRE(y.shape == Shape4{1, 1, 3, 3});
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(y.data[i] == doctest::Approx(expected[i]).epsilon(1e-14));
    }
}

TEST_CASE("conv2d with a 1x1 identity kernel is the identity") {
    Rng rng(7);
    const TensorD x = random_tensor<double>(rng, Shape4{2, 1, 4, 5});
    ConvParams<double> p;
    p.weights = TensorD(Shape4{1, 1, 1, 1}, {1.0});
    p.bias = {0.0};
    auto [y, ctx] = conv2d(x, p);
    CHECK(bit_equal(y, x));
}

TEST_CASE("conv2d matches the naive 6-loop oracle elementwise") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        Rng rng(seed);
        const TensorD x = random_tensor<double>(rng, Shape4{2, 3, 8, 8});
        ConvParams<double> p = random_params(rng, 4, 3, 3, 1, 1);
        SUBCASE("stride 1 pad 1") {}
        if (seed % 2 == 1) {
            p.stride = 2;
            p.pad = 0;
        }
        auto [y, ctx] = conv2d(x, p);
        const TensorD ref = oracles::naive_conv2d(x, p.weights, p.bias, p.stride, p.pad);
        CHECK(max_abs_diff(y, ref) <= 1e-12);
    }
}

TEST_CASE("conv2d rejects shape mismatches with a diagnostic") {
    const TensorD x(Shape4{1, 2, 4, 4});
    ConvParams<double> p;
    p.weights = TensorD(Shape4{1, 3, 3, 3});
    p.bias = {0.0};
    CHECK_THROWS_AS((void)conv2d(x, p), ShapeError);
    ConvParams<double> too_big;
    too_big.weights = TensorD(Shape4{1, 2, 9, 9});
    too_big.bias = {0.0};
    CHECK_THROWS_AS((void)conv2d(x, too_big), ShapeError);
}

TEST_CASE("conv2d_grad: zero dY gives zero gradients; identity kernel passes dY through") {
    Rng rng(3);
    const TensorD x = random_tensor<double>(rng, Shape4{1, 2, 5, 5});
    ConvParams<double> p = random_params(rng, 3, 2, 3, 1, 1);
    auto [y, ctx] = conv2d(x, p);

    const ConvGrads<double> zero = conv2d_grad(ctx, TensorD(y.shape));
    CHECK(max_abs_diff(zero.input, TensorD(x.shape)) == 0.0);
    CHECK(max_abs_diff(zero.weights, TensorD(p.weights.shape)) == 0.0);
    for (double b : zero.bias) CHECK(b == 0.0);

    ConvParams<double> id;
    id.weights = TensorD(Shape4{1, 1, 1, 1}, {1.0});
    id.bias = {0.0};
    const TensorD x1 = random_tensor<double>(rng, Shape4{1, 1, 4, 6});
    auto [y1, ctx1] = conv2d(x1, id);
    const TensorD dy = random_tensor<double>(rng, y1.shape);
    CHECK(bit_equal(conv2d_grad(ctx1, dy).input, dy));
}

TEST_CASE("conv2d_grad rejects a dY that does not match the context") {
    Rng rng(4);
    const TensorD x = random_tensor<double>(rng, Shape4{1, 2, 6, 6});
    ConvParams<double> p = random_params(rng, 2, 2, 3, 1, 1);
    auto [y, ctx] = conv2d(x, p);
    CHECK_THROWS_AS((void)conv2d_grad(ctx, TensorD(Shape4{1, 2, 5, 5})), ShapeError);
}

TEST_CASE("conv2d gradients match central finite differences") {
    for (std::uint64_t seed = 10; seed < 14; ++seed) {
        Rng rng(seed);
        const TensorD x = random_tensor<double>(rng, Shape4{1, 2, 6, 5});
        const ConvParams<double> p = random_params(rng, 3, 2, 3, 1, 1);
        auto [y, ctx] = conv2d(x, p);
        const TensorD probe = random_tensor<double>(rng, y.shape);
        const ConvGrads<double> g = conv2d_grad(ctx, probe);

        CHECK(grad_check([&](const TensorD& xx) { return conv2d(xx, p).first; }, x, g.input,
                         probe, 1e-5) <= 1e-4);
        CHECK(grad_check(
                  [&](const TensorD& ww) {
                      ConvParams<double> pp = p;
                      pp.weights = ww;
                      return conv2d(x, pp).first;
                  },
                  p.weights, g.weights, probe, 1e-5) <= 1e-4);
    }
}

TEST_CASE("deconv2d is the exact adjoint of conv2d") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        Rng rng(seed);
        const long stride = 1 + long(seed % 3);
        const long k = stride + 1 + long(seed % 2);
        const long pad = long(seed % 2);
        const long oh = 3 + long(seed % 3);
        const long h = (oh - 1) * stride + k - 2 * pad; // exact transpose geometry
        const long channels = 1 + long(seed % 3);       // square so one bias fits both ops
        ConvParams<double> p =
            random_params(rng, channels, channels, k, stride, pad, /*with_bias=*/false);

        const TensorD x = random_tensor<double>(rng, Shape4{1, channels, h, h});
        auto [cx, cctx] = conv2d(x, p);
        const TensorD u = random_tensor<double>(rng, cx.shape);
        auto [du, dctx] = deconv2d(u, p);
        REQUIRE(du.shape == x.shape);

        const double lhs = dot(cx, u);
        const double rhs = dot(x, du);
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max({std::abs(lhs), std::abs(rhs), 1.0}));
    }
}

TEST_CASE("conv/deconv adjoint identity also holds for non-square channel counts") {
    for (std::uint64_t seed = 100; seed < 104; ++seed) {
        Rng rng(seed);
        ConvParams<double> p = random_params(rng, 4, 2, 3, 1, 1, /*with_bias=*/false);
        const TensorD x = random_tensor<double>(rng, Shape4{1, 2, 6, 7});
        auto [cx, cctx] = conv2d(x, p);

        ConvParams<double> pt = p;
        pt.bias.assign(static_cast<std::size_t>(pt.in_ch()), 0.0); // zero bias, deconv-sized
        const TensorD u = random_tensor<double>(rng, cx.shape);
        auto [du, dctx] = deconv2d(u, pt);
        REQUIRE(du.shape == x.shape);

        const double lhs = dot(cx, u);
        const double rhs = dot(x, du);
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max({std::abs(lhs), std::abs(rhs), 1.0}));
    }
}

TEST_CASE("deconv2d output size and rejection of non-positive sizes") {
    ConvParams<double> p;
    p.weights = TensorD(Shape4{1, 1, 4, 4});
    p.bias = {0.0};
    p.stride = 2;
    p.pad = 1;
    const TensorD x(Shape4{1, 1, 3, 5});
    auto [y, ctx] = deconv2d(x, p);
    CHECK(y.shape == Shape4{1, 1, (3 - 1) * 2 + 4 - 2, (5 - 1) * 2 + 4 - 2});

    ConvParams<double> bad;
    bad.weights = TensorD(Shape4{1, 1, 2, 2});
    bad.bias = {0.0};
    bad.stride = 1;
    bad.pad = 4; // output size would be 1 + 2 - 8 < 0
    CHECK_THROWS_AS((void)deconv2d(TensorD(Shape4{1, 1, 1, 1}), bad), ShapeError);
}

TEST_CASE("deconv2d gradients match central finite differences") {
    for (std::uint64_t seed = 20; seed < 24; ++seed) {
        Rng rng(seed);
        ConvParams<double> p = random_params(rng, 2, 3, 4, 2, 1, /*with_bias=*/false);
        p.bias.assign(static_cast<std::size_t>(p.in_ch()), 0.0);
        for (auto& b : p.bias) b = rng.normal() * 0.1;
        const TensorD x = random_tensor<double>(rng, Shape4{1, 2, 4, 5});
        auto [y, ctx] = deconv2d(x, p);
        const TensorD probe = random_tensor<double>(rng, y.shape);
        const ConvGrads<double> g = deconv2d_grad(ctx, probe);

        CHECK(grad_check([&](const TensorD& xx) { return deconv2d(xx, p).first; }, x, g.input,
                         probe, 1e-5) <= 1e-4);
        CHECK(grad_check(
                  [&](const TensorD& ww) {
                      ConvParams<double> pp = p;
                      pp.weights = ww;
                      return deconv2d(x, pp).first;
                  },
                  p.weights, g.weights, probe, 1e-5) <= 1e-4);
    }
}

TEST_CASE("make_bilinear_kernel: factor 2 profile and factor 1 identity") {
    const TensorD k2 = make_bilinear_kernel<double>(2, 2);
    REQUIRE(k2.shape == Shape4{2, 2, 4, 4});
    const double profile[4] = {0.25, 0.75, 0.75, 0.25};
    for (long c = 0; c < 2; ++c) {
        for (long i = 0; i < 4; ++i) {
            for (long j = 0; j < 4; ++j) {
                CHECK(k2.at(c, c, i, j) ==
                      doctest::Approx(profile[i] * profile[j]).epsilon(1e-15));
                CHECK(k2.at(c, 1 - c, i, j) == 0.0);
            }
        }
    }
    const TensorD k1 = make_bilinear_kernel<double>(1, 1);
    REQUIRE(k1.shape == Shape4{1, 1, 1, 1});
    CHECK(k1.data[0] == 1.0);
}

TEST_CASE("bilinear deconv maps a constant to the same constant away from borders") {
    const double c = 0.37;
    const ConvParams<double> p = bilinear_upsample_params<double>(2, 1);
    const TensorD x(Shape4{1, 1, 5, 6}, std::vector<double>(30, c));
    auto [y, ctx] = deconv2d(x, p);
    REQUIRE(y.shape == Shape4{1, 1, 10, 12});
    for (long i = 2; i < y.shape.h - 2; ++i) {
        for (long j = 2; j < y.shape.w - 2; ++j) {
            CHECK(y.at(0, 0, i, j) == doctest::Approx(c).epsilon(1e-12));
        }
    }
}

TEST_CASE("relu forward and gradient") {
    TensorD x(Shape4{1, 1, 1, 3}, {-1.0, 0.0, 2.0});
    auto [y, ctx] = relu(x);
    CHECK(y.data == std::vector<double>{0.0, 0.0, 2.0});

    // derivative at 0 is defined as 0
    const TensorD dx = relu_grad(ctx, TensorD(x.shape, {1.0, 1.0, 1.0}));
    CHECK(dx.data == std::vector<double>{0.0, 0.0, 1.0});

    Rng rng(5);
    TensorD xp = random_tensor<double>(rng, Shape4{2, 2, 3, 3});
    for (auto& v : xp.data) v = std::abs(v) + 0.5; // all positive
    auto [yp, ctxp] = relu(xp);
    CHECK(bit_equal(yp, xp));

    TensorD xa = random_tensor<double>(rng, Shape4{1, 2, 4, 4});
    for (auto& v : xa.data) {
        if (std::abs(v) < 0.05) v += v < 0 ? -0.1 : 0.1;
    }
    auto [ya, ctxa] = relu(xa);
    const TensorD probe = random_tensor<double>(rng, ya.shape);
    const TensorD g = relu_grad(ctxa, probe);
    CHECK(grad_check([](const TensorD& xx) { return relu(xx).first; }, xa, g, probe, 1e-5) <=
          1e-4);
}

TEST_CASE("maxpool2 forward, ties, gradient routing, and odd-size rejection") {
    TensorD x(Shape4{1, 1, 2, 2}, {1, 2, 3, 4});
    auto [y, ctx] = maxpool2(x);
    REQUIRE(y.shape == Shape4{1, 1, 1, 1});
    CHECK(y.data[0] == 4.0);

    const TensorD constant(Shape4{1, 2, 4, 6}, std::vector<double>(48, 1.5));
    auto [yc, ctxc] = maxpool2(constant);
    CHECK(yc.shape == Shape4{1, 2, 2, 3});
    for (double v : yc.data) CHECK(v == 1.5);
    // ties route to the first element in row-major scan
    const TensorD dyc(yc.shape, std::vector<double>(12, 1.0));
    const TensorD dxc = maxpool2_grad(ctxc, dyc);
    for (long i = 0; i < 4; ++i) {
        for (long j = 0; j < 6; ++j) {
            CHECK(dxc.at(0, 0, i, j) == ((i % 2 == 0 && j % 2 == 0) ? 1.0 : 0.0));
        }
    }

    CHECK_THROWS_AS((void)maxpool2(TensorD(Shape4{1, 1, 3, 4})), ShapeError);

    Rng rng(11);
    TensorD xr(Shape4{1, 2, 6, 6});
    std::vector<double> vals(xr.numel());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = double(i) * 0.01;
    rng.shuffle(vals);
    xr.data = vals;
    auto [yr, ctxr] = maxpool2(xr);
    const TensorD probe = random_tensor<double>(rng, yr.shape);
    const TensorD g = maxpool2_grad(ctxr, probe);
    CHECK(grad_check([](const TensorD& xx) { return maxpool2(xx).first; }, xr, g, probe,
                     1e-5) <= 1e-4);
}

TEST_CASE("concat_channels / split_channels round-trip and layout") {
    Rng rng(9);
    const TensorD a = random_tensor<double>(rng, Shape4{2, 3, 4, 5});
    const TensorD b = random_tensor<double>(rng, Shape4{2, 1, 4, 5});
    const TensorD c = random_tensor<double>(rng, Shape4{2, 2, 4, 5});

    const TensorD joined = concat_channels<double>({a, b, c});
    REQUIRE(joined.shape == Shape4{2, 6, 4, 5});
    const auto parts = split_channels(joined, {3, 1, 2});
    REQUIRE(parts.size() == 3);
    CHECK(bit_equal(parts[0], a));
    CHECK(bit_equal(parts[1], b));
    CHECK(bit_equal(parts[2], c));

    const TensorD solo = concat_channels<double>({a});
    CHECK(bit_equal(solo, a));

    // row-major order of a 1-batch concat is a's plane then b's plane
    const TensorD a1(Shape4{1, 1, 1, 2}, {1.0, 2.0});
    const TensorD b1(Shape4{1, 1, 1, 2}, {3.0, 4.0});
    const TensorD ab = concat_channels<double>({a1, b1});
    CHECK(ab.data == std::vector<double>{1.0, 2.0, 3.0, 4.0});

    CHECK_THROWS_AS((void)concat_channels<double>({a, TensorD(Shape4{2, 1, 3, 5})}), ShapeError);
    CHECK_THROWS_AS((void)split_channels(joined, {3, 4}), ShapeError);
    CHECK_THROWS_AS((void)concat_channels<double>({}), ShapeError);
}

TEST_CASE("sgd_update follows the classical momentum recurrence") {
    TensorD p(Shape4{1, 1, 1, 1}, {1.0});
    TensorD g(Shape4{1, 1, 1, 1}, {1.0});
    TensorD v(Shape4{1, 1, 1, 1}, {0.0});

    sgd_update(p, g, v, 0.1, 0.99, 0.0);
    CHECK(v.data[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p.data[0] == doctest::Approx(0.9).epsilon(1e-15));

    sgd_update(p, g, v, 0.1, 0.99, 0.0);
    CHECK(v.data[0] == doctest::Approx(1.99).epsilon(1e-15));
    CHECK(p.data[0] == doctest::Approx(0.701).epsilon(1e-15));

    TensorD p2(Shape4{1, 1, 1, 1}, {2.0});
    TensorD v2(Shape4{1, 1, 1, 1}, {0.5});
    sgd_update(p2, g, v2, 0.0, 0.9, 0.0);
    CHECK(p2.data[0] == 2.0);
    CHECK(v2.data[0] == doctest::Approx(1.45).epsilon(1e-15));

    TensorD bad(Shape4{1, 1, 1, 1}, {std::numeric_limits<double>::infinity()});
    CHECK_THROWS_AS(sgd_update(p2, bad, v2, 0.1, 0.9, 0.0), ShapeError);
    CHECK_THROWS_AS(sgd_update(p2, g, v2, 0.1, 0.9, std::nan("")), ShapeError);
}

TEST_CASE("grad_check detects a correct linear map and a corrupted gradient") {
    Rng rng(21);
    const TensorD x = random_tensor<double>(rng, Shape4{1, 2, 3, 3});
    TensorD probe = random_tensor<double>(rng, x.shape);
    for (auto& v : probe.data) v = std::abs(v) + 0.5; // keep denominators healthy

    const auto linear = [](const TensorD& xx) {
        TensorD y = xx;
        for (auto& v : y.data) v *= 3.0;
        return y;
    };
    TensorD analytic(x.shape);
    for (std::size_t i = 0; i < analytic.data.size(); ++i) {
        analytic.data[i] = 3.0 * probe.data[i];
    }
    // central differences are exact for linear maps; only fp cancellation remains
    CHECK(grad_check(linear, x, analytic, probe, 1e-3) <= 1e-10);

    TensorD corrupted = analytic;
    for (auto& v : corrupted.data) v *= 1.1;
    CHECK(grad_check(linear, x, corrupted, probe, 1e-3) >= 0.05);
}

TEST_CASE("conv2d and deconv2d with zero bias are linear and deterministic") {
    Rng rng(31);
    const ConvParams<double> p = random_params(rng, 3, 2, 3, 1, 1, /*with_bias=*/false);
    const TensorD x = random_tensor<double>(rng, Shape4{1, 2, 6, 6});
    const double a = 2.75;

    auto [y1, c1] = conv2d(x, p);
    TensorD ax = x;
    for (auto& v : ax.data) v *= a;
    auto [y2, c2] = conv2d(ax, p);
    for (std::size_t i = 0; i < y1.data.size(); ++i) {
        const double want = a * y1.data[i];
        CHECK(std::abs(y2.data[i] - want) <=
              1e-12 * std::max({std::abs(want), std::abs(y2.data[i]), 1.0}));
    }

    auto [r1, d1] = conv2d(x, p);
    auto [r2, d2] = conv2d(x, p);
    CHECK(bit_equal(r1, r2));

    ConvParams<double> dp = random_params(rng, 2, 3, 4, 2, 1, /*with_bias=*/false);
    dp.bias.assign(static_cast<std::size_t>(dp.in_ch()), 0.0);
    const TensorD u = random_tensor<double>(rng, Shape4{1, 2, 4, 4});
    auto [w1, e1] = deconv2d(u, dp);
    auto [w2, e2] = deconv2d(u, dp);
    CHECK(bit_equal(w1, w2));
    CHECK(w1.all_finite());
}
