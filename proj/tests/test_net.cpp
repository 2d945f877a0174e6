#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "gwcosal/net.hpp"
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
std::vector<Tensor<T>> random_group(Rng& rng, const net::NetConfig& cfg) {
    std::vector<Tensor<T>> images;
    for (int i = 0; i < cfg.k; ++i) {
        images.push_back(random_tensor<T>(rng, Shape4{1, 3, cfg.input_h, cfg.input_w}, 0.5));
    }
    return images;
}

} // namespace

TEST_CASE("NetConfig validation enforces the structural invariants") {
    CHECK_NOTHROW(net::NetConfig::desk());
    CHECK_NOTHROW(net::NetConfig::micro());

    net::NetConfig cfg = net::NetConfig::desk();
    cfg.semantic_widths.pop_back();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = net::NetConfig::desk();
    cfg.upsample_factor = 16; // three pools -> must be 8
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = net::NetConfig::desk();
    cfg.input_w = 100; // not divisible by 8
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    cfg = net::NetConfig::desk();
    cfg.single_branch_width = 16; // must equal group width for ablation mode
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("init_params is deterministic and bilinear-initializes the deconv head") {
    const net::NetConfig cfg = net::NetConfig::desk(5, 64, 128);
    const auto a = net::init_params<float>(cfg, 123);
    const auto b = net::init_params<float>(cfg, 123);
    REQUIRE(a.tensor_count() == b.tensor_count());
    for (const auto& [name, entry] : a.entries) {
        CHECK(bit_equal(entry.value, b.entry(name).value));
    }
    const auto c = net::init_params<float>(cfg, 124);
    CHECK_FALSE(bit_equal(a.value("shared/conv01.w"), c.value("shared/conv01.w")));

    CHECK(bit_equal(a.value(net::collab_deconv_name(false)),
                    make_bilinear_kernel<float>(cfg.upsample_factor, 1)));
    for (float v : a.value(net::collab_deconv_name(true)).data) CHECK(v == 0.0f);
    for (float v : a.value("shared/conv05.b").data) CHECK(v == 0.0f);
}

TEST_CASE("init_params draws He-scaled weights (64->64 3x3 layer)") {
    const net::NetConfig cfg = net::NetConfig::desk(5, 64, 128);
    const auto params = net::init_params<float>(cfg, 7);
    const Tensor<float>& w = params.value("shared/conv09.w");
    REQUIRE(w.shape == Shape4{64, 64, 3, 3});
    double mean = 0.0;
    for (float v : w.data) mean += v;
    mean /= double(w.numel());
    double var = 0.0;
    for (float v : w.data) var += (v - mean) * (v - mean);
    var /= double(w.numel() - 1);
    const double want = std::sqrt(2.0 / 576.0);
    CHECK(std::sqrt(var) == doctest::Approx(want).epsilon(0.10));
    CHECK(std::abs(mean) < 0.1 * want);
}

TEST_CASE("param_shapes is independent of K except for the intra input width") {
    const auto s2 = net::param_shapes(net::NetConfig::desk(2, 64, 128));
    const auto s5 = net::param_shapes(net::NetConfig::desk(5, 64, 128));
    REQUIRE(s2.size() == s5.size());
    for (const auto& [name, shape] : s5) {
        if (name == "intra/conv1.w") {
            CHECK(shape.c == 5 * 64);
            CHECK(s2.at(name).c == 2 * 64);
        } else {
            CHECK(s2.at(name) == shape);
        }
    }
    // paper profile: K=5 concatenation of 512-channel features
    const auto sp = net::param_shapes(net::NetConfig::paper(5));
    CHECK(sp.at("intra/conv1.w").c == 2560);
}

TEST_CASE("semantic_forward: determinism and desk feature size 16x32") {
    const net::NetConfig cfg = net::NetConfig::desk(5, 128, 256);
    const auto params = net::init_params<float>(cfg, 9);
    Rng rng(1);
    const auto image = random_tensor<float>(rng, Shape4{1, 3, 128, 256}, 0.5);
    const auto s1 = net::semantic_forward(image, params, cfg);
    const auto s2 = net::semantic_forward(image, params, cfg);
    CHECK(s1.shape == Shape4{1, 64, 16, 32});
    CHECK(bit_equal(s1, s2));
    CHECK(s1.all_finite());

    CHECK_THROWS_AS((void)net::semantic_forward(
                        random_tensor<float>(rng, Shape4{1, 3, 64, 64}), params, cfg),
                    ShapeError);
}

TEST_CASE("semantic_forward: paper profile pools to 8x16") {
    const net::NetConfig cfg = net::NetConfig::paper(5);
    const auto params = net::init_params<float>(cfg, 3);
    Rng rng(2);
    const auto image = random_tensor<float>(rng, Shape4{1, 3, 128, 256}, 0.5);
    const auto s = net::semantic_forward(image, params, cfg);
    CHECK(s.shape == Shape4{1, 512, 8, 16});
}

TEST_CASE("intra_forward: permutation symmetry with position-symmetric weights") {
    const net::NetConfig cfg = net::NetConfig::micro(3, 16, 16);
    auto params = net::init_params<float>(cfg, 5);

    // copy slot 0 of the first intra conv into every slot
    Tensor<float>& w1 = params.value("intra/conv1.w");
    const long cs = cfg.semantic_channels();
    for (long o = 0; o < w1.shape.n; ++o) {
        for (int slot = 1; slot < cfg.k; ++slot) {
            for (long c = 0; c < cs; ++c) {
                for (long u = 0; u < 3; ++u) {
                    for (long v = 0; v < 3; ++v) {
                        w1.at(o, slot * cs + c, u, v) = w1.at(o, c, u, v);
                    }
                }
            }
        }
    }

    Rng rng(6);
    std::vector<Tensor<float>> s;
    for (int i = 0; i < 3; ++i) {
        s.push_back(random_tensor<float>(rng, Shape4{1, cs, 2, 2}, 0.5));
    }
    const auto x_abc = net::intra_forward(s, params, cfg);
    std::vector<Tensor<float>> rotated = {s[2], s[0], s[1]};
    const auto x_cab = net::intra_forward(rotated, params, cfg);
    // mathematically identical; summation order differs across the permuted
    // channel blocks, so compare to float accumulation accuracy
    REQUIRE(x_abc.shape == x_cab.shape);
    for (std::size_t i = 0; i < x_abc.data.size(); ++i) {
        CHECK(x_abc.data[i] == doctest::Approx(x_cab.data[i]).epsilon(1e-5));
    }

    std::vector<Tensor<float>> wrong(s.begin(), s.begin() + 2);
    CHECK_THROWS_AS((void)net::intra_forward(wrong, params, cfg), ShapeError);
}

TEST_CASE("intra_forward: zero input with zero bias gives zero output") {
    const net::NetConfig cfg = net::NetConfig::micro(2, 16, 16);
    const auto params = net::init_params<float>(cfg, 8); // biases init to zero
    std::vector<Tensor<float>> s(2, Tensor<float>(Shape4{1, cfg.semantic_channels(), 2, 2}));
    const auto x = net::intra_forward(s, params, cfg);
    for (float v : x.data) CHECK(v == 0.0f);
}

TEST_CASE("single_forward preserves spatial size and shares weights across positions") {
    const net::NetConfig cfg = net::NetConfig::micro(3, 16, 16);
    const auto params = net::init_params<float>(cfg, 11);
    Rng rng(12);
    const auto s_i = random_tensor<float>(rng, Shape4{1, cfg.semantic_channels(), 2, 2}, 0.5);
    const auto x1 = net::single_forward(s_i, params, cfg);
    const auto x2 = net::single_forward(s_i, params, cfg);
    CHECK(x1.shape == Shape4{1, cfg.single_branch_width, 2, 2});
    CHECK(bit_equal(x1, x2));
}

TEST_CASE("collaborative head: output shape, sharing, and bilinear constant map") {
    const net::NetConfig cfg = net::NetConfig::desk(5, 128, 256);
    const auto params = net::init_params<float>(cfg, 21);
    Rng rng(22);
    const auto x_i =
        random_tensor<float>(rng, Shape4{1, cfg.single_branch_width, 16, 32}, 0.5);
    const auto big_x =
        random_tensor<float>(rng, Shape4{1, cfg.group_branch_width, 16, 32}, 0.5);
    const auto r1 = net::collaborative_forward(x_i, big_x, params, cfg);
    const auto r2 = net::collaborative_forward(x_i, big_x, params, cfg);
    CHECK(r1.shape == Shape4{1, 1, 128, 256});
    CHECK(bit_equal(r1, r2));

    CHECK_THROWS_AS(
        (void)net::collaborative_forward(
            x_i, random_tensor<float>(rng, Shape4{1, cfg.group_branch_width, 8, 16}), params,
            cfg),
        ShapeError);

    // at initialization the deconv is exactly bilinear: constant in, constant
    // interior out
    ConvParams<float> dec;
    dec.weights = params.value(net::collab_deconv_name(false));
    dec.bias = {0.0f};
    dec.stride = cfg.upsample_factor;
    dec.pad = (dec.kh() - cfg.upsample_factor) / 2;
    const float c = 0.42f;
    const Tensor<float> pre(Shape4{1, 1, 16, 32}, std::vector<float>(16 * 32, c));
    auto [up, ctx] = deconv2d(pre, dec);
    REQUIRE(up.shape == Shape4{1, 1, 128, 256});
    const long m = cfg.upsample_factor;
    for (long i = m; i < up.shape.h - m; i += 3) {
        for (long j = m; j < up.shape.w - m; j += 5) {
            CHECK(up.at(0, 0, i, j) == doctest::Approx(c).epsilon(1e-6));
        }
    }
}

TEST_CASE("forward_group: shapes, symmetry, and ablation independence") {
    const net::NetConfig cfg = net::NetConfig::desk(5, 64, 128);
    const auto params = net::init_params<float>(cfg, 31);
    Rng rng(32);

    SUBCASE("five images produce five full-resolution maps") {
        const auto images = random_group<float>(rng, cfg);
        const auto acts = net::forward_group(images, params, cfg);
        REQUIRE(acts.r.size() == 5);
        for (const auto& r : acts.r) {
            CHECK(r.shape == Shape4{1, 1, 64, 128});
            CHECK(r.all_finite());
        }
        const auto acts2 = net::forward_group(images, params, cfg);
        for (std::size_t i = 0; i < acts.r.size(); ++i) {
            CHECK(bit_equal(acts.r[i], acts2.r[i]));
        }
    }

    SUBCASE("identical images give bit-identical maps") {
        const auto one = random_tensor<float>(rng, Shape4{1, 3, 64, 128}, 0.5);
        const std::vector<Tensor<float>> images(5, one);
        const auto acts = net::forward_group(images, params, cfg);
        for (std::size_t i = 1; i < acts.r.size(); ++i) {
            CHECK(bit_equal(acts.r[0], acts.r[i]));
        }
    }

    SUBCASE("wrong group size is rejected") {
        std::vector<Tensor<float>> four;
        for (int i = 0; i < 4; ++i) {
            four.push_back(random_tensor<float>(rng, Shape4{1, 3, 64, 128}, 0.5));
        }
        CHECK_THROWS_AS((void)net::forward_group(four, params, cfg), ShapeError);
    }

    SUBCASE("single-image ablation: R_i depends only on image i") {
        auto images = random_group<float>(rng, cfg);
        const auto base = net::forward_group(images, params, cfg,
                                             net::GroupMode::single_ablation);
        images[3] = random_tensor<float>(rng, Shape4{1, 3, 64, 128}, 0.5);
        const auto changed = net::forward_group(images, params, cfg,
                                                net::GroupMode::single_ablation);
        for (std::size_t i = 0; i < 5; ++i) {
            if (i == 3) {
                CHECK_FALSE(bit_equal(base.r[i], changed.r[i]));
            } else {
                CHECK(bit_equal(base.r[i], changed.r[i]));
            }
        }
    }
}

TEST_CASE("weight sharing: mutating shared/* changes every position") {
    const net::NetConfig cfg = net::NetConfig::micro(3, 16, 16);
    auto params = net::init_params<float>(cfg, 41);
    Rng rng(42);
    const auto images = random_group<float>(rng, cfg);
    const auto before = net::forward_group(images, params, cfg);
    params.value("shared/conv03.w").data[5] += 0.25f;
    const auto after = net::forward_group(images, params, cfg);
    for (int i = 0; i < 3; ++i) {
        CHECK_FALSE(bit_equal(before.r[static_cast<std::size_t>(i)],
                              after.r[static_cast<std::size_t>(i)]));
    }
}

TEST_CASE("backward_group: zero dR gives zero gradients; ablation is inference-only") {
    const net::NetConfig cfg = net::NetConfig::micro(3, 16, 16);
    const auto params = net::init_params<float>(cfg, 51);
    Rng rng(52);
    const auto images = random_group<float>(rng, cfg);
    const auto acts = net::forward_group(images, params, cfg);

    std::vector<Tensor<float>> zero_dr;
    for (const auto& r : acts.r) zero_dr.push_back(Tensor<float>(r.shape));
    const auto grads = net::backward_group(acts, zero_dr, params, cfg);
    REQUIRE(grads.size() == params.tensor_count());
    for (const auto& [name, g] : grads) {
        for (float v : g.data) CHECK(v == 0.0f);
    }

    std::vector<Tensor<float>> bad_dr = zero_dr;
    bad_dr[0] = Tensor<float>(Shape4{1, 1, 8, 8});
    CHECK_THROWS_AS((void)net::backward_group(acts, bad_dr, params, cfg), ShapeError);

    const auto abl = net::forward_group(images, params, cfg, net::GroupMode::single_ablation);
    CHECK_THROWS_AS((void)net::backward_group(abl, zero_dr, params, cfg), ConfigError);
}

TEST_CASE("backward_group: identical positions contribute identical intra slot gradients") {
    const net::NetConfig cfg = net::NetConfig::micro(3, 16, 16);
    const auto params = net::init_params<float>(cfg, 61);
    Rng rng(62);
    const auto one = random_tensor<float>(rng, Shape4{1, 3, 16, 16}, 0.5);
    const std::vector<Tensor<float>> images(3, one);
    const auto acts = net::forward_group(images, params, cfg);

    const auto d = random_tensor<float>(rng, acts.r[0].shape);
    const std::vector<Tensor<float>> d_r(3, d);
    const auto grads = net::backward_group(acts, d_r, params, cfg);

    const Tensor<float>& gw = grads.at("intra/conv1.w");
    const long cs = cfg.semantic_channels();
    for (long o = 0; o < gw.shape.n; ++o) {
        for (int slot = 1; slot < 3; ++slot) {
            for (long c = 0; c < cs; ++c) {
                for (long u = 0; u < 3; ++u) {
                    for (long v = 0; v < 3; ++v) {
                        CHECK(gw.at(o, c, u, v) ==
                              doctest::Approx(gw.at(o, slot * cs + c, u, v)).epsilon(1e-6));
                    }
                }
            }
        }
    }
}
