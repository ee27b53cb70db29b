// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "tspred/conv.hpp"
#include "tspred/nn_ops.hpp"

using namespace tspred;

TEST_CASE("tensor buffer length must match dims") {
    CHECK_NOTHROW(Tensor32({2, 3}, std::vector<float>(6, 0.f)));
    CHECK_THROWS_AS(Tensor32({2, 3}, std::vector<float>(5, 0.f)), ShapeError);
}

TEST_CASE("validity scan flags non-finite values") {
    Tensor32 t({4});
    CHECK(t.all_finite());
    t[2] = std::numeric_limits<float>::infinity();
    CHECK_FALSE(t.all_finite());
    t[2] = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("same-padding geometry follows the halving rule") {
    ConvSpec s2;
    s2.kh = s2.kw = 4;
    s2.stride = 2;
    auto g = conv_geometry(64, 64, s2);
    CHECK(g.oh == 32);
    CHECK(g.pt == 1);
    CHECK(g.pl == 1);

    ConvSpec s1;
    s1.kh = s1.kw = 4;
    s1.stride = 1;
    g = conv_geometry(8, 8, s1);
    CHECK(g.oh == 8);
    CHECK(g.pt == 1);  // bottom pad is 2 by the output-size arithmetic

    ConvSpec s3;
    s3.kh = s3.kw = 3;
    g = conv_geometry(4, 4, s3);
    CHECK(g.oh == 4);
    CHECK(g.pt == 1);

    ConvSpec s11;
    s11.kh = s11.kw = 1;
    g = conv_geometry(4, 4, s11);
    CHECK(g.pt == 0);
}

TEST_CASE("all-ones 3x3 valid convolution gives the full-overlap response") {
    Tensor64 x = Tensor64::full({1, 1, 3, 3}, 1.0);
    Tensor64 k = Tensor64::full({1, 1, 3, 3}, 1.0);
    Tensor64 b({1});
    ConvSpec spec;
    spec.kh = spec.kw = 3;
    spec.stride = 1;
    spec.padding = PadMode::Valid;
    auto y = conv2d_forward(x, k, b, spec);
    CHECK(y.numel() == 1);
    CHECK(y[0] == doctest::Approx(9.0));

    // Same-padded output is 3x3, with the full overlap at the center.
    spec.padding = PadMode::Same;
    auto ys = conv2d_forward(x, k, b, spec);
    CHECK(ys.dims() == Dims{1, 1, 3, 3});
    CHECK(ys.at4(0, 0, 1, 1) == doctest::Approx(9.0));
}

TEST_CASE("stride-2 2x2 kernel matches the nested-loop oracle") {
    RngStream rng(11);
    auto x = Tensor64::uniform({1, 2, 4, 4}, -1, 1, rng);
    auto k = Tensor64::uniform({3, 2, 2, 2}, -1, 1, rng);
    auto b = Tensor64::uniform({3}, -1, 1, rng);
    ConvSpec spec;
    spec.kh = spec.kw = 2;
    spec.stride = 2;
    auto g = conv_geometry(4, 4, spec);
    auto y = conv2d_forward(x, k, b, spec);
    auto yo = oracle::conv2d(x, k, b, 2, g.pt, g.pl, g.oh, g.ow);
    CHECK(oracle::max_abs_diff(y, yo) < 1e-10);
}

TEST_CASE("encoder-first-layer extents") {
    RngStream rng(5);
    auto x = Tensor32::uniform({1, 1, 64, 64}, 0, 1, rng);
    auto k = Tensor32::uniform({64, 1, 4, 4}, -0.1f, 0.1f, rng);
    Tensor32 b({64});
    ConvSpec spec;
    spec.kh = spec.kw = 4;
    spec.stride = 2;
    spec.filters = 64;
    auto y = conv2d_forward(x, k, b, spec);
    CHECK(y.dims() == Dims{1, 64, 32, 32});
}

TEST_CASE("conv2d and conv2d_transposed match oracles on random cases") {
    RngStream rng(2024);
    double worst = 0;
    int cases = 0;
    while (cases < 300) {
        const std::int64_t N = 1 + rng.next_below(2);
        const std::int64_t C = 1 + rng.next_below(3);
        const std::int64_t F = 1 + rng.next_below(3);
        const int ks = static_cast<int>(1 + rng.next_below(4));
        const int st = static_cast<int>(1 + rng.next_below(2));
        ConvSpec spec;
        spec.kh = spec.kw = ks;
        spec.stride = st;
        spec.padding = rng.next_below(2) ? PadMode::Same : PadMode::Valid;
        // keep the geometry exactly invertible so the adjoint is H x H
        std::int64_t H = static_cast<std::int64_t>(ks + rng.next_below(6));
        if (spec.padding == PadMode::Same) {
            if (H % st) ++H;
        } else {
            while ((H - ks) % st) ++H;
        }
        ConvGeom g;
        try {
            g = conv_geometry(H, H, spec);
        } catch (const ShapeError&) {
            continue;
        }
        auto x = Tensor64::uniform({N, C, H, H}, -1, 1, rng);
        auto k = Tensor64::uniform({F, C, ks, ks}, -1, 1, rng);
        auto b = Tensor64::uniform({F}, -1, 1, rng);
        auto y = conv2d_forward(x, k, b, spec);
        auto yo = oracle::conv2d(x, k, b, st, g.pt, g.pl, g.oh, g.ow);
        worst = std::max(worst, oracle::max_abs_diff(y, yo));

        // transposed: input has F channels, output C channels
        auto xt = Tensor64::uniform({N, F, g.oh, g.ow}, -1, 1, rng);
        auto bc = Tensor64::uniform({C}, -1, 1, rng);
        ConvSpec tspec = spec;
        tspec.filters = 0;
        auto yt = conv2d_transposed_forward(xt, k, bc, tspec);
        auto yto = oracle::conv2d_transposed(xt, k, bc, st, g.pt, g.pl, H, H);
        worst = std::max(worst, oracle::max_abs_diff(yt, yto));

        // adjoint identity (bias aside)
        auto zb_f = Tensor64::zeros({F});
        auto zb_c = Tensor64::zeros({C});
        auto lhs = oracle::dot(conv2d_forward(x, k, zb_f, spec), xt);
        auto rhs = oracle::dot(x, conv2d_transposed_forward(xt, k, zb_c, tspec));
        worst = std::max(worst, std::fabs(lhs - rhs));
        ++cases;
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("adjoint identity holds for every preset layer geometry") {
    struct Geom {
        int k, stride;
        std::int64_t size, cin, cout;
    };
    // encoder/decoder stride-2 stages, the stride-1 latent and output
    // stages, the 3x3 recurrent kernels and the 1x1 weight maps
    const Geom geoms[] = {
        {4, 2, 64, 1, 64}, {4, 2, 32, 64, 64}, {4, 2, 16, 64, 96}, {4, 2, 8, 96, 96},
        {4, 1, 4, 96, 128}, {4, 1, 64, 64, 1}, {3, 1, 4, 128, 64}, {1, 1, 4, 64, 1},
    };
    RngStream rng(77);
    for (const auto& g : geoms) {
        ConvSpec spec;
        spec.kh = spec.kw = g.k;
        spec.stride = g.stride;
        auto geo = conv_geometry(g.size, g.size, spec);
        auto x = Tensor64::uniform({1, g.cin, g.size, g.size}, -1, 1, rng);
        auto k = Tensor64::uniform({g.cout, g.cin, g.k, g.k}, -1, 1, rng);
        auto y = Tensor64::uniform({1, g.cout, geo.oh, geo.ow}, -1, 1, rng);
        const double lhs = oracle::dot(conv2d_forward(x, k, Tensor64::zeros({g.cout}), spec), y);
        ConvSpec tspec = spec;
        tspec.filters = 0;
        const double rhs =
            oracle::dot(x, conv2d_transposed_forward(y, k, Tensor64::zeros({g.cin}), tspec));
        CHECK(std::fabs(lhs - rhs) < 1e-10 * std::max(1.0, std::fabs(lhs)));
    }
}

TEST_CASE("transposed stride-1 1x1 identity kernel reproduces the input") {
    RngStream rng(7);
    auto x = Tensor64::uniform({2, 1, 5, 5}, -1, 1, rng);
    Tensor64 k = Tensor64::full({1, 1, 1, 1}, 1.0);
    Tensor64 b({1});
    ConvSpec spec;
    spec.kh = spec.kw = 1;
    spec.stride = 1;
    auto y = conv2d_transposed_forward(x, k, b, spec);
    CHECK(oracle::max_abs_diff(x, y) == 0.0);
}

TEST_CASE("decoder-first-layer transposed extents") {
    RngStream rng(9);
    auto x = Tensor32::uniform({1, 128, 4, 4}, -1, 1, rng);
    auto k = Tensor32::uniform({128, 96, 4, 4}, -0.1f, 0.1f, rng);
    Tensor32 b({96});
    ConvSpec spec;
    spec.kh = spec.kw = 4;
    spec.stride = 2;
    spec.filters = 96;
    auto y = conv2d_transposed_forward(x, k, b, spec);
    CHECK(y.dims() == Dims{1, 96, 8, 8});
}

TEST_CASE("conv rejects bad inputs") {
    RngStream rng(1);
    auto x = Tensor32::uniform({1, 2, 4, 4}, -1, 1, rng);
    auto k = Tensor32::uniform({3, 5, 2, 2}, -1, 1, rng);  // channel mismatch
    Tensor32 b({3});
    ConvSpec spec;
    spec.kh = spec.kw = 2;
    spec.stride = 2;
    CHECK_THROWS_AS(conv2d_forward(x, k, b, spec), ShapeError);
    Tensor32 empty({0, 2, 4, 4});
    auto k2 = Tensor32::uniform({3, 2, 2, 2}, -1, 1, rng);
    CHECK_THROWS_AS(conv2d_forward(empty, k2, b, spec), std::domain_error);
}

TEST_CASE("convolution is bitwise deterministic across thread counts") {
    RngStream rng(3);
    auto x = Tensor32::uniform({4, 3, 16, 16}, -1, 1, rng);
    auto k = Tensor32::uniform({8, 3, 4, 4}, -1, 1, rng);
    auto b = Tensor32::uniform({8}, -1, 1, rng);
    ConvSpec spec;
    spec.kh = spec.kw = 4;
    spec.stride = 2;
    set_thread_count(1);
    auto y1 = conv2d_forward(x, k, b, spec);
    set_thread_count(2);
    auto y2 = conv2d_forward(x, k, b, spec);
    auto y3 = conv2d_forward(x, k, b, spec);
    set_thread_count(1);
    for (std::int64_t i = 0; i < y1.numel(); ++i) {
        CHECK(y1[i] == y2[i]);
        CHECK(y2[i] == y3[i]);
    }
}

TEST_CASE("batch norm: constant input collapses to beta") {
    Tensor32 x = Tensor32::full({2, 3, 4, 4}, 5.0f);
    Tensor32 gamma = Tensor32::full({3}, 1.0f);
    Tensor32 beta = Tensor32::full({3}, 0.7f);
    BnState<float> st(3);
    auto y = batch_norm_forward(x, gamma, beta, &st, true, (BnCache<float>*)nullptr);
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(0.7f));
}

TEST_CASE("batch norm: train-mode output is standardized per channel") {
    RngStream rng(17);
    // Wide inputs keep the epsilon term negligible against the variance.
    auto x = Tensor64::uniform({4, 3, 8, 8}, -6, 6, rng);
    Tensor64 gamma = Tensor64::full({3}, 1.0);
    Tensor64 beta({3});
    BnState<double> st(3);
    auto y = batch_norm_forward(x, gamma, beta, &st, true, (BnCache<double>*)nullptr);
    const std::int64_t M = 4 * 8 * 8;
    for (std::int64_t c = 0; c < 3; ++c) {
        double mean = 0, var = 0;
        for (std::int64_t n = 0; n < 4; ++n)
            for (std::int64_t i = 0; i < 64; ++i) mean += y.at4(n, c, i / 8, i % 8);
        mean /= M;
        for (std::int64_t n = 0; n < 4; ++n)
            for (std::int64_t i = 0; i < 64; ++i) {
                const double d = y.at4(n, c, i / 8, i % 8) - mean;
                var += d * d;
            }
        var /= M;
        CHECK(std::fabs(mean) < 1e-6);
        CHECK(std::fabs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("batch norm is the identity at its fixed point") {
    // Input standardized to variance 1-eps is exactly what the normalizer
    // reproduces.
    RngStream rng(23);
    Tensor64 x({1, 1, 4, 4});
    for (std::int64_t i = 0; i < 16; ++i) x[i] = (i % 2 == 0 ? 1.0 : -1.0);
    double mean = 0;
    for (std::int64_t i = 0; i < 16; ++i) mean += x[i];
    mean /= 16;
    double var = 0;
    for (std::int64_t i = 0; i < 16; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= 16;
    const double scale = std::sqrt((1.0 - kBnEpsilon) / var);
    for (std::int64_t i = 0; i < 16; ++i) x[i] = (x[i] - mean) * scale;
    Tensor64 gamma = Tensor64::full({1}, 1.0);
    Tensor64 beta({1});
    BnState<double> st(1);
    auto y = batch_norm_forward(x, gamma, beta, &st, true, (BnCache<double>*)nullptr);
    CHECK(oracle::max_abs_diff(x, y) < 1e-4);
}

TEST_CASE("batch norm preconditions") {
    Tensor32 x({1, 2, 1, 1});  // batch*spatial == 1
    Tensor32 gamma = Tensor32::full({2}, 1.0f);
    Tensor32 beta({2});
    BnState<float> st(2);
    CHECK_THROWS_AS(batch_norm_forward(x, gamma, beta, &st, true, (BnCache<float>*)nullptr),
                    std::domain_error);
    // eval mode with the same extents is fine
    CHECK_NOTHROW(batch_norm_forward(x, gamma, beta, &st, false, (BnCache<float>*)nullptr));
}

TEST_CASE("activation fixed points and slope") {
    Tensor64 x({3});
    x[0] = 0.0;
    x[1] = 0.0;
    x[2] = -1.0;
    CHECK(activation_forward(x, Act::Sigmoid)[0] == doctest::Approx(0.5));
    CHECK(activation_forward(x, Act::Tanh)[1] == doctest::Approx(0.0));
    CHECK(activation_forward(x, Act::LeakyRelu)[2] == doctest::Approx(-0.2));
}

TEST_CASE("activations stay in their declared ranges") {
    RngStream rng(29);
    auto x = Tensor32::uniform({4096}, -12, 12, rng);
    auto s = activation_forward(x, Act::Sigmoid);
    auto t = activation_forward(x, Act::Tanh);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        CHECK(s[i] > 0.0f);
        CHECK(s[i] < 1.0f);
        CHECK(t[i] >= -1.0f);
        CHECK(t[i] <= 1.0f);
    }
    CHECK(s.all_finite());
    CHECK(t.all_finite());
}

TEST_CASE("dropout modes") {
    RngStream rng(31);
    auto x = Tensor32::uniform({1000}, 1, 2, rng);
    RngStream drop(7);
    auto eval = dropout_forward(x, 0.5, false, drop, (Tensor32*)nullptr);
    CHECK(oracle::max_abs_diff(x, eval) == 0.0);
    auto zero = dropout_forward(x, 0.0, true, drop, (Tensor32*)nullptr);
    CHECK(oracle::max_abs_diff(x, zero) == 0.0);
    CHECK_THROWS_AS(dropout_forward(x, 1.0, true, drop, (Tensor32*)nullptr), std::domain_error);
}

TEST_CASE("dropout keeps the survivor fraction and mean") {
    const std::int64_t n = 1000000;
    Tensor32 x = Tensor32::full({n}, 1.0f);
    RngStream drop(123);
    auto y = dropout_forward(x, 0.5, true, drop, (Tensor32*)nullptr);
    std::int64_t survivors = 0;
    double mean = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (y[i] != 0.0f) ++survivors;
        mean += y[i];
    }
    mean /= static_cast<double>(n);
    CHECK(std::fabs(static_cast<double>(survivors) / n - 0.5) < 0.002);
    CHECK(std::fabs(mean - 1.0) < 0.01);
}

TEST_CASE("channel concat and split are exact inverses") {
    RngStream rng(37);
    auto a = Tensor32::uniform({2, 64, 4, 4}, -1, 1, rng);
    auto b = Tensor32::uniform({2, 64, 4, 4}, -1, 1, rng);
    auto cat = concat_channels_forward(a, b);
    CHECK(cat.dims() == Dims{2, 128, 4, 4});
    auto [a2, b2] = split_channels_forward(cat, 64);
    CHECK(oracle::max_abs_diff(a, a2) == 0.0);
    CHECK(oracle::max_abs_diff(b, b2) == 0.0);
}

TEST_CASE("concat with a zero-channel tensor is the identity") {
    RngStream rng(41);
    auto a = Tensor32::uniform({2, 3, 4, 4}, -1, 1, rng);
    Tensor32 empty({2, 0, 4, 4});
    auto cat = concat_channels_forward(a, empty);
    CHECK(oracle::max_abs_diff(a, cat) == 0.0);
}

TEST_CASE("concat rejects spatial mismatch") {
    Tensor32 a({1, 2, 4, 4}), b({1, 2, 5, 4});
    CHECK_THROWS_AS(concat_channels_forward(a, b), ShapeError);
}
