#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "locrank/errors.hpp"
#include "locrank/gradcheck.hpp"
#include "locrank/ops.hpp"
#include "locrank/stn.hpp"
#include "test_util.hpp"

using namespace locrank;
using testutil::smooth_image;

TEST_CASE("identity grid spans the full image") {
    const SamplingGrid g = generate_grid(Theta{1, 0, 0}, 5, 33, 33);
    CHECK(g.coords.at(0, 0, 0) == doctest::Approx(-1.0));
    CHECK(g.coords.at(0, 0, 4) == doctest::Approx(1.0));
    CHECK(g.coords.at(1, 4, 0) == doctest::Approx(1.0));
    CHECK(g.coords.at(0, 2, 2) == doctest::Approx(0.0));
}

TEST_CASE("half-scale grid covers the central half extent") {
    const SamplingGrid g = generate_grid(Theta{0.5, 0, 0}, 4, 65, 65);
    for (int i = 0; i < g.coords.numel(); ++i) {
        CHECK(g.coords.at(i) >= -0.5 - 1e-12);
        CHECK(g.coords.at(i) <= 0.5 + 1e-12);
    }
    CHECK(g.coords.at(0, 0, 0) == doctest::Approx(-0.5));
    CHECK(g.coords.at(0, 0, 3) == doctest::Approx(0.5));
}

TEST_CASE("warp and pixel mapping: s=0.5, tx=1 on a 65x65 image") {
    // patch center at normalized (0.5, 0) -> pixel (48, 32)
    auto [cx, cy] = patch_center_px(Theta{0.5, 1.0, 0.0}, 65, 65);
    CHECK(cx == doctest::Approx(48.0).epsilon(1e-12));
    CHECK(cy == doctest::Approx(32.0).epsilon(1e-12));

    const SamplingGrid g = generate_grid(Theta{0.5, 1.0, 0.0}, 3, 65, 65);
    CHECK(g.coords.at(0, 1, 1) == doctest::Approx(0.5));
    CHECK(g.coords.at(1, 1, 1) == doctest::Approx(0.0));
}

TEST_CASE("patch_center_px examples") {
    auto [cx0, cy0] = patch_center_px(Theta{0.7, 0, 0}, 65, 65);
    CHECK(cx0 == doctest::Approx(32.0));
    CHECK(cy0 == doctest::Approx(32.0));

    auto [cx1, cy1] = patch_center_px(Theta{1.0, 3.0, 0.0}, 65, 65);
    CHECK(cx1 == doctest::Approx(128.0));
    CHECK(!center_in_bounds(cx1, cy1, 65, 65));
    CHECK(center_in_bounds(cx0, cy0, 65, 65));
}

TEST_CASE("bilinear sampling: identity grid reproduces the input") {
    const Tensor img = smooth_image(2, 7, 7);
    const SamplingGrid g = generate_grid(Theta{1, 0, 0}, 7, 7, 7);
    const Tensor out = bilinear_sample(img, g);
    for (int i = 0; i < img.numel(); ++i) CHECK(out.at(i) == doctest::Approx(img.at(i)).epsilon(1e-14));
}

TEST_CASE("bilinear sampling: constant image stays constant in bounds") {
    const Tensor img = Tensor::full({1, 9, 9}, 0.37);
    const SamplingGrid g = generate_grid(Theta{0.4, 0.2, -0.1}, 5, 9, 9);
    const Tensor out = bilinear_sample(img, g);
    for (int i = 0; i < out.numel(); ++i) CHECK(out.at(i) == doctest::Approx(0.37).epsilon(1e-14));
}

TEST_CASE("bilinear sampling: hand value at pixel (0.5, 0.5) of a 2x2 image") {
    const Tensor img = Tensor::from({1, 2, 2}, {0, 1, 2, 3});
    SamplingGrid g;
    g.patch_size = 2;
    g.image_w = 2;
    g.image_h = 2;
    // normalized (0,0) maps to pixel (0.5, 0.5) when W=H=2
    g.coords = Tensor({2, 2, 2});
    const Tensor out = bilinear_sample(img, g);
    for (int i = 0; i < 4; ++i) CHECK(out.at(i) == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("bilinear sampling: fully out-of-bounds reads zero") {
    const Tensor img = Tensor::full({1, 5, 5}, 0.9);
    const SamplingGrid g = generate_grid(Theta{0.5, 10.0, 10.0}, 3, 5, 5);
    const Tensor out = bilinear_sample(img, g);
    for (int i = 0; i < out.numel(); ++i) CHECK(out.at(i) == 0.0);
}

TEST_CASE("bilinear sampling rejects a grid made for another image size") {
    const Tensor img = Tensor({1, 6, 6});
    const SamplingGrid g = generate_grid(Theta{1, 0, 0}, 4, 5, 5);
    CHECK_THROWS_AS(bilinear_sample(img, g), ConfigError);
}

TEST_CASE("round-trip: s=1, t=0, P=W=H is exact") {
    const Tensor img = smooth_image(1, 11, 11, 0.4);
    const Tensor out = bilinear_sample(img, generate_grid(Theta{1, 0, 0}, 11, 11, 11));
    for (int i = 0; i < img.numel(); ++i) CHECK(out.at(i) == img.at(i));
}

TEST_CASE("theta gradients match finite differences on smooth images") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed * 31 + 7);
        const Tensor img = smooth_image(1, 9, 9, 0.1 * static_cast<double>(seed));
        Tensor theta({3});
        // keep coordinates away from exact integer pixels
        theta.at(0) = 0.37 + 0.2 * rng.uniform();
        theta.at(1) = -0.21 + 0.3 * rng.uniform();
        theta.at(2) = 0.13 + 0.3 * rng.uniform();
        const double err = grad_check(theta, [&](Graph& g, const Tensor& p) {
            Value th = g.leaf(p, true);
            Value s = ops::pick(g, th, 0);
            Value tx = ops::pick(g, th, 1);
            Value ty = ops::pick(g, th, 2);
            GridNode grid = generate_grid_node(g, s, tx, ty, 5, 9, 9);
            Value patch = bilinear_sample_node(g, g.leaf(img, true), grid);
            return GradProbe{ops::sum(g, ops::mul(g, patch, patch)), th};
        }, 1e-5);
        CHECK(err <= 1e-4);
    }
}

TEST_CASE("image gradients of the sampler match finite differences") {
    Rng rng(99);
    const Tensor img = smooth_image(1, 7, 7, 0.9);
    const double err = grad_check(img, [&](Graph& g, const Tensor& p) {
        Value image = g.leaf(p, true);
        Value s = g.leaf(Tensor::scalar(0.63), false);
        Value tx = g.leaf(Tensor::scalar(0.17), false);
        Value ty = g.leaf(Tensor::scalar(-0.29), false);
        GridNode grid = generate_grid_node(g, s, tx, ty, 4, 7, 7);
        Value patch = bilinear_sample_node(g, image, grid);
        return GradProbe{ops::sum(g, ops::mul(g, patch, patch)), image};
    }, 1e-5);
    CHECK(err <= 1e-4);
}

TEST_CASE("monotone shrink: smaller s stays inside the larger grid's hull") {
    const SamplingGrid big = generate_grid(Theta{0.8, 0, 0}, 6, 33, 33);
    const SamplingGrid small = generate_grid(Theta{0.3, 0, 0}, 6, 33, 33);
    double big_max = 0, small_max = 0;
    for (int i = 0; i < big.coords.numel(); ++i) {
        big_max = std::max(big_max, std::abs(big.coords.at(i)));
        small_max = std::max(small_max, std::abs(small.coords.at(i)));
    }
    CHECK(small_max < big_max);
    CHECK(small_max <= 0.3 + 1e-12);
    CHECK(big_max <= 0.8 + 1e-12);
}

TEST_CASE("translation equivariance at s=1") {
    const double delta = 0.173;
    const SamplingGrid a = generate_grid(Theta{1, 0.2, -0.1}, 5, 17, 17);
    const SamplingGrid b = generate_grid(Theta{1, 0.2 + delta, -0.1}, 5, 17, 17);
    for (int gy = 0; gy < 5; ++gy)
        for (int gx = 0; gx < 5; ++gx) {
            CHECK(b.coords.at(0, gy, gx) - a.coords.at(0, gy, gx) ==
                  doctest::Approx(delta).epsilon(1e-12));
            CHECK(b.coords.at(1, gy, gx) == a.coords.at(1, gy, gx));
        }
}

TEST_CASE("patch box matches the warped grid bounds") {
    const Theta t{0.5, 0.3, -0.2};
    const SamplingGrid g = generate_grid(t, 8, 65, 65);
    double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
    for (int gy = 0; gy < 8; ++gy)
        for (int gx = 0; gx < 8; ++gx) {
            const double px = (g.coords.at(0, gy, gx) + 1) / 2 * 64;
            const double py = (g.coords.at(1, gy, gx) + 1) / 2 * 64;
            xmin = std::min(xmin, px);
            xmax = std::max(xmax, px);
            ymin = std::min(ymin, py);
            ymax = std::max(ymax, py);
        }
    const PatchBox box = patch_box_px(t, 65, 65);
    CHECK(box.x0 == doctest::Approx(xmin).epsilon(1e-12));
    CHECK(box.x1 == doctest::Approx(xmax).epsilon(1e-12));
    CHECK(box.y0 == doctest::Approx(ymin).epsilon(1e-12));
    CHECK(box.y1 == doctest::Approx(ymax).epsilon(1e-12));
}

TEST_CASE("grid preconditions") {
    CHECK_THROWS_AS(generate_grid(Theta{1, 0, 0}, 1, 8, 8), ConfigError);
    CHECK_THROWS_AS(generate_grid(Theta{1, 0, 0}, 4, 1, 8), ConfigError);
}
