#include "hyperfuse/error.hpp"
#include "hyperfuse/m3fdfp.hpp"
#include "test_util.hpp"

using namespace hyperfuse;
using hftest::random_tensor;

namespace {

MultiScaleFeatures random_triple(SplitMix64& rng, std::array<std::size_t, 3> c, std::size_t s) {
    return {random_tensor(rng, {c[0], 4 * s, 4 * s}), random_tensor(rng, {c[1], 2 * s, 2 * s}), random_tensor(rng, {c[2], s, s})};
}

MultiScaleFeatures zero_triple(std::array<std::size_t, 3> c, std::size_t s) {
    return {Tensor::zeros({c[0], 4 * s, 4 * s}), Tensor::zeros({c[1], 2 * s, 2 * s}), Tensor::zeros({c[2], s, s})};
}

struct Level {
    Tensor rgb, ir, h_rgb, h_ir, c;
};

Level random_level(SplitMix64& rng, const Shape& shape) {
    return {random_tensor(rng, shape), random_tensor(rng, shape), random_tensor(rng, shape), random_tensor(rng, shape), random_tensor(rng, shape)};
}

}  // namespace

TEST(ModalFuseSE, ZeroInputs) {
    SplitMix64 rng(91);
    auto p = ModalFuseSEParams::create(rng, 8, 4, 2);
    p.fuse.bias = Tensor::zeros({4});
    EXPECT_TRUE(bitwise_equal(modal_fuse_se(Tensor::zeros({4, 3, 3}), Tensor::zeros({4, 3, 3}), p), Tensor::zeros({4, 3, 3})));
}

TEST(ModalFuseSE, DuplicatedConstantsWithAveragingConv) {
    ModalFuseSEParams p{PointwiseConv{Tensor::matrix({{0.5, 0, 0.5, 0}, {0, 0.5, 0, 0.5}}), Tensor::zeros({2})},
                        PointwiseConv{Tensor::matrix({{1, 1}}), Tensor::zeros({1})},
                        PointwiseConv{Tensor::matrix({{1}, {-2}}), Tensor::vector({0, 0.5})}, 2};
    const Tensor f = concat_channels({Tensor::full({1, 2, 2}, 1.0), Tensor::full({1, 2, 2}, -0.5)});
    const Tensor out = modal_fuse_se(f, f, p);
    // omega = sigmoid([s, 0.5 - 2 s]) with s = silu(0.5).
    const double w0 = 0.5771853801446522957, w1 = 0.4694233689823639594;
    for (std::size_t px = 0; px < 4; ++px) {
        EXPECT_NEAR(out[px], w0, 1e-15);
        EXPECT_NEAR(out[4 + px], -0.5 * w1, 1e-15);
    }
}

TEST(ModalFuseSE, SaturatedGate) {
    SplitMix64 rng(92);
    auto p = ModalFuseSEParams::create(rng, 8, 4, 2);
    p.se_expand.bias = Tensor::full({4}, 60.0);
    const Tensor a = random_tensor(rng, {4, 2, 2}), b = random_tensor(rng, {4, 2, 2});
    EXPECT_LE(max_abs_diff(modal_fuse_se(a, b, p), p.fuse.apply(concat_channels({a, b}))), 1e-6);
}

TEST(ModalFuseSE, ShapeMismatch) {
    SplitMix64 rng(93);
    const auto p = ModalFuseSEParams::create(rng, 8, 4, 2);
    EXPECT_THROW(modal_fuse_se(Tensor::zeros({4, 2, 2}), Tensor::zeros({4, 4, 4}), p), Error);
}

TEST(M3fdfpFuse, ZeroScalarsGiveModalOutputExactly) {
    SplitMix64 rng(94);
    const auto p = ModalFuseSEParams::create(rng, 8, 4, 2);
    const auto l = random_level(rng, {4, 2, 2});
    EXPECT_TRUE(bitwise_equal(m3fdfp_fuse(l.rgb, l.ir, l.h_rgb, l.h_ir, l.c, FusionScalars{}, p), modal_fuse_se(l.rgb, l.ir, p)));
}

TEST(M3fdfpFuse, ZeroEnhancedFeaturesForAnyScalars) {
    SplitMix64 rng(95);
    const auto p = ModalFuseSEParams::create(rng, 8, 4, 2);
    const auto l = random_level(rng, {4, 2, 2});
    const Tensor z = Tensor::zeros({4, 2, 2});
    for (int t = 0; t < 20; ++t) {
        const auto s = FusionScalars::make(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        EXPECT_TRUE(bitwise_equal(m3fdfp_fuse(l.rgb, l.ir, z, z, z, s, p), modal_fuse_se(l.rgb, l.ir, p)));
    }
}

TEST(M3fdfpFuse, UnitMapsWithOneTwoThree) {
    SplitMix64 rng(96);
    auto p = ModalFuseSEParams::create(rng, 8, 4, 2);
    p.fuse = PointwiseConv::zeros(8, 4);
    const auto l = random_level(rng, {4, 2, 2});
    const Tensor one = Tensor::full({4, 2, 2}, 1.0);
    EXPECT_TRUE(bitwise_equal(m3fdfp_fuse(l.rgb, l.ir, one, one, one, FusionScalars::make(1, 2, 3), p), Tensor::full({4, 2, 2}, 6.0)));
}

TEST(M3fdfpFuse, LinearInAlpha) {
    SplitMix64 rng(97);
    const auto p = ModalFuseSEParams::create(rng, 8, 4, 2);
    for (int t = 0; t < 50; ++t) {
        const auto l = random_level(rng, {4, 2, 2});
        const double alpha = rng.uniform(-2, 2), beta = rng.uniform(-2, 2), gamma_f = rng.uniform(-2, 2);
        const Tensor base = m3fdfp_fuse(l.rgb, l.ir, l.h_rgb, l.h_ir, l.c, FusionScalars::make(alpha, beta, gamma_f), p);
        const Tensor doubled = m3fdfp_fuse(l.rgb, l.ir, l.h_rgb, l.h_ir, l.c, FusionScalars::make(2 * alpha, beta, gamma_f), p);
        EXPECT_LE(max_abs_diff(sub(doubled, base), scale(l.h_rgb, alpha)), 1e-12);
    }
}

TEST(M3fdfpFuse, ScalarGradientsMatchFiniteDifferences) {
    SplitMix64 rng(98);
    const auto p = ModalFuseSEParams::create(rng, 8, 4, 2);
    const auto l = random_level(rng, {4, 2, 2});
    auto s = FusionScalars::make(0.3, -0.7, 1.2);
    for (Tensor* scalar : s.parameters()) {
        const Tensor saved = *scalar;
        const double err = hftest::grad_error(
            [&](const Tensor& x) {
                *scalar = x;
                return hftest::readout(m3fdfp_fuse(l.rgb, l.ir, l.h_rgb, l.h_ir, l.c, s, p), 12);
            },
            saved);
        *scalar = saved;
        EXPECT_LE(err, 1e-6);
    }
}

TEST(M3fdfpFuse, ShapeMismatch) {
    SplitMix64 rng(99);
    const auto p = ModalFuseSEParams::create(rng, 8, 4, 2);
    const Tensor a = Tensor::zeros({4, 2, 2});
    EXPECT_THROW(m3fdfp_fuse(a, a, a, a, Tensor::zeros({4, 4, 4}), FusionScalars{}, p), Error);
}

TEST(M3fdfpPipeline, ZeroEnhancedTriplesGiveModalMaps) {
    SplitMix64 rng(100);
    auto p = M3fdfpParams::create(rng, {8, 16, 32}, 4);
    for (std::size_t i = 0; i < 3; ++i) p.scalars[i] = FusionScalars::make(1.5, -2, 0.25);
    const auto rgb = random_triple(rng, {8, 16, 32}, 2), ir = random_triple(rng, {8, 16, 32}, 2);
    const auto z = zero_triple({8, 16, 32}, 2);
    const auto out = m3fdfp_pipeline(rgb, ir, z, z, z, p);
    EXPECT_TRUE(bitwise_equal(out.p3, modal_fuse_se(rgb.p3, ir.p3, p.modal[0])));
    EXPECT_TRUE(bitwise_equal(out.p4, modal_fuse_se(rgb.p4, ir.p4, p.modal[1])));
    EXPECT_TRUE(bitwise_equal(out.p5, modal_fuse_se(rgb.p5, ir.p5, p.modal[2])));
}

TEST(M3fdfpPipeline, ShapesAtDefaultScaleAndDeterminism) {
    auto run = [] {
        SplitMix64 rng(7);
        const auto p = M3fdfpParams::create(rng, {8, 16, 32}, 4);
        const auto a = random_triple(rng, {8, 16, 32}, 2), b = random_triple(rng, {8, 16, 32}, 2);
        const auto h = random_triple(rng, {8, 16, 32}, 2), g = random_triple(rng, {8, 16, 32}, 2), c = random_triple(rng, {8, 16, 32}, 2);
        return m3fdfp_pipeline(a, b, h, g, c, p);
    };
    const auto out = run();
    EXPECT_EQ(out.p3.shape(), (Shape{8, 8, 8}));
    EXPECT_EQ(out.p4.shape(), (Shape{16, 4, 4}));
    EXPECT_EQ(out.p5.shape(), (Shape{32, 2, 2}));
    EXPECT_TRUE(bitwise_equal(out, run()));
}

TEST(M3fdfpPipeline, ScalesAreIndependent) {
    SplitMix64 rng(101);
    auto p = M3fdfpParams::create(rng, {4, 4, 4}, 2);
    for (std::size_t i = 0; i < 3; ++i) p.scalars[i] = FusionScalars::make(0.5, 0.25, -1);
    const auto rgb = random_triple(rng, {4, 4, 4}, 1), ir = random_triple(rng, {4, 4, 4}, 1);
    const auto h = random_triple(rng, {4, 4, 4}, 1), g = random_triple(rng, {4, 4, 4}, 1), c = random_triple(rng, {4, 4, 4}, 1);
    const auto base = m3fdfp_pipeline(rgb, ir, h, g, c, p);
    auto perturb = [&](const MultiScaleFeatures& f) {
        return MultiScaleFeatures{add(f.p3, random_tensor(rng, f.p3.shape())), f.p4, f.p5};
    };
    const auto moved = m3fdfp_pipeline(perturb(rgb), perturb(ir), perturb(h), perturb(g), perturb(c), p);
    EXPECT_GT(max_abs_diff(moved.p3, base.p3), 0.0);
    EXPECT_TRUE(bitwise_equal(moved.p4, base.p4));
    EXPECT_TRUE(bitwise_equal(moved.p5, base.p5));
}
