#include "hyperfuse/error.hpp"
#include "hyperfuse/intra.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace hyperfuse;
using hftest::random_tensor;

namespace {

MultiScaleFeatures random_features(SplitMix64& rng, std::array<std::size_t, 3> channels, std::size_t p5_extent) {
    const std::size_t s = p5_extent;
    return {random_tensor(rng, {channels[0], 4 * s, 4 * s}), random_tensor(rng, {channels[1], 2 * s, 2 * s}),
            random_tensor(rng, {channels[2], s, s})};
}

IntraEnhanceParams::Dims toy_dims() {
    IntraEnhanceParams::Dims dims;
    dims.level_channels = {4, 4, 4};
    dims.channels = 4;
    dims.edges = 4;
    dims.rank = 2;
    dims.heads = 2;
    dims.sparsity = SparsityConfig{0.5, RoutingMode::Node};
    dims.se_ratio = 2;
    return dims;
}

void zero_biases(IntraEnhanceParams& p) {
    p.fuse.fuse.bias = Tensor::zeros(p.fuse.fuse.bias.shape());
    p.dsc3k.depthwise_bias = Tensor::zeros(p.dsc3k.depthwise_bias.shape());
    p.dsc3k.pointwise.bias = Tensor::zeros(p.dsc3k.pointwise.bias.shape());
    for (auto& conv : p.out_convs) conv.bias = Tensor::zeros(conv.bias.shape());
}

Tensor readout(const MultiScaleFeatures& f) {
    return add(add(hftest::readout(f.p3, 3), hftest::readout(f.p4, 4)), hftest::readout(f.p5, 5));
}

void expect_omega_in_unit_interval(const Tensor& omega) {
    for (std::size_t k = 0; k < omega.numel(); ++k) {
        EXPECT_GT(omega[k], 0.0);
        EXPECT_LT(omega[k], 1.0);
    }
}

}  // namespace

TEST(FuseSE, ZeroInputGivesZeroOutput) {
    SplitMix64 rng(51);
    auto p = FuseSEParams::create(rng, 12, 4, 2);
    p.fuse.bias = Tensor::zeros({4});
    const MultiScaleFeatures zero{Tensor::zeros({4, 8, 8}), Tensor::zeros({4, 4, 4}), Tensor::zeros({4, 2, 2})};
    Tensor omega;
    const Tensor out = fuse_se(zero, p, &omega);
    EXPECT_EQ(out.shape(), (Shape{4, 4, 4}));
    EXPECT_TRUE(bitwise_equal(out, Tensor::zeros({4, 4, 4})));
    for (std::size_t k = 0; k < omega.numel(); ++k) EXPECT_TRUE(std::isfinite(omega[k]));
}

TEST(FuseSE, SaturatedGateReturnsFusedMap) {
    SplitMix64 rng(52);
    auto p = FuseSEParams::create(rng, 12, 4, 2);
    p.se_expand.bias = Tensor::full({4}, 60.0);
    const auto f = random_features(rng, {4, 4, 4}, 2);
    const Tensor fused = p.fuse.apply(concat_channels({stride_down2(f.p3), f.p4, nearest_up2(f.p5)}));
    EXPECT_LE(max_abs_diff(fuse_se(f, p), fused), 1e-6);
}

TEST(FuseSE, ConstantMapsWithIdentityFusion) {
    // One channel per level, identity fusion conv, reduce = channel mean, expand = [1, 2, -1].
    FuseSEParams p{PointwiseConv{Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}), Tensor::zeros({3})},
                   PointwiseConv{Tensor::matrix({{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}}), Tensor::zeros({1})},
                   PointwiseConv{Tensor::matrix({{1}, {2}, {-1}}), Tensor::zeros({3})}, 3};
    const MultiScaleFeatures f{Tensor::full({1, 8, 8}, 1.0), Tensor::full({1, 4, 4}, 2.0), Tensor::full({1, 2, 2}, 3.0)};
    Tensor omega;
    const Tensor out = fuse_se(f, p, &omega);
    // silu(2) = 1.76159..., omega = sigmoid([1, 2, -1] * silu(2)).
    const double w[3] = {0.8534092045709027727, 0.9713403945491743130, 0.1465907954290972273};
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_NEAR(omega[k], w[k], 1e-15);
        for (std::size_t px = 0; px < 16; ++px) EXPECT_NEAR(out[k * 16 + px], (k + 1.0) * w[k], 1e-14);
    }
}

TEST(FuseSE, BrokenStrideChain) {
    SplitMix64 rng(53);
    const auto p = FuseSEParams::create(rng, 12, 4, 2);
    const MultiScaleFeatures bad{Tensor::zeros({4, 8, 8}), Tensor::zeros({4, 4, 4}), Tensor::zeros({4, 4, 4})};
    EXPECT_THROW(fuse_se(bad, p), Error);
    try {
        fuse_se(bad, p);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
    }
}

TEST(FuseSE, OmegaStaysInsideUnitInterval) {
    SplitMix64 rng(54);
    for (int t = 0; t < 50; ++t) {
        const auto p = FuseSEParams::create(rng, 12, 4, 2);
        Tensor omega;
        fuse_se(random_features(rng, {4, 4, 4}, 1 + rng.below(2)), p, &omega);
        EXPECT_EQ(omega.numel(), 4u);
        expect_omega_in_unit_interval(omega);
    }
}

TEST(LrC3ah, ZeroInput) {
    SplitMix64 rng(55);
    const auto p = IntraEnhanceParams::create(rng, toy_dims());
    EXPECT_TRUE(bitwise_equal(lr_c3ah(Tensor::zeros({4, 4, 4}), p), Tensor::zeros({4, 4, 4})));
}

TEST(LrC3ah, MatchesOracleOnToyInstances) {
    SplitMix64 rng(56);
    for (int t = 0; t < 100; ++t) {
        auto dims = toy_dims();
        dims.heads = 1;
        dims.channels = 3;
        dims.edges = 2 + rng.below(3);
        dims.rank = 1 + rng.below(std::min<std::size_t>(dims.edges, 3) - 1);
        dims.se_ratio = 1;
        dims.sparsity = SparsityConfig{rng.uniform(0.2, 1.0), rng.below(2) ? RoutingMode::Node : RoutingMode::Global};
        auto p = IntraEnhanceParams::create(rng, dims);
        if (rng.below(2)) p.rho_edge = ProjectionSpec::random_linear(rng, 3);
        const Tensor x = random_tensor(rng, {3, 2, 2});
        const Tensor nodes = map_to_nodes(x);
        const Tensor prototypes = lowrank_prototypes(p.proto, mean_rows(nodes));
        const Tensor oracle = verify::brute_force_hypergraph(nodes, prototypes, p.attn, p.rho_edge, p.rho_node, &p.sparsity);
        EXPECT_LE(max_abs_diff(map_to_nodes(lr_c3ah(x, p)), oracle), 1e-10);
    }
}

TEST(LrC3ah, GammaNearOneKeepsEverything) {
    SplitMix64 rng(57);
    auto p = IntraEnhanceParams::create(rng, toy_dims());
    const Tensor x = random_tensor(rng, {4, 4, 4});
    p.sparsity.gamma = 1.0;
    const Tensor full = lr_c3ah(x, p);
    p.sparsity.gamma = 0.999;
    EXPECT_EQ(p.sparsity.keep_count(4), 4u);
    EXPECT_TRUE(bitwise_equal(lr_c3ah(x, p), full));
}

TEST(Dsc3k, ZeroWeightsAreIdentity) {
    SplitMix64 rng(58);
    const Tensor x = random_tensor(rng, {3, 4, 4});
    EXPECT_TRUE(bitwise_equal(dsc3k(x, DSC3kParams::zeros(3)), x));
}

TEST(Dsc3k, DeltaKernelGivesSiluPlusInput) {
    DSC3kParams p{Tensor({1, 3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0}), Tensor::zeros({1}),
                  PointwiseConv{Tensor::matrix({{1}}), Tensor::zeros({1})}};
    const Tensor out = dsc3k(Tensor({1, 2, 2}, {1, -0.5, 2, 0}), p);
    const Tensor expected({1, 2, 2}, {1.7310585786300048793, -0.68877033439907271768, 3.7615941559557648881, 0.0});
    hftest::expect_tensor_near(out, expected, 1e-15);
}

TEST(Dsc3k, ConstantMapClosedForm) {
    // Kernel taps 0.25, bias 0.1 on a 0.5 map: 9, 6 or 4 in-bounds taps give 1.225, 0.85, 0.6.
    DSC3kParams p{Tensor::full({1, 3, 3}, 0.25), Tensor::vector({0.1}), PointwiseConv{Tensor::matrix({{2}}), Tensor::vector({-0.3})}};
    const Tensor out = dsc3k(Tensor::full({1, 3, 3}, 0.5), p);
    const double interior = 2.0937085355220093746, edge = 1.3909641422057540152, corner = 0.97478756747095454349;
    hftest::expect_tensor_near(out, Tensor({1, 3, 3}, {corner, edge, corner, edge, interior, edge, corner, edge, corner}), 1e-15);
}

TEST(Dsc3k, ChannelMismatch) {
    DSC3kParams p = DSC3kParams::zeros(2);
    p.pointwise = PointwiseConv::zeros(2, 3);
    EXPECT_THROW(dsc3k(Tensor::zeros({2, 2, 2}), p), Error);
}

TEST(IntraEnhance, ShapesAtDefaultScale) {
    SplitMix64 rng(59);
    IntraEnhanceParams::Dims dims;
    dims.level_channels = {8, 16, 32};
    dims.channels = 32;
    dims.edges = 16;
    dims.rank = 4;
    dims.heads = 2;
    dims.sparsity = SparsityConfig{0.5, RoutingMode::Node};
    const auto p = IntraEnhanceParams::create(rng, dims);
    IntraTrace trace;
    const auto out = intra_enhance(random_features(rng, {8, 16, 32}, 2), p, &trace);
    EXPECT_EQ(out.p3.shape(), (Shape{8, 8, 8}));
    EXPECT_EQ(out.p4.shape(), (Shape{16, 4, 4}));
    EXPECT_EQ(out.p5.shape(), (Shape{32, 2, 2}));
    EXPECT_EQ(trace.fused.shape(), (Shape{32, 4, 4}));
    EXPECT_EQ(trace.incidence.head_count(), 2u);
    EXPECT_EQ(trace.incidence.nodes(), 16u);
    expect_omega_in_unit_interval(trace.omega);
}

TEST(IntraEnhance, StrideChainPreservedAcrossExtents) {
    SplitMix64 rng(60);
    const auto p = IntraEnhanceParams::create(rng, toy_dims());
    for (std::size_t s : {1, 2, 3}) {
        const auto out = intra_enhance(random_features(rng, {4, 4, 4}, s), p);
        EXPECT_NO_THROW(out.validate());
        EXPECT_EQ(out.p5.dim(1), s);
    }
}

TEST(IntraEnhance, ZeroInputZeroBiases) {
    SplitMix64 rng(61);
    auto p = IntraEnhanceParams::create(rng, toy_dims());
    zero_biases(p);
    const MultiScaleFeatures zero{Tensor::zeros({4, 8, 8}), Tensor::zeros({4, 4, 4}), Tensor::zeros({4, 2, 2})};
    const auto out = intra_enhance(zero, p);
    EXPECT_TRUE(bitwise_equal(out.p3, Tensor::zeros({4, 8, 8})));
    EXPECT_TRUE(bitwise_equal(out.p4, Tensor::zeros({4, 4, 4})));
    EXPECT_TRUE(bitwise_equal(out.p5, Tensor::zeros({4, 2, 2})));
}

TEST(IntraEnhance, SilencedMessagePathReducesToRedistributedFuseSE) {
    SplitMix64 rng(62);
    auto p = IntraEnhanceParams::create(rng, toy_dims());
    p.proto.basis = Tensor::zeros(p.proto.basis.shape());
    p.proto.bias = Tensor::zeros(p.proto.bias.shape());
    p.rho_node = ProjectionSpec::linear(Tensor::zeros({4, 4}), Tensor::zeros({4}));
    p.dsc3k = DSC3kParams::zeros(4);
    const auto f = random_features(rng, {4, 4, 4}, 2);
    const Tensor mid = fuse_se(f, p.fuse);
    const auto out = intra_enhance(f, p);
    EXPECT_TRUE(bitwise_equal(out.p3, p.out_convs[0].apply(nearest_up2(mid))));
    EXPECT_TRUE(bitwise_equal(out.p4, p.out_convs[1].apply(mid)));
    EXPECT_TRUE(bitwise_equal(out.p5, p.out_convs[2].apply(stride_down2(mid))));
}

TEST(IntraEnhance, SeedDeterminism) {
    auto build = [] {
        SplitMix64 rng(42);
        const auto p = IntraEnhanceParams::create(rng, toy_dims());
        return intra_enhance(random_features(rng, {4, 4, 4}, 2), p);
    };
    EXPECT_TRUE(bitwise_equal(build(), build()));
}

TEST(IntraEnhance, GradientsOfEveryParameterMatchFiniteDifferences) {
    SplitMix64 rng(63);
    for (bool shared : {true, false}) {
        auto dims = toy_dims();
        dims.shared_bias = shared;
        auto p = IntraEnhanceParams::create(rng, dims);
        p.rho_edge = ProjectionSpec::random_linear(rng, 4);
        p.rho_node = ProjectionSpec::random_linear(rng, 4);
        const auto f = random_features(rng, {4, 4, 4}, 2);
        const auto params = p.parameters();
        ASSERT_EQ(params.size(), 24u);
        EXPECT_LE(hftest::bundle_grad_error(params, [&] { return readout(intra_enhance(f, p)); }), 1e-4);
        for (std::size_t k = 0; k < params.size(); ++k) {
            // A shared bias only shifts every logit of a row by the same amount; see SharedPrototypeBiasHasNoGradient.
            if (shared && params[k] == &p.proto.bias) continue;
            EXPECT_LE(hftest::bundle_grad_error({params[k]}, [&] { return readout(intra_enhance(f, p)); }), 1e-4) << "parameter " << k;
        }
    }
}

TEST(IntraEnhance, SharedPrototypeBiasHasNoGradient) {
    SplitMix64 rng(65);
    auto p = IntraEnhanceParams::create(rng, toy_dims());
    const auto f = random_features(rng, {4, 4, 4}, 2);
    const Tensor bias = p.proto.bias.detach(true);
    p.proto.bias = bias;
    EXPECT_LE(max_abs_diff(backward(readout(intra_enhance(f, p)), bias), Tensor::zeros(bias.shape())), 1e-12);
    p.proto.bias = add_rows(Tensor::zeros(bias.shape()), Tensor::vector({5, -3, 2, 7}));
    const auto shifted = intra_enhance(f, p);
    p.proto.bias = Tensor::zeros(bias.shape());
    EXPECT_LE(max_abs_diff(shifted.p4, intra_enhance(f, p).p4), 1e-12);
}

TEST(IntraEnhance, GradientWithRespectToInputMaps) {
    SplitMix64 rng(64);
    const auto p = IntraEnhanceParams::create(rng, toy_dims());
    const auto f = random_features(rng, {4, 4, 4}, 2);
    EXPECT_LE(hftest::normwise_grad_error([&](const Tensor& x) { return readout(intra_enhance({x, f.p4, f.p5}, p)); }, f.p3.detach(true)), 1e-4);
    EXPECT_LE(hftest::normwise_grad_error([&](const Tensor& x) { return readout(intra_enhance({f.p3, f.p4, x}, p)); }, f.p5.detach(true)), 1e-4);
}
