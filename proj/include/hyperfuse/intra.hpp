#pragma once

#include "hyperfuse/features.hpp"
#include "hyperfuse/hypergraph.hpp"

#include <array>
#include <optional>

namespace hyperfuse {

// Depthwise-separable residual block: x + pointwise(silu(depthwise3x3(x))).
struct DSC3kParams {
    Tensor depthwise;       // c x 3 x 3
    Tensor depthwise_bias;  // c
    PointwiseConv pointwise;

    static DSC3kParams create(SplitMix64& rng, std::size_t channels);
    static DSC3kParams zeros(std::size_t channels);

    std::size_t param_count() const noexcept { return depthwise.numel() + depthwise_bias.numel() + pointwise.param_count(); }
    std::vector<Tensor*> parameters();
};

struct IntraEnhanceParams {
    FuseSEParams fuse;
    LowRankPrototypes proto;
    AttentionConfig attn;
    SparsityConfig sparsity;
    ProjectionSpec rho_edge;
    ProjectionSpec rho_node;
    DSC3kParams dsc3k;
    std::array<PointwiseConv, 3> out_convs;  // fused c -> c3 / c4 / c5 channels

    struct Dims {
        std::array<std::size_t, 3> level_channels{};  // c1, c2, c3
        std::size_t channels = 0;                     // fused feature dim d
        std::size_t edges = 0;                        // m
        std::size_t rank = 0;                         // r
        std::size_t heads = 1;
        SparsityConfig sparsity{};
        bool shared_bias = true;
        std::size_t se_ratio = 4;
    };

    static IntraEnhanceParams create(SplitMix64& rng, const Dims& dims);
    void validate() const;

    std::size_t param_count() const noexcept;
    std::vector<Tensor*> parameters();
};

// Intermediates of one intra pass, exported for attention-map rendering.
struct IntraTrace {
    Tensor fused;  // FuseSE output at the P4 extent
    Tensor omega;
    SoftIncidence incidence;
    Tensor enhanced;  // after LR-C3AH and DSC3k
};

Tensor fuse_se(const MultiScaleFeatures& f, const FuseSEParams& p, Tensor* omega_out = nullptr);
Tensor lr_c3ah(const Tensor& x, const IntraEnhanceParams& p, SoftIncidence* incidence_out = nullptr);
Tensor dsc3k(const Tensor& x, const DSC3kParams& p);
MultiScaleFeatures intra_enhance(const MultiScaleFeatures& f, const IntraEnhanceParams& p, IntraTrace* trace = nullptr);

}  // namespace hyperfuse
