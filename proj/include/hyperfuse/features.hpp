#pragma once

#include "hyperfuse/rng.hpp"
#include "hyperfuse/tensor.hpp"

#include <array>
#include <vector>

namespace hyperfuse {

// P3/P4/P5 maps of one modality. Each level halves the spatial extent of the
// previous one (strides 8, 16, 32 relative to the input image).
struct MultiScaleFeatures {
    Tensor p3;
    Tensor p4;
    Tensor p5;

    // Throws ShapeMismatch when a map is not c x h x w or the stride chain breaks.
    void validate() const;

    const Tensor& level(std::size_t i) const;
    std::array<Tensor, 3> levels() const { return {p3, p4, p5}; }
};

bool bitwise_equal(const MultiScaleFeatures& a, const MultiScaleFeatures& b) noexcept;

// 1x1 convolution parameters: weight out x in, bias [out].
struct PointwiseConv {
    Tensor weight;
    Tensor bias;

    static PointwiseConv create(SplitMix64& rng, std::size_t in, std::size_t out);
    static PointwiseConv zeros(std::size_t in, std::size_t out);

    std::size_t in_channels() const { return weight.dim(1); }
    std::size_t out_channels() const { return weight.dim(0); }
    Tensor apply(const Tensor& map) const;
    std::size_t param_count() const noexcept { return weight.numel() + bias.numel(); }
    std::vector<Tensor*> parameters() { return {&weight, &bias}; }
};

// Squeeze-excitation calibrated channel fusion: concat -> 1x1 conv -> F',
// omega = sigmoid(expand(silu(reduce(avgpool(F'))))), output F' * omega.
struct FuseSEParams {
    PointwiseConv fuse;
    PointwiseConv se_reduce;
    PointwiseConv se_expand;
    std::size_t ratio = 4;

    static FuseSEParams create(SplitMix64& rng, std::size_t in_channels, std::size_t channels, std::size_t ratio);
    void validate() const;

    std::size_t channels() const { return fuse.out_channels(); }
    std::size_t param_count() const noexcept;
    std::vector<Tensor*> parameters();
};

Tensor se_gate(const Tensor& fused, const FuseSEParams& p);
// Channel-concatenates `maps` (all the same spatial extent) and applies the SE-calibrated fusion.
Tensor fuse_se_maps(const std::vector<Tensor>& maps, const FuseSEParams& p, Tensor* omega_out = nullptr);

}  // namespace hyperfuse
