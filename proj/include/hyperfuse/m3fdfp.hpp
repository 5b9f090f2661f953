#pragma once

#include "hyperfuse/features.hpp"

#include <array>

namespace hyperfuse {

// Learnable mixing weights of one pyramid level. Stored as rank-0 tensors so
// gradients reach them.
struct FusionScalars {
    Tensor alpha = Tensor::scalar(0.0, true);
    Tensor beta = Tensor::scalar(0.0, true);
    Tensor gamma_f = Tensor::scalar(0.0, true);

    static FusionScalars make(double alpha, double beta, double gamma_f);
    std::vector<Tensor*> parameters() { return {&alpha, &beta, &gamma_f}; }
};

// Same structure as FuseSEParams with a two-modality channel concat (2c -> c).
using ModalFuseSEParams = FuseSEParams;

struct M3fdfpParams {
    std::array<ModalFuseSEParams, 3> modal;  // P3, P4, P5
    std::array<FusionScalars, 3> scalars;

    static M3fdfpParams create(SplitMix64& rng, const std::array<std::size_t, 3>& level_channels, std::size_t se_ratio);
    std::size_t param_count() const noexcept;
    std::vector<Tensor*> parameters();
};

Tensor modal_fuse_se(const Tensor& f_rgb, const Tensor& f_ir, const ModalFuseSEParams& p);
Tensor m3fdfp_fuse(const Tensor& f_rgb, const Tensor& f_ir, const Tensor& h_rgb, const Tensor& h_ir, const Tensor& c,
                   const FusionScalars& s, const ModalFuseSEParams& p);
MultiScaleFeatures m3fdfp_pipeline(const MultiScaleFeatures& rgb, const MultiScaleFeatures& ir, const MultiScaleFeatures& h_rgb,
                                   const MultiScaleFeatures& h_ir, const MultiScaleFeatures& c, const M3fdfpParams& p);

}  // namespace hyperfuse
