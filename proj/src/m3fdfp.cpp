#include "hyperfuse/m3fdfp.hpp"

#include "hyperfuse/error.hpp"
#include "hyperfuse/ops.hpp"

namespace hyperfuse {

FusionScalars FusionScalars::make(double alpha, double beta, double gamma_f) {
    return {Tensor::scalar(alpha, true), Tensor::scalar(beta, true), Tensor::scalar(gamma_f, true)};
}

M3fdfpParams M3fdfpParams::create(SplitMix64& rng, const std::array<std::size_t, 3>& level_channels, std::size_t se_ratio) {
    M3fdfpParams p;
    for (std::size_t i = 0; i < 3; ++i) p.modal[i] = FuseSEParams::create(rng, 2 * level_channels[i], level_channels[i], se_ratio);
    return p;
}

std::size_t M3fdfpParams::param_count() const noexcept {
    std::size_t total = 0;
    for (const auto& m : modal) total += m.param_count();
    return total + 3 * scalars.size();
}

std::vector<Tensor*> M3fdfpParams::parameters() {
    std::vector<Tensor*> out;
    for (auto& m : modal)
        for (auto* t : m.parameters()) out.push_back(t);
    for (auto& s : scalars)
        for (auto* t : s.parameters()) out.push_back(t);
    return out;
}

Tensor modal_fuse_se(const Tensor& f_rgb, const Tensor& f_ir, const ModalFuseSEParams& p) {
    if (f_rgb.rank() != 3 || f_rgb.shape() != f_ir.shape())
        throw Error(ErrorKind::ShapeMismatch, "modal_fuse_se: " + shape_to_string(f_rgb.shape()) + " vs " + shape_to_string(f_ir.shape()));
    if (p.channels() != f_rgb.dim(0))
        throw Error(ErrorKind::ShapeMismatch, "modal fusion must keep the per-modality channel count");
    return fuse_se_maps({f_rgb, f_ir}, p);
}

Tensor m3fdfp_fuse(const Tensor& f_rgb, const Tensor& f_ir, const Tensor& h_rgb, const Tensor& h_ir, const Tensor& c,
                   const FusionScalars& s, const ModalFuseSEParams& p) {
    for (const Tensor* t : {&f_ir, &h_rgb, &h_ir, &c})
        if (t->shape() != f_rgb.shape())
            throw Error(ErrorKind::ShapeMismatch, "m3fdfp_fuse: " + shape_to_string(t->shape()) + " vs " + shape_to_string(f_rgb.shape()));
    Tensor out = modal_fuse_se(f_rgb, f_ir, p);
    out = add(out, mul_scalar(s.alpha, h_rgb));
    out = add(out, mul_scalar(s.beta, h_ir));
    return add(out, mul_scalar(s.gamma_f, c));
}

MultiScaleFeatures m3fdfp_pipeline(const MultiScaleFeatures& rgb, const MultiScaleFeatures& ir, const MultiScaleFeatures& h_rgb,
                                   const MultiScaleFeatures& h_ir, const MultiScaleFeatures& c, const M3fdfpParams& p) {
    for (const auto* f : {&rgb, &ir, &h_rgb, &h_ir, &c}) f->validate();
    std::array<Tensor, 3> out;
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t level = i + 3;
        out[i] = m3fdfp_fuse(rgb.level(level), ir.level(level), h_rgb.level(level), h_ir.level(level), c.level(level),
                             p.scalars[i], p.modal[i]);
    }
    MultiScaleFeatures fused{out[0], out[1], out[2]};
    fused.validate();
    return fused;
}

}  // namespace hyperfuse
