#include "hyperfuse/features.hpp"

#include "hyperfuse/error.hpp"
#include "hyperfuse/ops.hpp"

namespace hyperfuse {

void MultiScaleFeatures::validate() const {
    for (const Tensor* t : {&p3, &p4, &p5})
        if (t->rank() != 3) throw Error(ErrorKind::ShapeMismatch, "feature map must be c x h x w, got " + shape_to_string(t->shape()));
    const bool chain = p3.dim(1) == 2 * p4.dim(1) && p3.dim(2) == 2 * p4.dim(2) && p4.dim(1) == 2 * p5.dim(1) &&
                       p4.dim(2) == 2 * p5.dim(2) && p5.dim(1) > 0 && p5.dim(2) > 0;
    if (!chain)
        throw Error(ErrorKind::ShapeMismatch, "stride chain broken: " + shape_to_string(p3.shape()) + ", " +
                                                  shape_to_string(p4.shape()) + ", " + shape_to_string(p5.shape()));
}

const Tensor& MultiScaleFeatures::level(std::size_t i) const {
    switch (i) {
    case 3: return p3;
    case 4: return p4;
    case 5: return p5;
    default: throw Error(ErrorKind::IndexOutOfRange, "levels are 3, 4, 5");
    }
}

bool bitwise_equal(const MultiScaleFeatures& a, const MultiScaleFeatures& b) noexcept {
    return bitwise_equal(a.p3, b.p3) && bitwise_equal(a.p4, b.p4) && bitwise_equal(a.p5, b.p5);
}

PointwiseConv PointwiseConv::create(SplitMix64& rng, std::size_t in, std::size_t out) {
    return {fan_in_init(rng, {out, in}, in), fan_in_init(rng, {out}, in)};
}

PointwiseConv PointwiseConv::zeros(std::size_t in, std::size_t out) {
    return {Tensor::zeros({out, in}).detach(true), Tensor::zeros({out}).detach(true)};
}

Tensor PointwiseConv::apply(const Tensor& map) const { return conv_pointwise(map, weight, bias); }

FuseSEParams FuseSEParams::create(SplitMix64& rng, std::size_t in_channels, std::size_t channels, std::size_t ratio) {
    if (ratio == 0 || channels % ratio != 0)
        throw Error(ErrorKind::InvalidConfig, "SE ratio " + std::to_string(ratio) + " must divide " + std::to_string(channels));
    FuseSEParams p;
    p.fuse = PointwiseConv::create(rng, in_channels, channels);
    p.se_reduce = PointwiseConv::create(rng, channels, channels / ratio);
    p.se_expand = PointwiseConv::create(rng, channels / ratio, channels);
    p.ratio = ratio;
    return p;
}

void FuseSEParams::validate() const {
    const std::size_t c = channels();
    if (ratio == 0 || c % ratio != 0) throw Error(ErrorKind::InvalidConfig, "SE ratio must divide the channel count");
    if (se_reduce.in_channels() != c || se_reduce.out_channels() != c / ratio || se_expand.in_channels() != c / ratio ||
        se_expand.out_channels() != c)
        throw Error(ErrorKind::InvalidConfig, "SE bottleneck shapes disagree with the fused channel count");
}

std::size_t FuseSEParams::param_count() const noexcept {
    return fuse.param_count() + se_reduce.param_count() + se_expand.param_count();
}

std::vector<Tensor*> FuseSEParams::parameters() {
    std::vector<Tensor*> out;
    for (auto* conv : {&fuse, &se_reduce, &se_expand})
        for (auto* t : conv->parameters()) out.push_back(t);
    return out;
}

Tensor se_gate(const Tensor& fused, const FuseSEParams& p) {
    p.validate();
    return sigmoid(p.se_expand.apply(silu(p.se_reduce.apply(global_avg_pool(fused)))));
}

Tensor fuse_se_maps(const std::vector<Tensor>& maps, const FuseSEParams& p, Tensor* omega_out) {
    const Tensor joined = maps.size() == 1 ? maps.front() : concat_channels(maps);
    if (joined.dim(0) != p.fuse.in_channels())
        throw Error(ErrorKind::ShapeMismatch, "fusion conv expects " + std::to_string(p.fuse.in_channels()) +
                                                  " input channels, got " + std::to_string(joined.dim(0)));
    const Tensor fused = p.fuse.apply(joined);
    const Tensor omega = se_gate(fused, p);
    if (omega_out) *omega_out = omega;
    return scale_channels(fused, omega);
}

}  // namespace hyperfuse
