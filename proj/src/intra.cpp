#include "hyperfuse/intra.hpp"

#include "hyperfuse/error.hpp"
#include "hyperfuse/ops.hpp"

namespace hyperfuse {

DSC3kParams DSC3kParams::create(SplitMix64& rng, std::size_t channels) {
    DSC3kParams p;
    p.depthwise = fan_in_init(rng, {channels, 3, 3}, 9);
    p.depthwise_bias = fan_in_init(rng, {channels}, 9);
    p.pointwise = PointwiseConv::create(rng, channels, channels);
    return p;
}

DSC3kParams DSC3kParams::zeros(std::size_t channels) {
    return {Tensor::zeros({channels, 3, 3}).detach(true), Tensor::zeros({channels}).detach(true),
            PointwiseConv::zeros(channels, channels)};
}

std::vector<Tensor*> DSC3kParams::parameters() { return {&depthwise, &depthwise_bias, &pointwise.weight, &pointwise.bias}; }

IntraEnhanceParams IntraEnhanceParams::create(SplitMix64& rng, const Dims& dims) {
    const std::size_t c = dims.channels;
    const std::size_t in = dims.level_channels[0] + dims.level_channels[1] + dims.level_channels[2];
    dims.sparsity.validate();
    IntraEnhanceParams p;
    p.fuse = FuseSEParams::create(rng, in, c, dims.se_ratio);
    p.proto = LowRankPrototypes::create(rng, dims.edges, c, dims.rank, dims.shared_bias);
    p.attn = AttentionConfig::for_dim(c, dims.heads);
    p.sparsity = dims.sparsity;
    p.rho_edge = ProjectionSpec::identity();
    p.rho_node = ProjectionSpec::identity();
    p.dsc3k = DSC3kParams::create(rng, c);
    for (std::size_t i = 0; i < 3; ++i) p.out_convs[i] = PointwiseConv::create(rng, c, dims.level_channels[i]);
    return p;
}

void IntraEnhanceParams::validate() const {
    fuse.validate();
    proto.validate();
    sparsity.validate();
    const std::size_t c = fuse.channels();
    if (proto.dim() != c) throw Error(ErrorKind::InvalidConfig, "prototype dim must equal the fused channel count");
    if (attn.dim() != c) throw Error(ErrorKind::InvalidConfig, "attention dim must equal the fused channel count");
    if (dsc3k.depthwise.shape() != Shape{c, 3, 3}) throw Error(ErrorKind::InvalidConfig, "dsc3k kernel shape");
    for (const auto& conv : out_convs)
        if (conv.in_channels() != c) throw Error(ErrorKind::InvalidConfig, "redistribution convs must read c channels");
}

std::size_t IntraEnhanceParams::param_count() const noexcept {
    std::size_t total = fuse.param_count() + lowrank_param_count(proto.edges(), proto.dim(), proto.rank(), proto.shared_bias) +
                        rho_edge.param_count() + rho_node.param_count() + dsc3k.param_count();
    for (const auto& conv : out_convs) total += conv.param_count();
    return total;
}

std::vector<Tensor*> IntraEnhanceParams::parameters() {
    std::vector<Tensor*> out = fuse.parameters();
    for (auto* t : proto.parameters()) out.push_back(t);
    for (auto* t : rho_edge.parameters()) out.push_back(t);
    for (auto* t : rho_node.parameters()) out.push_back(t);
    for (auto* t : dsc3k.parameters()) out.push_back(t);
    for (auto& conv : out_convs)
        for (auto* t : conv.parameters()) out.push_back(t);
    return out;
}

Tensor fuse_se(const MultiScaleFeatures& f, const FuseSEParams& p, Tensor* omega_out) {
    f.validate();
    return fuse_se_maps({stride_down2(f.p3), f.p4, nearest_up2(f.p5)}, p, omega_out);
}

Tensor lr_c3ah(const Tensor& x, const IntraEnhanceParams& p, SoftIncidence* incidence_out) {
    if (x.rank() != 3) throw Error(ErrorKind::ShapeMismatch, "lr_c3ah expects c x h x w");
    const std::size_t h = x.dim(1), w = x.dim(2);
    const Tensor nodes = map_to_nodes(x);
    const Tensor prototypes = lowrank_prototypes(p.proto, mean_rows(nodes));
    SoftIncidence incidence = sparsify_topk(attention_incidence(nodes, prototypes, p.attn), p.sparsity);
    const Tensor edges = aggregate_to_hyperedges(incidence, nodes);
    const Tensor updated = disseminate_to_nodes(nodes, incidence, edges, p.rho_edge, p.rho_node);
    if (incidence_out) *incidence_out = std::move(incidence);
    return nodes_to_map(updated, h, w);
}

Tensor dsc3k(const Tensor& x, const DSC3kParams& p) {
    const Tensor local = depthwise_conv3x3(x, p.depthwise, p.depthwise_bias);
    const Tensor mixed = p.pointwise.apply(silu(local));
    if (mixed.shape() != x.shape()) throw Error(ErrorKind::ShapeMismatch, "dsc3k pointwise conv changes the channel count");
    return add(x, mixed);
}

MultiScaleFeatures intra_enhance(const MultiScaleFeatures& f, const IntraEnhanceParams& p, IntraTrace* trace) {
    p.validate();
    Tensor omega;
    const Tensor mid = fuse_se(f, p.fuse, &omega);
    SoftIncidence incidence;
    const Tensor enhanced = dsc3k(lr_c3ah(mid, p, &incidence), p.dsc3k);
    MultiScaleFeatures out{p.out_convs[0].apply(nearest_up2(enhanced)), p.out_convs[1].apply(enhanced),
                           p.out_convs[2].apply(stride_down2(enhanced))};
    out.validate();
    if (trace) *trace = IntraTrace{mid, omega, std::move(incidence), enhanced};
    return out;
}

}  // namespace hyperfuse
