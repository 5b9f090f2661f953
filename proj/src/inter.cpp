#include "hyperfuse/inter.hpp"

#include "hyperfuse/error.hpp"
#include "hyperfuse/ops.hpp"

namespace hyperfuse {

CrossHyperedgeGenParams CrossHyperedgeGenParams::create(SplitMix64& rng, std::size_t edges, std::size_t d, std::size_t heads) {
    if (edges == 0) throw Error(ErrorKind::InvalidConfig, "cross hyperedge count must be positive");
    CrossHyperedgeGenParams p;
    p.attn = AttentionConfig::for_dim(d, heads);
    p.base = fan_in_init(rng, {edges, d}, d);
    p.ctx_weight = fan_in_init(rng, {edges * d, 2 * d}, 2 * d);
    p.ctx_bias = fan_in_init(rng, {edges * d}, 2 * d);
    return p;
}

std::size_t CrossUpdateParams::param_count() const noexcept {
    return rho_edge_u.param_count() + rho_edge_v.param_count() + rho_node_u.param_count() + rho_node_v.param_count();
}

std::vector<Tensor*> CrossUpdateParams::parameters() {
    std::vector<Tensor*> out;
    for (auto* spec : {&rho_edge_u, &rho_edge_v, &rho_node_u, &rho_node_v})
        for (auto* t : spec->parameters()) out.push_back(t);
    return out;
}

GateFusionParams GateFusionParams::create(SplitMix64& rng, std::size_t d, std::size_t c4, std::size_t c3) {
    GateFusionParams p;
    p.gate_weight = fan_in_init(rng, {d, 2 * d}, 2 * d);
    p.gate_bias = fan_in_init(rng, {d}, 2 * d);
    p.out_conv = PointwiseConv::create(rng, d, d);
    p.scale_convs = {PointwiseConv::create(rng, d, c4), PointwiseConv::create(rng, c4, c3)};
    return p;
}

std::size_t GateFusionParams::param_count() const noexcept {
    return gate_weight.numel() + gate_bias.numel() + out_conv.param_count() + scale_convs[0].param_count() +
           scale_convs[1].param_count();
}

std::vector<Tensor*> GateFusionParams::parameters() {
    std::vector<Tensor*> out{&gate_weight, &gate_bias};
    for (auto* conv : {&out_conv, &scale_convs[0], &scale_convs[1]})
        for (auto* t : conv->parameters()) out.push_back(t);
    return out;
}

InterFuseParams InterFuseParams::create(SplitMix64& rng, std::size_t d, std::size_t edges, std::size_t heads, std::size_t c4,
                                        std::size_t c3) {
    InterFuseParams p;
    p.cheg = CrossHyperedgeGenParams::create(rng, edges, d, heads);
    p.gate = GateFusionParams::create(rng, d, c4, c3);
    return p;
}

std::vector<Tensor*> InterFuseParams::parameters() {
    std::vector<Tensor*> out = cheg.parameters();
    for (auto* t : chnn.parameters()) out.push_back(t);
    for (auto* t : gate.parameters()) out.push_back(t);
    return out;
}

Tensor context_vector(const Tensor& nodes) {
    if (nodes.rank() != 2) throw Error(ErrorKind::ShapeMismatch, "context_vector expects an n x d node matrix");
    return mean_rows(nodes);
}

CrossHyperedges cheg(const Tensor& u_nodes, const Tensor& v_nodes, const CrossHyperedgeGenParams& p) {
    if (u_nodes.rank() != 2 || v_nodes.rank() != 2 || u_nodes.dim(1) != v_nodes.dim(1) || u_nodes.dim(1) != p.dim())
        throw Error(ErrorKind::ShapeMismatch, "cheg: node sets " + shape_to_string(u_nodes.shape()) + " and " +
                                                  shape_to_string(v_nodes.shape()) + " for d = " + std::to_string(p.dim()));
    const std::size_t d = p.dim(), edges = p.edges();
    const Tensor context = concat_cols({reshape(context_vector(u_nodes), {1, d}), reshape(context_vector(v_nodes), {1, d})});
    const Tensor delta = reshape(linear(context, p.ctx_weight, p.ctx_bias), {edges, d});
    CrossHyperedges out;
    out.prototypes = add(p.base, delta);
    out.w_u = attention_incidence(u_nodes, out.prototypes, p.attn);
    out.w_v = attention_incidence(v_nodes, out.prototypes, p.attn);
    if (p.sparsity) {
        out.w_u = sparsify_topk(out.w_u, *p.sparsity);
        out.w_v = sparsify_topk(out.w_v, *p.sparsity);
    }
    return out;
}

std::pair<Tensor, Tensor> chnn(const Tensor& u_nodes, const Tensor& v_nodes, const SoftIncidence& w_u, const SoftIncidence& w_v,
                               const CrossUpdateParams& p) {
    if (w_u.edges() != w_v.edges() || w_u.head_count() != w_v.head_count())
        throw Error(ErrorKind::ShapeMismatch, "chnn: both streams must attend to the same hyperedge set");
    const Tensor edges_u = aggregate_to_hyperedges(w_u, u_nodes);
    const Tensor edges_v = aggregate_to_hyperedges(w_v, v_nodes);
    // Each stream is refreshed from the other stream's hyperedge features.
    Tensor u_next = disseminate_to_nodes(u_nodes, w_u, edges_v, p.rho_edge_v, p.rho_node_u);
    Tensor v_next = disseminate_to_nodes(v_nodes, w_v, edges_u, p.rho_edge_u, p.rho_node_v);
    return {std::move(u_next), std::move(v_next)};
}

Tensor gate_fusion(const Tensor& u_nodes, const Tensor& v_nodes, const GateFusionParams& p) {
    if (u_nodes.shape() != v_nodes.shape() || u_nodes.rank() != 2)
        throw Error(ErrorKind::ShapeMismatch, "gate_fusion: " + shape_to_string(u_nodes.shape()) + " vs " + shape_to_string(v_nodes.shape()));
    const Tensor g = sigmoid(linear(concat_cols({u_nodes, v_nodes}), p.gate_weight, p.gate_bias));
    if (g.shape() != u_nodes.shape()) throw Error(ErrorKind::ShapeMismatch, "gate width differs from the feature dim");
    // v + g * (u - v): equal inputs come back bit-exact.
    return add(v_nodes, mul(g, sub(u_nodes, v_nodes)));
}

MultiScaleFeatures inter_fuse(const Tensor& h5_rgb, const Tensor& h5_ir, const InterFuseParams& p, InterTrace* trace) {
    if (h5_rgb.rank() != 3 || h5_rgb.shape() != h5_ir.shape())
        throw Error(ErrorKind::ShapeMismatch, "inter_fuse: " + shape_to_string(h5_rgb.shape()) + " vs " + shape_to_string(h5_ir.shape()));
    const std::size_t h = h5_rgb.dim(1), w = h5_rgb.dim(2);
    const Tensor u = map_to_nodes(h5_rgb);
    const Tensor v = map_to_nodes(h5_ir);
    CrossHyperedges edges = cheg(u, v, p.cheg);
    auto [u_next, v_next] = chnn(u, v, edges.w_u, edges.w_v, p.chnn);
    const Tensor gated = nodes_to_map(gate_fusion(u_next, v_next, p.gate), h, w);
    const Tensor c5 = p.gate.out_conv.apply(gated);
    const Tensor c4 = p.gate.scale_convs[0].apply(nearest_up2(c5));
    const Tensor c3 = p.gate.scale_convs[1].apply(nearest_up2(c4));
    MultiScaleFeatures out{c3, c4, c5};
    out.validate();
    if (trace) *trace = InterTrace{std::move(edges), nodes_to_map(u_next, h, w), nodes_to_map(v_next, h, w), gated};
    return out;
}

}  // namespace hyperfuse
