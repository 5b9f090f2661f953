#pragma once

#include "hyperfuse/features.hpp"
#include "hyperfuse/hypergraph.hpp"

#include <optional>
#include <utility>

namespace hyperfuse {

// Shared cross-modal hyperedges: E = E_b + reshape(ctx_linear([mean(U), mean(V)])).
struct CrossHyperedgeGenParams {
    Tensor base;         // h_e x d
    Tensor ctx_weight;   // (h_e * d) x 2d
    Tensor ctx_bias;     // h_e * d
    AttentionConfig attn;
    std::optional<SparsityConfig> sparsity;  // off unless set

    static CrossHyperedgeGenParams create(SplitMix64& rng, std::size_t edges, std::size_t d, std::size_t heads);
    std::size_t edges() const { return base.dim(0); }
    std::size_t dim() const { return base.dim(1); }
    std::size_t param_count() const noexcept { return base.numel() + ctx_weight.numel() + ctx_bias.numel(); }
    std::vector<Tensor*> parameters() { return {&base, &ctx_weight, &ctx_bias}; }
};

struct CrossUpdateParams {
    ProjectionSpec rho_edge_u;
    ProjectionSpec rho_edge_v;
    ProjectionSpec rho_node_u;
    ProjectionSpec rho_node_v;

    std::size_t param_count() const noexcept;
    std::vector<Tensor*> parameters();
};

struct GateFusionParams {
    Tensor gate_weight;  // d x 2d
    Tensor gate_bias;    // d
    PointwiseConv out_conv;                  // d -> d, produces Y
    std::array<PointwiseConv, 2> scale_convs;  // C5 -> C4 channels, C4 -> C3 channels

    static GateFusionParams create(SplitMix64& rng, std::size_t d, std::size_t c4, std::size_t c3);
    std::size_t param_count() const noexcept;
    std::vector<Tensor*> parameters();
};

struct InterFuseParams {
    CrossHyperedgeGenParams cheg;
    CrossUpdateParams chnn;
    GateFusionParams gate;

    static InterFuseParams create(SplitMix64& rng, std::size_t d, std::size_t edges, std::size_t heads, std::size_t c4,
                                  std::size_t c3);
    std::size_t param_count() const noexcept { return cheg.param_count() + chnn.param_count() + gate.param_count(); }
    std::vector<Tensor*> parameters();
};

struct CrossHyperedges {
    Tensor prototypes;  // h_e x d
    SoftIncidence w_u;
    SoftIncidence w_v;
};

struct InterTrace {
    CrossHyperedges edges;
    Tensor u_updated;  // pre-gate, d x s x s
    Tensor v_updated;
    Tensor gated;      // d x s x s, before the output conv
};

Tensor context_vector(const Tensor& nodes);
CrossHyperedges cheg(const Tensor& u_nodes, const Tensor& v_nodes, const CrossHyperedgeGenParams& p);
std::pair<Tensor, Tensor> chnn(const Tensor& u_nodes, const Tensor& v_nodes, const SoftIncidence& w_u, const SoftIncidence& w_v,
                               const CrossUpdateParams& p);
Tensor gate_fusion(const Tensor& u_nodes, const Tensor& v_nodes, const GateFusionParams& p);
// Returns {C3, C4, C5}.
MultiScaleFeatures inter_fuse(const Tensor& h5_rgb, const Tensor& h5_ir, const InterFuseParams& p, InterTrace* trace = nullptr);

}  // namespace hyperfuse
