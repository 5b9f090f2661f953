#pragma once

#include "hyperfuse/rng.hpp"
#include "hyperfuse/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace hyperfuse {

// Binary node/hyperedge membership with precomputed degrees.
class IncidenceMatrix {
public:
    IncidenceMatrix(std::size_t n, std::size_t m, std::vector<std::uint8_t> entries);

    std::size_t nodes() const noexcept { return n_; }
    std::size_t edges() const noexcept { return m_; }
    bool contains(std::size_t node, std::size_t edge) const { return entries_.at(node * m_ + edge) != 0; }
    const std::vector<std::size_t>& node_degrees() const noexcept { return node_degree_; }
    const std::vector<std::size_t>& edge_degrees() const noexcept { return edge_degree_; }
    std::size_t count_ones() const noexcept { return ones_; }
    Tensor to_tensor() const;

private:
    std::size_t n_;
    std::size_t m_;
    std::vector<std::uint8_t> entries_;
    std::vector<std::size_t> node_degree_;
    std::vector<std::size_t> edge_degree_;
    std::size_t ones_ = 0;
};

IncidenceMatrix build_incidence(const std::vector<std::vector<std::size_t>>& edges, std::size_t n);

struct AttentionConfig {
    std::size_t heads = 1;
    std::size_t head_dim = 1;

    std::size_t dim() const noexcept { return heads * head_dim; }
    // Throws InvalidConfig unless heads >= 1 and heads divides d.
    static AttentionConfig for_dim(std::size_t d, std::size_t heads);
};

enum class RoutingMode { Global, Node };

struct SparsityConfig {
    double gamma = 1.0;
    RoutingMode mode = RoutingMode::Node;

    void validate() const;
    // ceil(gamma * m), clamped to [1, m].
    std::size_t keep_count(std::size_t m) const;
};

// Row-stochastic node x hyperedge weights, one n x m matrix per head.
struct SoftIncidence {
    std::vector<Tensor> heads;
    std::optional<SparsityConfig> sparsity;

    std::size_t head_count() const noexcept { return heads.size(); }
    std::size_t nodes() const { return heads.at(0).dim(0); }
    std::size_t edges() const { return heads.at(0).dim(1); }
    // heads x n x m copy without autograd history.
    Tensor stacked() const;
};

// rho_edge / rho_node in dissemination. Identity applies no transformation.
struct ProjectionSpec {
    enum class Kind { Identity, Linear };

    Kind kind = Kind::Identity;
    Tensor weight;  // d_out x d_in
    Tensor bias;    // d_out

    static ProjectionSpec identity() { return {}; }
    static ProjectionSpec linear(Tensor weight, Tensor bias);
    static ProjectionSpec random_linear(SplitMix64& rng, std::size_t d);

    Tensor apply(const Tensor& rows) const;
    std::size_t param_count() const noexcept;
    std::vector<Tensor*> parameters();
};

// E = U * diag(sigmoid(context * ctx_gate)) * V_base + b.
struct LowRankPrototypes {
    Tensor basis;     // m x r
    Tensor ctx_gate;  // d x r
    Tensor v_base;    // r x d
    Tensor bias;      // 1 x d when shared, m x d otherwise
    bool shared_bias = true;

    static LowRankPrototypes create(SplitMix64& rng, std::size_t m, std::size_t d, std::size_t rank, bool shared_bias);
    // Throws InvalidConfig unless 1 <= r < min(m, d) and the tensors agree.
    void validate() const;

    std::size_t edges() const { return basis.dim(0); }
    std::size_t rank() const { return basis.dim(1); }
    std::size_t dim() const { return v_base.dim(1); }
    std::vector<Tensor*> parameters();
};

SoftIncidence attention_incidence(const Tensor& nodes, const Tensor& prototypes, const AttentionConfig& cfg);
Tensor aggregate_to_hyperedges(const SoftIncidence& w, const Tensor& nodes);
Tensor disseminate_to_nodes(const Tensor& nodes, const SoftIncidence& w, const Tensor& edge_features,
                            const ProjectionSpec& rho_edge, const ProjectionSpec& rho_node);
SoftIncidence sparsify_topk(const SoftIncidence& w, const SparsityConfig& cfg);
Tensor lowrank_prototypes(const LowRankPrototypes& p, const Tensor& context);

std::size_t lowrank_param_count(std::size_t m, std::size_t d, std::size_t rank, bool shared_bias);
std::size_t count_params_prototypes(const LowRankPrototypes& p);
std::size_t count_params_dense_prototypes(std::size_t m, std::size_t d);

// Header line `heads,n,m`, a line with the three extents, then heads*n rows of m values.
void write_soft_incidence_csv(std::ostream& out, const SoftIncidence& w);
SoftIncidence read_soft_incidence_csv(std::istream& in);
void save_soft_incidence_csv(const std::filesystem::path& path, const SoftIncidence& w);

}  // namespace hyperfuse
