#include "hyperfuse/hypergraph.hpp"

#include "hyperfuse/csv.hpp"
#include "hyperfuse/error.hpp"
#include "hyperfuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <tuple>

namespace hyperfuse {

// ---- incidence -------------------------------------------------------------

IncidenceMatrix::IncidenceMatrix(std::size_t n, std::size_t m, std::vector<std::uint8_t> entries)
    : n_(n), m_(m), entries_(std::move(entries)), node_degree_(n, 0), edge_degree_(m, 0) {
    if (entries_.size() != n * m) throw Error(ErrorKind::ShapeMismatch, "incidence entries do not match n x m");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const auto v = entries_[i * m + j];
            if (v > 1) throw Error(ErrorKind::InvalidConfig, "incidence entries must be 0 or 1");
            node_degree_[i] += v;
            edge_degree_[j] += v;
            ones_ += v;
        }
}

Tensor IncidenceMatrix::to_tensor() const {
    std::vector<double> data(entries_.begin(), entries_.end());
    return Tensor({n_, m_}, std::move(data));
}

IncidenceMatrix build_incidence(const std::vector<std::vector<std::size_t>>& edges, std::size_t n) {
    if (edges.empty()) throw Error(ErrorKind::EmptyHyperedge, "a hypergraph needs at least one hyperedge");
    const std::size_t m = edges.size();
    std::vector<std::uint8_t> entries(n * m, 0);
    for (std::size_t j = 0; j < m; ++j) {
        if (edges[j].empty()) throw Error(ErrorKind::EmptyHyperedge, "hyperedge " + std::to_string(j) + " is empty");
        for (auto i : edges[j]) {
            if (i >= n) throw Error(ErrorKind::IndexOutOfRange, "node " + std::to_string(i) + " >= n = " + std::to_string(n));
            entries[i * m + j] = 1;
        }
    }
    return IncidenceMatrix(n, m, std::move(entries));
}

// ---- configs ---------------------------------------------------------------

AttentionConfig AttentionConfig::for_dim(std::size_t d, std::size_t heads) {
    if (heads == 0 || d == 0 || d % heads != 0)
        throw Error(ErrorKind::InvalidConfig, "feature dim " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
    return {heads, d / heads};
}

void SparsityConfig::validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw Error(ErrorKind::InvalidConfig, "sparsity gamma must lie in (0, 1]");
}

std::size_t SparsityConfig::keep_count(std::size_t m) const {
    validate();
    // gamma * m is nudged down so products like 0.3 * 10 do not round up past an integer.
    const double raw = gamma * static_cast<double>(m);
    const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
    return std::clamp<std::size_t>(k, 1, m);
}

Tensor SoftIncidence::stacked() const {
    if (heads.empty()) throw Error(ErrorKind::ShapeMismatch, "empty soft incidence");
    const std::size_t n = nodes(), m = edges();
    std::vector<double> data;
    data.reserve(heads.size() * n * m);
    for (const auto& h : heads) data.insert(data.end(), h.data().begin(), h.data().end());
    return Tensor({heads.size(), n, m}, std::move(data));
}

// ---- projections -----------------------------------------------------------

ProjectionSpec ProjectionSpec::linear(Tensor weight, Tensor bias) {
    if (weight.rank() != 2 || bias.numel() != weight.dim(0))
        throw Error(ErrorKind::ShapeMismatch, "linear projection weight/bias disagree");
    return {Kind::Linear, std::move(weight), std::move(bias)};
}

ProjectionSpec ProjectionSpec::random_linear(SplitMix64& rng, std::size_t d) {
    return linear(fan_in_init(rng, {d, d}, d), fan_in_init(rng, {d}, d));
}

Tensor ProjectionSpec::apply(const Tensor& rows) const {
    if (kind == Kind::Identity) return rows;
    return hyperfuse::linear(rows, weight, bias);
}

std::size_t ProjectionSpec::param_count() const noexcept {
    return kind == Kind::Identity ? 0 : weight.numel() + bias.numel();
}

std::vector<Tensor*> ProjectionSpec::parameters() {
    if (kind == Kind::Identity) return {};
    return {&weight, &bias};
}

// ---- low-rank prototypes ---------------------------------------------------

LowRankPrototypes LowRankPrototypes::create(SplitMix64& rng, std::size_t m, std::size_t d, std::size_t rank,
                                            bool shared_bias) {
    if (rank == 0 || rank >= std::min(m, d))
        throw Error(ErrorKind::InvalidConfig, "prototype rank must satisfy 1 <= r < min(m, d)");
    LowRankPrototypes p;
    p.basis = fan_in_init(rng, {m, rank}, rank);
    p.ctx_gate = fan_in_init(rng, {d, rank}, d);
    p.v_base = fan_in_init(rng, {rank, d}, rank);
    p.bias = fan_in_init(rng, shared_bias ? Shape{1, d} : Shape{m, d}, rank);
    p.shared_bias = shared_bias;
    return p;
}

void LowRankPrototypes::validate() const {
    if (basis.rank() != 2 || ctx_gate.rank() != 2 || v_base.rank() != 2 || bias.rank() != 2)
        throw Error(ErrorKind::InvalidConfig, "prototype tensors must be matrices");
    const std::size_t m = basis.dim(0), r = basis.dim(1), d = v_base.dim(1);
    if (r == 0 || r >= std::min(m, d)) throw Error(ErrorKind::InvalidConfig, "prototype rank must satisfy 1 <= r < min(m, d)");
    if (v_base.dim(0) != r || ctx_gate.dim(0) != d || ctx_gate.dim(1) != r)
        throw Error(ErrorKind::InvalidConfig, "prototype factor shapes disagree");
    const Shape want = shared_bias ? Shape{1, d} : Shape{m, d};
    if (bias.shape() != want) throw Error(ErrorKind::InvalidConfig, "prototype bias has shape " + shape_to_string(bias.shape()));
}

std::vector<Tensor*> LowRankPrototypes::parameters() { return {&basis, &ctx_gate, &v_base, &bias}; }

Tensor lowrank_prototypes(const LowRankPrototypes& p, const Tensor& context) {
    p.validate();
    const std::size_t d = p.dim();
    if (context.numel() != d)
        throw Error(ErrorKind::ShapeMismatch, "context length " + std::to_string(context.numel()) + " for d = " + std::to_string(d));
    const Tensor gate = sigmoid(matmul(reshape(context, {1, d}), p.ctx_gate));
    const Tensor v_dyn = scale_rows(p.v_base, gate);
    return add_rows(matmul(p.basis, v_dyn), p.bias);
}

std::size_t lowrank_param_count(std::size_t m, std::size_t d, std::size_t rank, bool shared_bias) {
    return m * rank + rank * d + d * rank + (shared_bias ? d : m * d);
}

std::size_t count_params_prototypes(const LowRankPrototypes& p) {
    p.validate();
    return lowrank_param_count(p.edges(), p.dim(), p.rank(), p.shared_bias);
}

std::size_t count_params_dense_prototypes(std::size_t m, std::size_t d) { return m * d; }

// ---- attention, aggregation, dissemination --------------------------------

namespace {

Tensor head_slice(const Tensor& rows, std::size_t head, std::size_t head_dim, std::size_t heads) {
    if (heads == 1) return rows;
    return slice_cols(rows, head * head_dim, (head + 1) * head_dim);
}

Tensor join_heads(std::vector<Tensor> parts) {
    if (parts.size() == 1) return parts.front();
    return concat_cols(parts);
}

void check_soft(const SoftIncidence& w) {
    if (w.heads.empty()) throw Error(ErrorKind::ShapeMismatch, "soft incidence has no heads");
    for (const auto& h : w.heads)
        if (h.rank() != 2 || h.shape() != w.heads.front().shape())
            throw Error(ErrorKind::ShapeMismatch, "soft incidence heads disagree in shape");
}

}  // namespace

SoftIncidence attention_incidence(const Tensor& nodes, const Tensor& prototypes, const AttentionConfig& cfg) {
    if (nodes.rank() != 2 || prototypes.rank() != 2)
        throw Error(ErrorKind::ShapeMismatch, "attention_incidence expects node and prototype matrices");
    const std::size_t n = nodes.dim(0), m = prototypes.dim(0), d = nodes.dim(1);
    if (prototypes.dim(1) != d || d != cfg.dim() || cfg.heads == 0)
        throw Error(ErrorKind::ShapeMismatch, "attention_incidence: dims " + shape_to_string(nodes.shape()) + ", " +
                                                  shape_to_string(prototypes.shape()) + " with " + std::to_string(cfg.heads) + " heads");
    if (n == 0 || m == 0) throw Error(ErrorKind::ShapeMismatch, "attention_incidence needs n, m >= 1");

    const double s = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
    SoftIncidence w;
    w.heads.reserve(cfg.heads);
    for (std::size_t k = 0; k < cfg.heads; ++k) {
        const Tensor vk = head_slice(nodes, k, cfg.head_dim, cfg.heads);
        const Tensor ek = head_slice(prototypes, k, cfg.head_dim, cfg.heads);
        w.heads.push_back(softmax_rows(matmul(vk, transpose(ek)), s));
    }
    return w;
}

Tensor aggregate_to_hyperedges(const SoftIncidence& w, const Tensor& nodes) {
    check_soft(w);
    if (nodes.rank() != 2 || nodes.dim(0) != w.nodes() || nodes.dim(1) % w.head_count() != 0)
        throw Error(ErrorKind::ShapeMismatch, "aggregate_to_hyperedges: nodes " + shape_to_string(nodes.shape()));
    const std::size_t heads = w.head_count(), dh = nodes.dim(1) / heads;
    std::vector<Tensor> parts;
    parts.reserve(heads);
    for (std::size_t k = 0; k < heads; ++k) parts.push_back(matmul(transpose(w.heads[k]), head_slice(nodes, k, dh, heads)));
    return join_heads(std::move(parts));
}

Tensor disseminate_to_nodes(const Tensor& nodes, const SoftIncidence& w, const Tensor& edge_features,
                            const ProjectionSpec& rho_edge, const ProjectionSpec& rho_node) {
    check_soft(w);
    if (nodes.rank() != 2 || edge_features.rank() != 2 || nodes.dim(0) != w.nodes() || edge_features.dim(0) != w.edges() ||
        nodes.dim(1) != edge_features.dim(1) || nodes.dim(1) % w.head_count() != 0)
        throw Error(ErrorKind::ShapeMismatch, "disseminate_to_nodes: nodes " + shape_to_string(nodes.shape()) + ", edges " +
                                                  shape_to_string(edge_features.shape()));
    const std::size_t heads = w.head_count(), dh = nodes.dim(1) / heads;
    const Tensor projected = rho_edge.apply(edge_features);
    if (projected.shape() != edge_features.shape()) throw Error(ErrorKind::ShapeMismatch, "rho_edge changes the feature dim");
    std::vector<Tensor> parts;
    parts.reserve(heads);
    for (std::size_t k = 0; k < heads; ++k) parts.push_back(matmul(w.heads[k], head_slice(projected, k, dh, heads)));
    const Tensor message = rho_node.apply(join_heads(std::move(parts)));
    if (message.shape() != nodes.shape()) throw Error(ErrorKind::ShapeMismatch, "rho_node changes the feature dim");
    return add(nodes, message);
}

// ---- top-k sparsification ---------------------------------------------------

namespace {

// Indices of the k largest values; ties go to the lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    idx.resize(k);
    return idx;
}

}  // namespace

SoftIncidence sparsify_topk(const SoftIncidence& w, const SparsityConfig& cfg) {
    check_soft(w);
    const std::size_t n = w.nodes(), m = w.edges();
    const std::size_t k = cfg.keep_count(m);
    if (k == m) {
        SoftIncidence same = w;
        same.sparsity = cfg;
        return same;
    }

    std::vector<std::vector<double>> masks(w.head_count(), std::vector<double>(n * m, 0.0));
    if (cfg.mode == RoutingMode::Node) {
        for (std::size_t h = 0; h < w.head_count(); ++h)
            for (std::size_t i = 0; i < n; ++i)
                for (auto j : top_k_indices(w.heads[h].data().subspan(i * m, m), k)) masks[h][i * m + j] = 1.0;
    } else {
        std::vector<double> mass(m, 0.0);
        for (const auto& head : w.heads)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) mass[j] += head[i * m + j];
        const auto keep = top_k_indices(mass, k);
        for (auto& mask : masks)
            for (std::size_t i = 0; i < n; ++i)
                for (auto j : keep) mask[i * m + j] = 1.0;
    }

    SoftIncidence out;
    out.sparsity = cfg;
    out.heads.reserve(w.head_count());
    for (std::size_t h = 0; h < w.head_count(); ++h)
        out.heads.push_back(normalize_rows(mul(w.heads[h], Tensor({n, m}, std::move(masks[h])))));
    return out;
}

// ---- CSV export --------------------------------------------------------------

void write_soft_incidence_csv(std::ostream& out, const SoftIncidence& w) {
    check_soft(w);
    const std::size_t m = w.edges();
    out << "heads,n,m\n" << w.head_count() << ',' << w.nodes() << ',' << m << '\n';
    for (const auto& head : w.heads)
        for (std::size_t i = 0; i < head.numel(); ++i) out << format_double(head[i]) << ((i + 1) % m == 0 ? '\n' : ',');
}

SoftIncidence read_soft_incidence_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("heads,n,m", 0) != 0) throw Error(ErrorKind::ParseError, "missing 'heads,n,m' header");
    if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "missing extents line");
    std::size_t dims[3] = {0, 0, 0};
    {
        std::istringstream ss(line);
        char c1 = 0, c2 = 0;
        if (!(ss >> dims[0] >> c1 >> dims[1] >> c2 >> dims[2]) || c1 != ',' || c2 != ',')
            throw Error(ErrorKind::ParseError, "bad extents line '" + line + "'");
    }
    const auto [heads, n, m] = std::tuple{dims[0], dims[1], dims[2]};
    if (heads == 0 || n == 0 || m == 0) throw Error(ErrorKind::ParseError, "zero extent in soft incidence");
    SoftIncidence w;
    for (std::size_t h = 0; h < heads; ++h) {
        std::vector<double> data;
        data.reserve(n * m);
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "truncated soft incidence body");
            std::string_view rest = line;
            for (std::size_t j = 0; j < m; ++j) {
                const auto pos = rest.find(',');
                if ((j + 1 < m) == (pos == std::string_view::npos)) throw Error(ErrorKind::ParseError, "wrong number of columns");
                data.push_back(parse_double(rest.substr(0, pos)));
                if (pos != std::string_view::npos) rest.remove_prefix(pos + 1);
            }
        }
        w.heads.emplace_back(Shape{n, m}, std::move(data));
    }
    return w;
}

void save_soft_incidence_csv(const std::filesystem::path& path, const SoftIncidence& w) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    write_soft_incidence_csv(out, w);
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

}  // namespace hyperfuse
