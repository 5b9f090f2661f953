#include "hyperfuse/verify.hpp"

#include "hyperfuse/error.hpp"

#include <algorithm>
#include <cmath>

namespace hyperfuse::verify {

void FiniteDiffConfig::validate() const {
    if (!(epsilon > 0.0)) throw Error(ErrorKind::InvalidConfig, "finite-difference epsilon must be positive");
}

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, const FiniteDiffConfig& cfg) {
    cfg.validate();
    std::vector<double> grad(x.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double plus = f(x.with_value(i, x[i] + cfg.epsilon));
        const double minus = f(x.with_value(i, x[i] - cfg.epsilon));
        if (!std::isfinite(plus) || !std::isfinite(minus))
            throw Error(ErrorKind::NonFiniteEvaluation, "objective is not finite near coordinate " + std::to_string(i));
        grad[i] = (plus - minus) / (2.0 * cfg.epsilon);
    }
    return Tensor(x.shape(), std::move(grad));
}

double relative_error(const Tensor& analytic, const Tensor& numeric, double scale_floor) {
    if (analytic.shape() != numeric.shape()) throw Error(ErrorKind::ShapeMismatch, "gradient shapes differ");
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.numel(); ++i) {
        const double a = analytic[i], n = numeric[i];
        const double denom = std::max({std::abs(a), std::abs(n), scale_floor});
        worst = std::max(worst, std::abs(a - n) / denom);
    }
    return worst;
}

double normwise_relative_error(const Tensor& analytic, const Tensor& numeric, double scale_floor) {
    if (analytic.shape() != numeric.shape()) throw Error(ErrorKind::ShapeMismatch, "gradient shapes differ");
    double diff = 0.0, scale = scale_floor;
    for (std::size_t i = 0; i < analytic.numel(); ++i) {
        diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
        scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
    }
    return diff / scale;
}

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix to_rows(const Tensor& t) {
    if (t.rank() != 2) throw Error(ErrorKind::ShapeMismatch, "oracle expects matrices");
    const std::size_t n = t.shape()[0], d = t.shape()[1];
    Matrix rows(n, std::vector<double>(d));
    const auto data = t.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) rows[i][k] = data[i * d + k];
    return rows;
}

Tensor from_rows(const Matrix& rows, std::size_t d) {
    std::vector<double> flat;
    flat.reserve(rows.size() * d);
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor({rows.size(), d}, std::move(flat));
}

std::vector<double> project(const ProjectionSpec& rho, const std::vector<double>& x) {
    if (rho.kind == ProjectionSpec::Kind::Identity) return x;
    const auto w = rho.weight.data();
    const auto b = rho.bias.data();
    const std::size_t out = rho.weight.shape()[0], in = rho.weight.shape()[1];
    if (in != x.size()) throw Error(ErrorKind::ShapeMismatch, "oracle projection width");
    std::vector<double> y(out);
    for (std::size_t o = 0; o < out; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[i];
        y[o] = acc + b[o];
    }
    return y;
}

// weights[head][i][j]
using HeadWeights = std::vector<Matrix>;

HeadWeights attention_loops(const Matrix& nodes, const Matrix& protos, const AttentionConfig& cfg) {
    const std::size_t n = nodes.size(), m = protos.size(), dh = cfg.head_dim;
    HeadWeights w(cfg.heads, Matrix(n, std::vector<double>(m)));
    const long double scale = 1.0L / std::sqrt(static_cast<long double>(dh));
    for (std::size_t h = 0; h < cfg.heads; ++h)
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<long double> e(m);
            long double total = 0.0L;
            for (std::size_t j = 0; j < m; ++j) {
                long double dot = 0.0L;
                for (std::size_t k = h * dh; k < (h + 1) * dh; ++k) dot += static_cast<long double>(nodes[i][k]) * protos[j][k];
                e[j] = std::exp(dot * scale);
                total += e[j];
            }
            for (std::size_t j = 0; j < m; ++j) w[h][i][j] = static_cast<double>(e[j] / total);
        }
    return w;
}

void sparsify_loops(HeadWeights& w, const SparsityConfig& cfg) {
    const std::size_t n = w[0].size(), m = w[0][0].size();
    const std::size_t k = cfg.keep_count(m);
    if (k == m) return;
    auto pick = [k](std::vector<double> score) {
        // Repeated argmax; strict '>' keeps the lowest index on ties.
        std::vector<bool> keep(score.size(), false);
        for (std::size_t round = 0; round < k; ++round) {
            std::size_t best = score.size();
            for (std::size_t j = 0; j < score.size(); ++j)
                if (!keep[j] && (best == score.size() || score[j] > score[best])) best = j;
            keep[best] = true;
        }
        return keep;
    };
    auto renormalize = [](std::vector<double>& row, const std::vector<bool>& keep) {
        double total = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j)
            if (keep[j]) total += row[j];
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = keep[j] ? row[j] / total : 0.0;
    };
    if (cfg.mode == RoutingMode::Node) {
        for (auto& head : w)
            for (auto& row : head) renormalize(row, pick(row));
    } else {
        std::vector<double> mass(m, 0.0);
        for (const auto& head : w)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) mass[j] += head[i][j];
        const auto keep = pick(mass);
        for (auto& head : w)
            for (auto& row : head) renormalize(row, keep);
    }
}

// H_j = sum_i W[i,j] v_i, per head column block.
Matrix aggregate_loops(const HeadWeights& w, const Matrix& nodes, std::size_t dh) {
    const std::size_t n = nodes.size(), m = w[0][0].size(), d = nodes[0].size();
    Matrix edges(m, std::vector<double>(d, 0.0));
    for (std::size_t h = 0; h < w.size(); ++h)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = h * dh; k < (h + 1) * dh; ++k) edges[j][k] += w[h][i][j] * nodes[i][k];
    return edges;
}

// v_i + rho_node(sum_j W[i,j] rho_edge(H_j)).
Matrix disseminate_loops(const Matrix& nodes, const HeadWeights& w, const Matrix& edges, std::size_t dh,
                         const ProjectionSpec& rho_edge, const ProjectionSpec& rho_node) {
    const std::size_t n = nodes.size(), m = edges.size(), d = nodes[0].size();
    Matrix projected(m);
    for (std::size_t j = 0; j < m; ++j) projected[j] = project(rho_edge, edges[j]);
    Matrix out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> message(d, 0.0);
        for (std::size_t h = 0; h < w.size(); ++h)
            for (std::size_t j = 0; j < m; ++j)
                for (std::size_t k = h * dh; k < (h + 1) * dh; ++k) message[k] += w[h][i][j] * projected[j][k];
        message = project(rho_node, message);
        out[i] = nodes[i];
        for (std::size_t k = 0; k < d; ++k) out[i][k] += message[k];
    }
    return out;
}

void check_common(const Tensor& nodes, const Tensor& prototypes, const AttentionConfig& cfg) {
    if (nodes.rank() != 2 || prototypes.rank() != 2 || nodes.shape()[1] != prototypes.shape()[1] ||
        nodes.shape()[1] != cfg.dim() || cfg.heads == 0)
        throw Error(ErrorKind::ShapeMismatch, "oracle: inconsistent dims");
    if (nodes.shape()[0] == 0 || prototypes.shape()[0] == 0) throw Error(ErrorKind::ShapeMismatch, "oracle: empty instance");
}

}  // namespace

Tensor brute_force_attention(const Tensor& nodes, const Tensor& prototypes, const AttentionConfig& cfg) {
    check_common(nodes, prototypes, cfg);
    const auto w = attention_loops(to_rows(nodes), to_rows(prototypes), cfg);
    const std::size_t n = nodes.shape()[0], m = prototypes.shape()[0];
    std::vector<double> flat;
    for (const auto& head : w)
        for (const auto& row : head) flat.insert(flat.end(), row.begin(), row.end());
    return Tensor({cfg.heads, n, m}, std::move(flat));
}

Tensor brute_force_hypergraph(const Tensor& nodes, const Tensor& prototypes, const AttentionConfig& cfg,
                              const ProjectionSpec& rho_edge, const ProjectionSpec& rho_node, const SparsityConfig* sparsity) {
    check_common(nodes, prototypes, cfg);
    const std::size_t n = nodes.shape()[0], m = prototypes.shape()[0], d = nodes.shape()[1];
    if (n * m * d > kMaxOracleWork) throw Error(ErrorKind::InstanceTooLarge, "n*m*d exceeds " + std::to_string(kMaxOracleWork));
    const Matrix v = to_rows(nodes);
    auto w = attention_loops(v, to_rows(prototypes), cfg);
    if (sparsity) sparsify_loops(w, *sparsity);
    const Matrix edges = aggregate_loops(w, v, cfg.head_dim);
    return from_rows(disseminate_loops(v, w, edges, cfg.head_dim, rho_edge, rho_node), d);
}

Tensor brute_force_cross_prototypes(const Tensor& u, const Tensor& v, const CrossHyperedgeGenParams& p) {
    const Matrix ur = to_rows(u), vr = to_rows(v);
    if (ur.empty() || vr.empty()) throw Error(ErrorKind::EmptyNodeSet, "oracle: empty node set");
    const std::size_t d = ur[0].size(), edges = p.base.shape()[0];
    std::vector<double> context(2 * d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
        for (const auto& row : ur) context[k] += row[k];
        for (const auto& row : vr) context[d + k] += row[k];
        context[k] /= static_cast<double>(ur.size());
        context[d + k] /= static_cast<double>(vr.size());
    }
    const auto base = p.base.data(), w = p.ctx_weight.data(), b = p.ctx_bias.data();
    std::vector<double> out(edges * d);
    for (std::size_t o = 0; o < edges * d; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < 2 * d; ++i) acc += w[o * 2 * d + i] * context[i];
        out[o] = base[o] + (acc + b[o]);
    }
    return Tensor({edges, d}, std::move(out));
}

std::pair<Tensor, Tensor> brute_force_cross(const Tensor& u, const Tensor& v, const Tensor& prototypes, const AttentionConfig& cfg,
                                            const CrossUpdateParams& rho) {
    check_common(u, prototypes, cfg);
    check_common(v, prototypes, cfg);
    const std::size_t m = u.shape()[0], n = v.shape()[0], edges = prototypes.shape()[0], d = u.shape()[1];
    if ((m + n) * edges * d > kMaxOracleWork) throw Error(ErrorKind::InstanceTooLarge, "(m+n)*h_e*d exceeds " + std::to_string(kMaxOracleWork));
    const Matrix ur = to_rows(u), vr = to_rows(v), er = to_rows(prototypes);
    const auto wu = attention_loops(ur, er, cfg);
    const auto wv = attention_loops(vr, er, cfg);
    const Matrix hu = aggregate_loops(wu, ur, cfg.head_dim);
    const Matrix hv = aggregate_loops(wv, vr, cfg.head_dim);
    Matrix u_next = disseminate_loops(ur, wu, hv, cfg.head_dim, rho.rho_edge_v, rho.rho_node_u);
    Matrix v_next = disseminate_loops(vr, wv, hu, cfg.head_dim, rho.rho_edge_u, rho.rho_node_v);
    return {from_rows(u_next, d), from_rows(v_next, d)};
}

}  // namespace hyperfuse::verify
