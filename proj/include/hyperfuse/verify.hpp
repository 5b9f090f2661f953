#pragma once

#include "hyperfuse/hypergraph.hpp"
#include "hyperfuse/inter.hpp"

#include <functional>
#include <iosfwd>
#include <utility>

// Reference implementations written as plain loops over raw values. They do
// not call any tensor op, so agreement with the vectorized path is evidence
// rather than tautology.
namespace hyperfuse::verify {

struct FiniteDiffConfig {
    double epsilon = 1e-5;
    double tolerance = 1e-4;
    // Denominator floor of the relative error, so coordinates whose gradient is
    // numerically zero are judged on absolute error instead.
    double scale_floor = 1e-6;

    void validate() const;
};

using ScalarFn = std::function<double(const Tensor&)>;

// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) per coordinate.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, const FiniteDiffConfig& cfg = {});

// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor).
double relative_error(const Tensor& analytic, const Tensor& numeric, double scale_floor);

// max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|, floor). Used for deep
// compositions, where coordinates with near-zero gradient are dominated by
// cancellation noise in the forward evaluations.
double normwise_relative_error(const Tensor& analytic, const Tensor& numeric, double scale_floor);

constexpr std::size_t kMaxOracleWork = 1000;

// Soft incidence, node->edge aggregation and edge->node dissemination.
// Optional Top-K routing is re-implemented by repeated argmax.
Tensor brute_force_hypergraph(const Tensor& nodes, const Tensor& prototypes, const AttentionConfig& cfg,
                              const ProjectionSpec& rho_edge, const ProjectionSpec& rho_node,
                              const SparsityConfig* sparsity = nullptr);

// Per-head attention weights softmax_j(v_i . e_j / sqrt(d_h)), heads x n x m.
Tensor brute_force_attention(const Tensor& nodes, const Tensor& prototypes, const AttentionConfig& cfg);

// Context mean, prototype shift and both cross updates as literal loops.
Tensor brute_force_cross_prototypes(const Tensor& u, const Tensor& v, const CrossHyperedgeGenParams& p);
std::pair<Tensor, Tensor> brute_force_cross(const Tensor& u, const Tensor& v, const Tensor& prototypes, const AttentionConfig& cfg,
                                            const CrossUpdateParams& rho);

// Runs the invariant suite used by `hyperfuse check`; one line per check.
bool run_check_suite(std::ostream& out);

}  // namespace hyperfuse::verify
