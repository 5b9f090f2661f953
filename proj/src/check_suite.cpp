#include "hyperfuse/error.hpp"
#include "hyperfuse/intra.hpp"
#include "hyperfuse/m3fdfp.hpp"
#include "hyperfuse/ops.hpp"
#include "hyperfuse/verify.hpp"

#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>
#include <ostream>
#include <string>

namespace hyperfuse::verify {

namespace {

struct Check {
    std::string name;
    std::function<bool(std::string&)> run;
};

std::string sci(double v) {
    std::ostringstream out;
    out << std::scientific << std::setprecision(2) << v;
    return out.str();
}

std::size_t between(SplitMix64& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

bool rows_stochastic(const SoftIncidence& w, double tol) {
    for (const auto& head : w.heads) {
        const std::size_t n = head.dim(0), m = head.dim(1);
        for (std::size_t i = 0; i < n; ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                if (head[i * m + j] < 0.0) return false;
                total += head[i * m + j];
            }
            if (std::abs(total - 1.0) > tol) return false;
        }
    }
    return true;
}

std::vector<Check> make_checks() {
    std::vector<Check> checks;

    checks.push_back({"incidence degree conservation", [](std::string& detail) {
        SplitMix64 rng(101);
        for (int t = 0; t < 100; ++t) {
            const std::size_t n = between(rng, 1, 8), m = between(rng, 1, 6);
            std::vector<std::vector<std::size_t>> edges(m);
            for (auto& e : edges) {
                for (std::size_t i = 0; i < n; ++i)
                    if (rng.below(2)) e.push_back(i);
                if (e.empty()) e.push_back(rng.below(n));
            }
            const auto h = build_incidence(edges, n);
            std::size_t nodes = 0, hyper = 0;
            for (auto v : h.node_degrees()) nodes += v;
            for (auto v : h.edge_degrees()) hyper += v;
            if (nodes != hyper || nodes != h.count_ones()) {
                detail = "degree sums disagree";
                return false;
            }
        }
        return true;
    }});

    checks.push_back({"soft incidence rows sum to 1 (dense and Top-K)", [](std::string& detail) {
        SplitMix64 rng(202);
        for (int t = 0; t < 200; ++t) {
            const std::size_t heads = between(rng, 1, 2), dh = between(rng, 1, 3);
            const std::size_t n = between(rng, 1, 6), m = between(rng, 1, 6);
            const auto cfg = AttentionConfig::for_dim(heads * dh, heads);
            const auto w = attention_incidence(uniform_tensor(rng, {n, heads * dh}, -2, 2), uniform_tensor(rng, {m, heads * dh}, -2, 2), cfg);
            const SparsityConfig sc{rng.uniform(0.05, 1.0), rng.below(2) ? RoutingMode::Node : RoutingMode::Global};
            if (!rows_stochastic(w, 1e-9) || !rows_stochastic(sparsify_topk(w, sc), 1e-9)) {
                detail = "row sum off by more than 1e-9";
                return false;
            }
        }
        return true;
    }});

    checks.push_back({"intra hypergraph pass matches loop oracle", [](std::string& detail) {
        SplitMix64 rng(303);
        double worst = 0.0;
        for (int t = 0; t < 100; ++t) {
            const std::size_t n = between(rng, 1, 5), m = between(rng, 1, 5), d = between(rng, 1, 3);
            const auto cfg = AttentionConfig::for_dim(d, 1);
            const Tensor v = uniform_tensor(rng, {n, d}, -1, 1), e = uniform_tensor(rng, {m, d}, -1, 1);
            const auto rho = ProjectionSpec::random_linear(rng, d);
            const auto w = attention_incidence(v, e, cfg);
            const Tensor fast = disseminate_to_nodes(v, w, aggregate_to_hyperedges(w, v), rho, ProjectionSpec::identity());
            worst = std::max(worst, max_abs_diff(fast, brute_force_hypergraph(v, e, cfg, rho, ProjectionSpec::identity())));
        }
        detail = "max |diff| = " + sci(worst);
        return worst <= 1e-10;
    }});

    checks.push_back({"cross update matches loop oracle", [](std::string& detail) {
        SplitMix64 rng(404);
        double worst = 0.0;
        for (int t = 0; t < 100; ++t) {
            const std::size_t m = between(rng, 1, 4), n = between(rng, 1, 4), he = between(rng, 1, 3), d = between(rng, 1, 2);
            auto p = CrossHyperedgeGenParams::create(rng, he, d, 1);
            const Tensor u = uniform_tensor(rng, {m, d}, -1, 1), v = uniform_tensor(rng, {n, d}, -1, 1);
            const auto edges = cheg(u, v, p);
            const auto [u2, v2] = chnn(u, v, edges.w_u, edges.w_v, CrossUpdateParams{});
            const auto [bu, bv] = brute_force_cross(u, v, brute_force_cross_prototypes(u, v, p), p.attn, CrossUpdateParams{});
            worst = std::max({worst, max_abs_diff(u2, bu), max_abs_diff(v2, bv)});
        }
        detail = "max |diff| = " + sci(worst);
        return worst <= 1e-10;
    }});

    checks.push_back({"residual identities are exact", [](std::string& detail) {
        SplitMix64 rng(505);
        const Tensor v = uniform_tensor(rng, {6, 4}, -1, 1), e = uniform_tensor(rng, {3, 4}, -1, 1);
        const auto w = attention_incidence(v, e, AttentionConfig::for_dim(4, 2));
        const auto id = ProjectionSpec::identity();
        if (!bitwise_equal(disseminate_to_nodes(v, w, Tensor::zeros({3, 4}), id, id), v)) {
            detail = "dissemination with zero hyperedges changed V";
            return false;
        }
        const Tensor zeros = Tensor::zeros({5, 4});
        const auto wz = attention_incidence(zeros, e, AttentionConfig::for_dim(4, 2));
        if (!bitwise_equal(chnn(v, zeros, w, wz, CrossUpdateParams{}).first, v)) {
            detail = "cross update with a zero opposite stream changed U";
            return false;
        }
        const auto modal = FuseSEParams::create(rng, 8, 4, 2);
        const Tensor a = uniform_tensor(rng, {4, 2, 2}, -1, 1), b = uniform_tensor(rng, {4, 2, 2}, -1, 1);
        const Tensor h = uniform_tensor(rng, {4, 2, 2}, -1, 1);
        if (!bitwise_equal(m3fdfp_fuse(a, b, h, h, h, FusionScalars{}, modal), modal_fuse_se(a, b, modal))) {
            detail = "zero fusion scalars changed the modal fusion output";
            return false;
        }
        return true;
    }});

    checks.push_back({"tape gradient matches finite differences", [](std::string& detail) {
        SplitMix64 rng(606);
        const Tensor x = uniform_tensor(rng, {3, 4}, -1, 1, true);
        const Tensor c = uniform_tensor(rng, {3, 4}, -1, 1);
        auto f = [&](const Tensor& in) { return sum(mul(softmax_rows(in, 0.7), c)); };
        const Tensor analytic = backward(f(x), x);
        const Tensor numeric = finite_diff_grad([&](const Tensor& in) { return f(in).item(); }, x);
        const double err = relative_error(analytic, numeric, 1e-6);
        detail = "relative error = " + sci(err);
        return err <= 1e-5;
    }});

    checks.push_back({"prototype parameter accounting", [](std::string& detail) {
        const auto shared = lowrank_param_count(16, 32, 4, true);
        const auto full = lowrank_param_count(16, 32, 4, false);
        detail = std::to_string(shared) + " (shared bias) / " + std::to_string(full) + " (full bias) vs dense " +
                 std::to_string(count_params_dense_prototypes(16, 32));
        return shared == 352 && full == 832 && count_params_dense_prototypes(16, 32) == 512;
    }});

    return checks;
}

}  // namespace

bool run_check_suite(std::ostream& out) {
    bool all = true;
    for (const auto& check : make_checks()) {
        std::string detail;
        bool ok = false;
        try {
            ok = check.run(detail);
        } catch (const std::exception& e) {
            detail = e.what();
        }
        all = all && ok;
        out << (ok ? "[PASS] " : "[FAIL] ") << check.name;
        if (!detail.empty()) out << "  (" << detail << ")";
        out << '\n';
    }
    return all;
}

}  // namespace hyperfuse::verify
