// Acceptance suite: one line per criterion, nonzero exit if any fails.
#include "hyperfuse/config.hpp"
#include "hyperfuse/csv.hpp"
#include "hyperfuse/error.hpp"
#include "hyperfuse/ops.hpp"
#include "hyperfuse/pipeline.hpp"
#include "hyperfuse/verify.hpp"
#include "dir_compare.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace hyperfuse;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;
};

std::size_t between(SplitMix64& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

std::string sci(double v) {
    std::ostringstream out;
    out << std::scientific << std::setprecision(2) << v;
    return out.str();
}

void require(Outcome& o, bool cond, const std::string& what) {
    if (!cond && o.ok) {
        o.ok = false;
        o.detail = what;
    }
}

bool rows_stochastic(const SoftIncidence& w, double tol) {
    for (const auto& head : w.heads)
        for (std::size_t i = 0; i < head.dim(0); ++i) {
            double total = 0.0;
            for (std::size_t j = 0; j < head.dim(1); ++j) {
                if (!(head.at({i, j}) >= 0.0)) return false;
                total += head.at({i, j});
            }
            if (std::abs(total - 1.0) > tol) return false;
        }
    return true;
}

Tensor readout(const Tensor& out, std::uint64_t seed) {
    SplitMix64 rng(seed);
    return sum(mul(out, uniform_tensor(rng, out.shape(), -1.0, 1.0)));
}

Tensor readout(const MultiScaleFeatures& f) { return add(add(readout(f.p3, 1), readout(f.p4, 2)), readout(f.p5, 3)); }

// Normwise relative error of the full gradient over a parameter bundle
// (all tensors flattened into one vector). `normwise == false` takes the
// worst per-coordinate relative error instead.
double bundle_error(const std::vector<Tensor*>& params, const std::function<Tensor()>& loss, bool normwise) {
    std::vector<double> analytic_all, numeric_all;
    double worst = 0.0;
    for (Tensor* param : params) {
        const Tensor saved = *param;
        const Tensor x = saved.detach(true);
        auto at = [&](const Tensor& value) {
            *param = value;
            return loss();
        };
        const Tensor analytic = backward(at(x), x);
        const Tensor numeric = verify::finite_diff_grad([&](const Tensor& in) { return at(in).item(); }, x);
        *param = saved;
        analytic_all.insert(analytic_all.end(), analytic.data().begin(), analytic.data().end());
        numeric_all.insert(numeric_all.end(), numeric.data().begin(), numeric.data().end());
        worst = std::max(worst, verify::relative_error(analytic, numeric, 1e-6));
    }
    if (!normwise) return worst;
    const Shape shape{analytic_all.size()};
    return verify::normwise_relative_error(Tensor(shape, analytic_all), Tensor(shape, numeric_all), 1e-12);
}

MultiScaleFeatures random_triple(SplitMix64& rng, std::array<std::size_t, 3> c, std::size_t s) {
    return {uniform_tensor(rng, {c[0], 4 * s, 4 * s}, -1, 1), uniform_tensor(rng, {c[1], 2 * s, 2 * s}, -1, 1),
            uniform_tensor(rng, {c[2], s, s}, -1, 1)};
}

Outcome ac1_intra_oracle() {
    SplitMix64 rng(1001);
    double worst = 0.0;
    const int instances = 500;
    for (int t = 0; t < instances; ++t) {
        const std::size_t n = between(rng, 1, 5), m = between(rng, 1, 5), d = between(rng, 1, 3);
        const auto cfg = AttentionConfig::for_dim(d, 1);
        const Tensor v = uniform_tensor(rng, {n, d}, -2, 2), e = uniform_tensor(rng, {m, d}, -2, 2);
        const auto rho_edge = t % 2 ? ProjectionSpec::random_linear(rng, d) : ProjectionSpec::identity();
        const auto rho_node = t % 3 ? ProjectionSpec::random_linear(rng, d) : ProjectionSpec::identity();
        const auto w = attention_incidence(v, e, cfg);
        const Tensor fast = disseminate_to_nodes(v, w, aggregate_to_hyperedges(w, v), rho_edge, rho_node);
        worst = std::max(worst, max_abs_diff(fast, verify::brute_force_hypergraph(v, e, cfg, rho_edge, rho_node)));
    }
    return {worst <= 1e-10, std::to_string(instances) + " instances, max |diff| " + sci(worst) + " (bound 1e-10)"};
}

Outcome ac2_cross_oracle() {
    SplitMix64 rng(1002);
    double worst = 0.0;
    const int instances = 500;
    for (int t = 0; t < instances; ++t) {
        const std::size_t m = between(rng, 1, 4), n = between(rng, 1, 4), h_e = between(rng, 1, 3), d = between(rng, 1, 2);
        const auto p = CrossHyperedgeGenParams::create(rng, h_e, d, 1);
        CrossUpdateParams rho;
        if (t % 2) {
            rho.rho_edge_u = ProjectionSpec::random_linear(rng, d);
            rho.rho_edge_v = ProjectionSpec::random_linear(rng, d);
            rho.rho_node_u = ProjectionSpec::random_linear(rng, d);
            rho.rho_node_v = ProjectionSpec::random_linear(rng, d);
        }
        const Tensor u = uniform_tensor(rng, {m, d}, -2, 2), v = uniform_tensor(rng, {n, d}, -2, 2);
        const auto edges = cheg(u, v, p);
        const auto [u2, v2] = chnn(u, v, edges.w_u, edges.w_v, rho);
        const auto [bu, bv] = verify::brute_force_cross(u, v, verify::brute_force_cross_prototypes(u, v, p), p.attn, rho);
        worst = std::max({worst, max_abs_diff(u2, bu), max_abs_diff(v2, bv)});
    }
    return {worst <= 1e-10, std::to_string(instances) + " instances, max |diff| " + sci(worst) + " (bound 1e-10)"};
}

Outcome ac3_normalization() {
    SplitMix64 rng(1003);
    Outcome o;
    const int cases = 2000;
    for (int t = 0; t < cases && o.ok; ++t) {
        const std::size_t heads = between(rng, 1, 3), dh = between(rng, 1, 3), n = between(rng, 1, 8), m = between(rng, 1, 8);
        const auto cfg = AttentionConfig::for_dim(heads * dh, heads);
        const double spread = rng.uniform(0.1, 20.0);
        const auto w = attention_incidence(uniform_tensor(rng, {n, cfg.dim()}, -spread, spread), uniform_tensor(rng, {m, cfg.dim()}, -1, 1), cfg);
        const SparsityConfig sc{rng.uniform(0.01, 1.0), t % 2 ? RoutingMode::Node : RoutingMode::Global};
        require(o, rows_stochastic(w, 1e-9), "dense row sum off at case " + std::to_string(t));
        require(o, rows_stochastic(sparsify_topk(w, sc), 1e-9), "sparse row sum off at case " + std::to_string(t));
        for (auto mode : {RoutingMode::Node, RoutingMode::Global}) {
            const auto same = sparsify_topk(w, SparsityConfig{1.0, mode});
            for (std::size_t k = 0; k < heads; ++k) require(o, bitwise_equal(same.heads[k], w.heads[k]), "gamma = 1 changed bits");
        }
        if (t % 4 == 0) {
            const auto p = CrossHyperedgeGenParams::create(rng, between(rng, 1, 6), cfg.dim(), heads);
            const auto edges = cheg(uniform_tensor(rng, {n, cfg.dim()}, -2, 2), uniform_tensor(rng, {m, cfg.dim()}, -2, 2), p);
            require(o, rows_stochastic(edges.w_u, 1e-9) && rows_stochastic(edges.w_v, 1e-9), "cross row sum off");
        }
    }
    if (o.ok) o.detail = std::to_string(cases) + " cases, dense + Top-K rows within 1e-9, gamma = 1 bit-identical";
    return o;
}

Outcome ac4_residuals() {
    SplitMix64 rng(1004);
    Outcome o;
    const auto id = ProjectionSpec::identity();
    for (int t = 0; t < 100 && o.ok; ++t) {
        const std::size_t n = between(rng, 1, 8), m = between(rng, 1, 6), heads = between(rng, 1, 2), d = 2 * heads;
        const auto cfg = AttentionConfig::for_dim(d, heads);
        const Tensor v = uniform_tensor(rng, {n, d}, -2, 2), e = uniform_tensor(rng, {m, d}, -2, 2);
        const auto w = attention_incidence(v, e, cfg);
        require(o, bitwise_equal(disseminate_to_nodes(v, w, Tensor::zeros({m, d}), id, id), v), "zero hyperedges changed V");

        const Tensor zeros = Tensor::zeros({between(rng, 1, 6), d});
        const auto edges = cheg(v, zeros, CrossHyperedgeGenParams::create(rng, m, d, heads));
        require(o, bitwise_equal(chnn(v, zeros, edges.w_u, edges.w_v, CrossUpdateParams{}).first, v), "zero opposite stream changed U");
        require(o, bitwise_equal(chnn(zeros, v, edges.w_v, edges.w_u, CrossUpdateParams{}).second, v), "zero opposite stream changed V");

        const auto p = M3fdfpParams::create(rng, {4, 4, 8}, 2);
        const auto rgb = random_triple(rng, {4, 4, 8}, 1), ir = random_triple(rng, {4, 4, 8}, 1);
        const auto h = random_triple(rng, {4, 4, 8}, 1), g = random_triple(rng, {4, 4, 8}, 1), c = random_triple(rng, {4, 4, 8}, 1);
        const auto fused = m3fdfp_pipeline(rgb, ir, h, g, c, p);
        for (std::size_t i = 0; i < 3; ++i)
            require(o, bitwise_equal(fused.level(3 + i), modal_fuse_se(rgb.level(3 + i), ir.level(3 + i), p.modal[i])),
                    "zero scalars changed the fused output");
    }
    if (o.ok) o.detail = "100 instances each: dissemination, cross update (both streams), M3FDFP zero scalars; all bitwise";
    return o;
}

Outcome ac5_gradients() {
    SplitMix64 rng(1005);
    IntraEnhanceParams::Dims dims;
    dims.level_channels = {4, 4, 8};
    dims.channels = 8;
    dims.edges = 4;
    dims.rank = 2;
    dims.heads = 2;
    dims.sparsity = SparsityConfig{0.5, RoutingMode::Node};
    dims.se_ratio = 2;
    auto intra = IntraEnhanceParams::create(rng, dims);
    intra.rho_edge = ProjectionSpec::random_linear(rng, 8);
    intra.rho_node = ProjectionSpec::random_linear(rng, 8);
    const auto f = random_triple(rng, {4, 4, 8}, 2);  // P3 at 8 x 8
    const double intra_err = bundle_error(intra.parameters(), [&] { return readout(intra_enhance(f, intra)); }, true);

    auto inter = InterFuseParams::create(rng, 8, 3, 2, 4, 4);
    inter.chnn.rho_edge_u = ProjectionSpec::random_linear(rng, 8);
    inter.chnn.rho_node_v = ProjectionSpec::random_linear(rng, 8);
    const Tensor a = uniform_tensor(rng, {8, 2, 2}, -1, 1), b = uniform_tensor(rng, {8, 2, 2}, -1, 1);
    const double inter_err = bundle_error(inter.parameters(), [&] { return readout(inter_fuse(a, b, inter)); }, true);

    auto fusion = M3fdfpParams::create(rng, {4, 4, 8}, 2);
    for (std::size_t i = 0; i < 3; ++i) fusion.scalars[i] = FusionScalars::make(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const auto rgb = random_triple(rng, {4, 4, 8}, 2), ir = random_triple(rng, {4, 4, 8}, 2);
    const auto h = random_triple(rng, {4, 4, 8}, 2), g = random_triple(rng, {4, 4, 8}, 2), c = random_triple(rng, {4, 4, 8}, 2);
    std::vector<Tensor*> scalars;
    for (auto& s : fusion.scalars)
        for (auto* t : s.parameters()) scalars.push_back(t);
    const double scalar_err = bundle_error(scalars, [&] { return readout(m3fdfp_pipeline(rgb, ir, h, g, c, fusion)); }, false);

    const bool ok = intra_err <= 1e-4 && inter_err <= 1e-4 && scalar_err <= 1e-6;
    return {ok, "intra " + sci(intra_err) + ", inter " + sci(inter_err) + " (bound 1e-4); M3FDFP scalars " + sci(scalar_err) +
                    " (bound 1e-6)"};
}

Outcome ac6_param_accounting() {
    PipelineConfig cfg;  // m = 16, d = 32, r = 4, shared bias
    const auto report = count_params(cfg);
    Outcome o;
    require(o, report.prototype_lowrank_shared == 352 && report.prototype_dense == 512 && report.prototype_lowrank_full == 832,
            "prototype counts differ from the closed form");
    for (std::size_t m = 2; m <= 32 && o.ok; ++m)
        for (std::size_t d = 2; d <= 32; ++d)
            for (std::size_t r = 1; r < std::min(m, d); ++r) {
                const std::size_t shared = m * r + r * d + d * r + d, full = m * r + r * d + d * r + m * d;
                require(o, lowrank_param_count(m, d, r, true) == shared && lowrank_param_count(m, d, r, false) == full &&
                               count_params_dense_prototypes(m, d) == m * d,
                        "closed form mismatch");
            }
    std::size_t items = 0;
    for (const auto& [name, count] : report.items) items += count;
    require(o, items == report.total, "total is not the sum of module counts");
    const double reduction = ParamReport::reduction_percent(report.prototype_dense, report.prototype_lowrank_shared);
    require(o, reduction >= 14.0, "prototype reduction below 14%");
    if (o.ok) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(2) << "prototype path 352 vs dense 512, reduction " << reduction
          << "% (>= 14%); full bias 832; intra module " << report.intra_module_lowrank << " vs " << report.intra_module_dense;
        o.detail = s.str();
    }
    return o;
}

void expect_extent(Outcome& o, const Tensor& t, std::size_t extent, const std::string& name) {
    require(o, t.rank() == 3 && t.dim(1) == extent && t.dim(2) == extent, name + " has shape " + shape_to_string(t.shape()));
}

Outcome ac7_shape_contract() {
    PipelineConfig cfg;
    cfg.seed = 7;
    Outcome o;
    for (std::uint64_t seed : {7u, 8u, 9u}) {
        cfg.seed = seed;
        const auto r = forward(PipelineModel::create(cfg), synth_features(seed, cfg));
        try {
            check_shape_contract(r, cfg);
        } catch (const Error& e) {
            require(o, false, e.what());
        }
        for (const auto* f : {&r.raw.rgb, &r.raw.ir, &r.h_rgb, &r.h_ir, &r.cross, &r.fused}) {
            expect_extent(o, f->p3, 8, "P3");
            expect_extent(o, f->p4, 4, "P4");
            expect_extent(o, f->p5, 2, "P5");
        }
        expect_extent(o, r.trace_rgb.fused, 4, "intra fusion map");
        expect_extent(o, r.trace_inter.u_updated, 2, "cross-updated map");
    }
    if (o.ok) o.detail = "64 x 64 input: every stage triple at 8x8 / 4x4 / 2x2 (3 seeds)";
    return o;
}

int run_cli(const std::string& threads, const fs::path& config, const fs::path& out) {
    const std::string cmd = "HYPERFUSE_THREADS=" + threads + " \"" HYPERFUSE_CLI_PATH "\" run --config \"" + config.string() +
                            "\" --out \"" + out.string() + "\" > /dev/null";
    return std::system(cmd.c_str());
}

Outcome ac8_determinism() {
    const auto root = hftest::scratch_dir("acceptance_det");
    PipelineConfig cfg;
    cfg.seed = 7;
    {
        std::ofstream out(root / "run.cfg");
        write_config(out, cfg);
    }
    Outcome o;
    require(o, run_cli("1", root / "run.cfg", root / "t1") == 0, "first CLI run failed");
    require(o, run_cli("4", root / "run.cfg", root / "t4") == 0, "second CLI run failed");
    if (o.ok) {
        const std::string diff = hftest::compare_trees(root / "t1", root / "t4");
        require(o, diff.empty(), diff);
        if (o.ok) o.detail = std::to_string(hftest::relative_files(root / "t1").size()) + " files byte-identical across 1 and 4 threads";
    }
    fs::remove_all(root);
    return o;
}

bool valid_pgm(const std::string& text) {
    std::istringstream in(text);
    std::string magic;
    long w = 0, h = 0, maxval = 0;
    if (!(in >> magic >> w >> h >> maxval) || magic != "P2" || w <= 0 || h <= 0 || maxval != 255) return false;
    long count = 0, v = 0;
    while (in >> v) {
        if (v < 0 || v > 255) return false;
        ++count;
    }
    return in.eof() && count == w * h;
}

Outcome ac9_smoke() {
    const auto dir = hftest::scratch_dir("acceptance_smoke");
    PipelineConfig cfg;
    cfg.seed = 7;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    const auto art = run_forward(cfg, dir);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    require(o, seconds < 10.0, "run took " + std::to_string(seconds) + " s");
    for (const char* stage : {"b_raw", "c_intra", "d_cross", "e_fused"})
        require(o, fs::is_directory(dir / stage) && !fs::is_empty(dir / stage), std::string("missing stage group ") + stage);
    std::size_t csvs = 0, pgms = 0;
    for (const auto& rel : art.files) {
        const auto path = dir / rel;
        try {
            if (rel.extension() == ".pgm") {
                require(o, valid_pgm(hftest::slurp(path)), "bad graymap " + rel.string());
                ++pgms;
            } else if (rel.extension() == ".csv") {
                std::ifstream in(path, std::ios::binary);
                if (hftest::slurp(path).rfind("heads,", 0) == 0) read_soft_incidence_csv(in);
                else read_tensor_csv(in);  // rejects non-finite values
                ++csvs;
            }
        } catch (const Error& e) {
            require(o, false, rel.string() + ": " + e.what());
        }
    }
    if (o.ok) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(2) << seconds << " s, 4 stage groups, " << csvs << " finite CSV tensors, " << pgms
          << " valid graymaps";
        o.detail = s.str();
    }
    fs::remove_all(dir);
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"AC1 intra oracle equivalence", ac1_intra_oracle},   {"AC2 cross oracle equivalence", ac2_cross_oracle},
        {"AC3 normalization suite", ac3_normalization},       {"AC4 residual identities", ac4_residuals},
        {"AC5 gradient checks", ac5_gradients},               {"AC6 parameter accounting", ac6_param_accounting},
        {"AC7 shape contract", ac7_shape_contract},           {"AC8 determinism", ac8_determinism},
        {"AC9 end-to-end smoke", ac9_smoke},
    };
    const double limits[] = {5, 5, 0, 0, 60, 0, 0, 0, 10};
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (limits[i] > 0 && seconds >= limits[i]) {
            o.ok = false;
            o.detail += "; runtime over " + std::to_string(static_cast<int>(limits[i])) + " s";
        }
        failed += !o.ok;
        std::cout << (o.ok ? "[PASS] " : "[FAIL] ") << criteria[i].first << ": " << o.detail << " [" << std::fixed << std::setprecision(3)
                  << seconds << " s]" << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
