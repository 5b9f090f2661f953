#include "hyperfuse/pipeline.hpp"

#include "hyperfuse/csv.hpp"
#include "hyperfuse/error.hpp"
#include "hyperfuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace hyperfuse {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kRgbStream = 1;
constexpr std::uint64_t kIrStream = 2;
constexpr std::uint64_t kParamStream = 3;

MultiScaleFeatures random_triple(SplitMix64 rng, const PipelineConfig& cfg) {
    const auto ch = cfg.level_channels();
    const auto ext = cfg.level_extents();
    MultiScaleFeatures f{uniform_tensor(rng, {ch[0], ext[0], ext[0]}, -1.0, 1.0),
                         uniform_tensor(rng, {ch[1], ext[1], ext[1]}, -1.0, 1.0),
                         uniform_tensor(rng, {ch[2], ext[2], ext[2]}, -1.0, 1.0)};
    f.validate();
    return f;
}

void check_triple(const MultiScaleFeatures& f, const PipelineConfig& cfg, const std::string& what) {
    const auto ch = cfg.level_channels();
    const auto ext = cfg.level_extents();
    for (std::size_t i = 0; i < 3; ++i) {
        const Shape want{ch[i], ext[i], ext[i]};
        const Tensor& t = f.level(i + 3);
        if (t.shape() != want)
            throw Error(ErrorKind::ShapeMismatch, what + " P" + std::to_string(i + 3) + " is " + shape_to_string(t.shape()) +
                                                      ", expected " + shape_to_string(want));
    }
}

}  // namespace

ModalityPair synth_features(std::uint64_t seed, const PipelineConfig& cfg) {
    cfg.validate();
    const SplitMix64 root(seed);
    return {random_triple(root.split(kRgbStream), cfg), random_triple(root.split(kIrStream), cfg)};
}

ModalityPair load_features(const fs::path& dir, const PipelineConfig& cfg) {
    cfg.validate();
    auto load = [&](const std::string& modality) {
        MultiScaleFeatures f{load_tensor_csv(dir / (modality + "_p3.csv")), load_tensor_csv(dir / (modality + "_p4.csv")),
                             load_tensor_csv(dir / (modality + "_p5.csv"))};
        check_triple(f, cfg, modality);
        return f;
    };
    return {load("rgb"), load("ir")};
}

PipelineModel PipelineModel::create(const PipelineConfig& cfg) {
    cfg.validate();
    const SplitMix64 root = SplitMix64(cfg.seed).split(kParamStream);
    IntraEnhanceParams::Dims dims;
    dims.level_channels = cfg.level_channels();
    dims.channels = cfg.d;
    dims.edges = cfg.m;
    dims.rank = cfg.rank;
    dims.heads = cfg.heads;
    dims.sparsity = SparsityConfig{cfg.gamma, cfg.sparsity_mode};
    dims.shared_bias = cfg.shared_bias;
    dims.se_ratio = cfg.se_ratio;

    auto rng_rgb = root.split(0), rng_ir = root.split(1), rng_inter = root.split(2), rng_fusion = root.split(3);
    PipelineModel model{IntraEnhanceParams::create(rng_rgb, dims), IntraEnhanceParams::create(rng_ir, dims),
                        InterFuseParams::create(rng_inter, cfg.c3, cfg.h_e, cfg.heads, cfg.c2, cfg.c1),
                        M3fdfpParams::create(rng_fusion, cfg.level_channels(), cfg.se_ratio)};
    for (auto& s : model.fusion.scalars) s = FusionScalars::make(cfg.alpha, cfg.beta, cfg.gamma_f);
    return model;
}

ForwardResult forward(const PipelineModel& model, const ModalityPair& input) {
    ForwardResult r;
    r.raw = input;
    r.h_rgb = intra_enhance(input.rgb, model.intra_rgb, &r.trace_rgb);
    r.h_ir = intra_enhance(input.ir, model.intra_ir, &r.trace_ir);
    r.cross = inter_fuse(r.h_rgb.p5, r.h_ir.p5, model.inter, &r.trace_inter);
    r.fused = m3fdfp_pipeline(input.rgb, input.ir, r.h_rgb, r.h_ir, r.cross, model.fusion);
    return r;
}

void check_shape_contract(const ForwardResult& r, const PipelineConfig& cfg) {
    check_triple(r.raw.rgb, cfg, "raw rgb");
    check_triple(r.raw.ir, cfg, "raw ir");
    check_triple(r.h_rgb, cfg, "intra rgb");
    check_triple(r.h_ir, cfg, "intra ir");
    check_triple(r.cross, cfg, "cross");
    check_triple(r.fused, cfg, "fused");
    const std::size_t s = cfg.level_extents()[2];
    const Shape p5{cfg.c3, s, s};
    if (r.trace_inter.u_updated.shape() != p5 || r.trace_inter.v_updated.shape() != p5)
        throw Error(ErrorKind::ShapeMismatch, "cross-updated maps do not match the P5 extent");
}

// ---- parameter accounting --------------------------------------------------

double ParamReport::reduction_percent(std::size_t dense, std::size_t compact) {
    if (dense == 0) return 0.0;
    return 100.0 * (static_cast<double>(dense) - static_cast<double>(compact)) / static_cast<double>(dense);
}

ParamReport count_params(const PipelineConfig& cfg) {
    const PipelineModel model = PipelineModel::create(cfg);
    ParamReport report;
    auto add_intra = [&](const std::string& name, const IntraEnhanceParams& p) {
        std::size_t convs = 0;
        for (const auto& c : p.out_convs) convs += c.param_count();
        report.items.emplace_back(name + ".fuse_se", p.fuse.param_count());
        report.items.emplace_back(name + ".prototypes", count_params_prototypes(p.proto));
        report.items.emplace_back(name + ".projections", p.rho_edge.param_count() + p.rho_node.param_count());
        report.items.emplace_back(name + ".dsc3k", p.dsc3k.param_count());
        report.items.emplace_back(name + ".out_convs", convs);
    };
    add_intra("intra_rgb", model.intra_rgb);
    add_intra("intra_ir", model.intra_ir);
    report.items.emplace_back("inter.cheg", model.inter.cheg.param_count());
    report.items.emplace_back("inter.chnn", model.inter.chnn.param_count());
    report.items.emplace_back("inter.gate_fusion", model.inter.gate.param_count());
    std::size_t modal = 0;
    for (const auto& m : model.fusion.modal) modal += m.param_count();
    report.items.emplace_back("m3fdfp.modal_fuse_se", modal);
    report.items.emplace_back("m3fdfp.scalars", 3 * model.fusion.scalars.size());
    for (const auto& [name, count] : report.items) report.total += count;

    report.prototype_lowrank_shared = lowrank_param_count(cfg.m, cfg.d, cfg.rank, true);
    report.prototype_lowrank_full = lowrank_param_count(cfg.m, cfg.d, cfg.rank, false);
    report.prototype_dense = count_params_dense_prototypes(cfg.m, cfg.d);
    report.intra_module_lowrank = model.intra_rgb.param_count();
    report.intra_module_dense = report.intra_module_lowrank - count_params_prototypes(model.intra_rgb.proto) + report.prototype_dense;
    return report;
}

void write_param_report(std::ostream& out, const ParamReport& report, const PipelineConfig& cfg) {
    auto pct = [](double v) {
        std::ostringstream ss;
        ss << std::fixed << std::setprecision(2) << v << "%";
        return ss.str();
    };
    out << "# parameter report\n";
    out << "config: m=" << cfg.m << " d=" << cfg.d << " rank=" << cfg.rank << " h_e=" << cfg.h_e << " heads=" << cfg.heads
        << " shared_bias=" << (cfg.shared_bias ? "true" : "false") << "\n\n";
    for (const auto& [name, count] : report.items) out << std::left << std::setw(28) << name << count << '\n';
    out << std::left << std::setw(28) << "total" << report.total << "\n\n";

    out << "# prototype path (m x d = " << cfg.m << " x " << cfg.d << ", rank " << cfg.rank << ")\n";
    out << std::left << std::setw(28) << "dense" << report.prototype_dense << '\n';
    out << std::left << std::setw(28) << "lowrank_shared_bias" << report.prototype_lowrank_shared << "  reduction "
        << pct(ParamReport::reduction_percent(report.prototype_dense, report.prototype_lowrank_shared)) << '\n';
    out << std::left << std::setw(28) << "lowrank_full_bias" << report.prototype_lowrank_full << "  reduction "
        << pct(ParamReport::reduction_percent(report.prototype_dense, report.prototype_lowrank_full)) << "\n\n";

    out << "# one intra enhancer, low-rank vs dense prototypes\n";
    out << std::left << std::setw(28) << "dense_prototypes" << report.intra_module_dense << '\n';
    out << std::left << std::setw(28) << "lowrank_prototypes" << report.intra_module_lowrank << "  reduction "
        << pct(ParamReport::reduction_percent(report.intra_module_dense, report.intra_module_lowrank)) << "\n\n";

    out << "# fusion scalars (alpha, beta, gamma_f) per level\n";
    out << "P3 P4 P5: " << format_double(cfg.alpha) << ", " << format_double(cfg.beta) << ", " << format_double(cfg.gamma_f) << '\n';
}

// ---- image export ----------------------------------------------------------

std::vector<int> grayscale_pixels(const Tensor& image) {
    if (image.numel() == 0) return {};
    const auto data = image.data();
    const auto [lo_it, hi_it] = std::minmax_element(data.begin(), data.end());
    const double lo = *lo_it, hi = *hi_it;
    std::vector<int> pixels(data.size(), 0);
    if (!(hi > lo)) return pixels;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double scaled = 255.0 * (data[i] - lo) / (hi - lo);
        pixels[i] = std::clamp(static_cast<int>(std::lround(scaled)), 0, 255);
    }
    return pixels;
}

std::string encode_pgm(const Tensor& image) {
    if (image.rank() != 2) throw Error(ErrorKind::ShapeMismatch, "graymap export expects a matrix");
    const std::size_t rows = image.dim(0), cols = image.dim(1);
    const auto pixels = grayscale_pixels(image);
    std::ostringstream out;
    out << "P2\n" << cols << ' ' << rows << "\n255\n";
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) out << (c ? " " : "") << pixels[r * cols + c];
        out << '\n';
    }
    return out.str();
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

Tensor channel_mean(const Tensor& map) {
    const std::size_t c = map.dim(0), h = map.dim(1), w = map.dim(2);
    std::vector<double> img(h * w, 0.0);
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t p = 0; p < h * w; ++p) img[p] += map[k * h * w + p];
    for (auto& v : img) v /= static_cast<double>(c);
    return Tensor({h, w}, std::move(img));
}

fs::path with_suffix(const fs::path& stem, const std::string& suffix) { return stem.parent_path() / (stem.filename().string() + suffix); }

}  // namespace

void export_attention(const Tensor& map, const fs::path& stem) {
    save_tensor_csv(with_suffix(stem, ".csv"), map);
    Tensor image;
    if (map.rank() == 3) image = channel_mean(map);
    else if (map.rank() == 2) image = map.detach();
    else throw Error(ErrorKind::ShapeMismatch, "attention export expects a matrix or a c x h x w map");
    write_text(with_suffix(stem, ".pgm"), encode_pgm(image));
}

void export_attention(const SoftIncidence& w, const fs::path& stem) {
    save_soft_incidence_csv(with_suffix(stem, ".csv"), w);
    for (std::size_t k = 0; k < w.head_count(); ++k)
        write_text(with_suffix(stem, "_head" + std::to_string(k) + ".pgm"), encode_pgm(w.heads[k].detach()));
}

// ---- full run --------------------------------------------------------------

RunArtifacts run_forward(const PipelineConfig& cfg, const fs::path& out_dir, const std::optional<fs::path>& csv_dir) {
    cfg.validate();
    const ModalityPair input = csv_dir ? load_features(*csv_dir, cfg) : synth_features(cfg.seed, cfg);
    const PipelineModel model = PipelineModel::create(cfg);
    const ForwardResult r = forward(model, input);
    check_shape_contract(r, cfg);

    RunArtifacts art{out_dir, {}};
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

    auto stage_dir = [&](const std::string& name) {
        fs::create_directories(out_dir / name, ec);
        if (ec) throw Error(ErrorKind::IoError, "cannot create " + (out_dir / name).string());
        return fs::path(name);
    };
    auto map_export = [&](const fs::path& rel, const Tensor& t) {
        export_attention(t, out_dir / rel);
        art.files.push_back(with_suffix(rel, ".csv"));
        art.files.push_back(with_suffix(rel, ".pgm"));
    };
    auto incidence_export = [&](const fs::path& rel, const SoftIncidence& w) {
        export_attention(w, out_dir / rel);
        art.files.push_back(with_suffix(rel, ".csv"));
        for (std::size_t k = 0; k < w.head_count(); ++k) art.files.push_back(with_suffix(rel, "_head" + std::to_string(k) + ".pgm"));
    };
    auto triple_export = [&](const fs::path& dir, const std::string& prefix, const MultiScaleFeatures& f) {
        for (std::size_t level = 3; level <= 5; ++level) map_export(dir / (prefix + "p" + std::to_string(level)), f.level(level));
    };

    const auto raw = stage_dir("b_raw");
    triple_export(raw, "rgb_", r.raw.rgb);
    triple_export(raw, "ir_", r.raw.ir);

    const auto intra = stage_dir("c_intra");
    triple_export(intra, "rgb_", r.h_rgb);
    triple_export(intra, "ir_", r.h_ir);
    map_export(intra / "rgb_fuse_se", r.trace_rgb.fused);
    map_export(intra / "ir_fuse_se", r.trace_ir.fused);
    incidence_export(intra / "rgb_incidence", r.trace_rgb.incidence);
    incidence_export(intra / "ir_incidence", r.trace_ir.incidence);

    const auto cross = stage_dir("d_cross");
    incidence_export(cross / "w_u", r.trace_inter.edges.w_u);
    incidence_export(cross / "w_v", r.trace_inter.edges.w_v);
    map_export(cross / "u_updated", r.trace_inter.u_updated);
    map_export(cross / "v_updated", r.trace_inter.v_updated);

    const auto fused = stage_dir("e_fused");
    triple_export(fused, "c_", r.cross);
    triple_export(fused, "fused_", r.fused);

    std::ostringstream report;
    write_param_report(report, count_params(cfg), cfg);
    write_text(out_dir / "params.txt", report.str());
    art.files.emplace_back("params.txt");

    std::ostringstream config_text;
    write_config(config_text, cfg);
    write_text(out_dir / "config.txt", config_text.str());
    art.files.emplace_back("config.txt");
    return art;
}

}  // namespace hyperfuse
