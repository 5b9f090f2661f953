#pragma once

#include "hyperfuse/config.hpp"
#include "hyperfuse/features.hpp"
#include "hyperfuse/inter.hpp"
#include "hyperfuse/intra.hpp"
#include "hyperfuse/m3fdfp.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hyperfuse {

struct ModalityPair {
    MultiScaleFeatures rgb;
    MultiScaleFeatures ir;
};

// Stand-in for the two backbones: uniform [-1, 1) maps drawn from SplitMix64
// substreams 1 (rgb) and 2 (ir) of the seed.
ModalityPair synth_features(std::uint64_t seed, const PipelineConfig& cfg);

// Reads {rgb,ir}_p{3,4,5}.csv from dir and checks them against cfg.
ModalityPair load_features(const std::filesystem::path& dir, const PipelineConfig& cfg);

struct PipelineModel {
    IntraEnhanceParams intra_rgb;
    IntraEnhanceParams intra_ir;
    InterFuseParams inter;
    M3fdfpParams fusion;

    // All learnable tensors drawn from substream 3 of cfg.seed; fusion scalars from cfg.
    static PipelineModel create(const PipelineConfig& cfg);
};

struct ForwardResult {
    ModalityPair raw;
    MultiScaleFeatures h_rgb;
    MultiScaleFeatures h_ir;
    IntraTrace trace_rgb;
    IntraTrace trace_ir;
    InterTrace trace_inter;
    MultiScaleFeatures cross;  // C3, C4, C5
    MultiScaleFeatures fused;
};

ForwardResult forward(const PipelineModel& model, const ModalityPair& input);

// Throws ShapeMismatch unless every stage triple has the configured channels
// and the image_size / 8, 16, 32 extents.
void check_shape_contract(const ForwardResult& r, const PipelineConfig& cfg);

struct ParamReport {
    std::vector<std::pair<std::string, std::size_t>> items;
    std::size_t total = 0;

    std::size_t prototype_lowrank_shared = 0;
    std::size_t prototype_lowrank_full = 0;
    std::size_t prototype_dense = 0;
    // Module-level count of one intra enhancer with low-rank vs dense prototypes.
    std::size_t intra_module_lowrank = 0;
    std::size_t intra_module_dense = 0;

    static double reduction_percent(std::size_t dense, std::size_t compact);
};

ParamReport count_params(const PipelineConfig& cfg);
void write_param_report(std::ostream& out, const ParamReport& report, const PipelineConfig& cfg);

// Writes `<stem>.csv` and `<stem>.pgm`. Maps of rank 3 are rendered as their
// channel mean; matrices as-is.
void export_attention(const Tensor& map, const std::filesystem::path& stem);
// Writes `<stem>.csv` (soft incidence layout) and `<stem>_head<k>.pgm` per head.
void export_attention(const SoftIncidence& w, const std::filesystem::path& stem);

// ASCII graymap (P2, maxval 255) of a matrix with linear min-max scaling;
// a constant matrix maps to all zeros.
std::string encode_pgm(const Tensor& image);
std::vector<int> grayscale_pixels(const Tensor& image);

enum class InputSource { Synthetic, Csv };

struct RunArtifacts {
    std::filesystem::path out_dir;
    std::vector<std::filesystem::path> files;  // relative to out_dir, in write order
};

RunArtifacts run_forward(const PipelineConfig& cfg, const std::filesystem::path& out_dir,
                         const std::optional<std::filesystem::path>& csv_dir = std::nullopt);

}  // namespace hyperfuse
