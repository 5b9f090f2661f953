#pragma once

#include "hyperfuse/hypergraph.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

namespace hyperfuse {

struct PipelineConfig {
    std::size_t image_size = 64;  // w == h
    std::size_t c1 = 8;
    std::size_t c2 = 16;
    std::size_t c3 = 32;
    std::size_t d = 32;    // fused intra feature dim
    std::size_t m = 16;    // intra hyperedges
    std::size_t h_e = 8;   // cross hyperedges
    std::size_t rank = 4;
    std::size_t heads = 2;
    double gamma = 0.5;
    RoutingMode sparsity_mode = RoutingMode::Node;
    bool shared_bias = true;
    std::size_t se_ratio = 4;
    double alpha = 0.0;
    double beta = 0.0;
    double gamma_f = 0.0;
    std::uint64_t seed = 0;

    std::array<std::size_t, 3> level_channels() const { return {c1, c2, c3}; }
    // Spatial extent of P3, P4, P5.
    std::array<std::size_t, 3> level_extents() const { return {image_size / 8, image_size / 16, image_size / 32}; }

    // Throws InvalidConfig on any violated constraint.
    void validate() const;
};

// Flat `key = value` lines; `#` starts a comment. Unknown keys are rejected.
PipelineConfig parse_config(std::istream& in);
PipelineConfig load_config(const std::filesystem::path& path);
void write_config(std::ostream& out, const PipelineConfig& cfg);

}  // namespace hyperfuse
