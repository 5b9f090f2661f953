#include "hyperfuse/config.hpp"

#include "hyperfuse/csv.hpp"
#include "hyperfuse/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace hyperfuse {

void PipelineConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidConfig, msg); };
    if (image_size == 0 || image_size % 32 != 0) fail("image_size must be a positive multiple of 32");
    if (c1 == 0 || c2 == 0 || c3 == 0 || d == 0) fail("channel counts must be positive");
    if (heads == 0 || d % heads != 0) fail("d must be divisible by heads");
    if (c3 % heads != 0) fail("c3 (cross-modal feature dim) must be divisible by heads");
    if (m == 0 || h_e == 0) fail("hyperedge counts must be positive");
    if (rank == 0 || rank >= std::min(m, d)) fail("rank must satisfy 1 <= rank < min(m, d)");
    if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
    if (se_ratio == 0) fail("se_ratio must be positive");
    for (auto c : {c1, c2, c3, d})
        if (c % se_ratio != 0) fail("se_ratio must divide c1, c2, c3 and d");
    for (double s : {alpha, beta, gamma_f})
        if (!std::isfinite(s)) fail("fusion scalars must be finite");
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_unsigned(std::string_view key, std::string_view value) {
    T out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw Error(ErrorKind::ParseError, "bad integer for '" + std::string(key) + "': '" + std::string(value) + "'");
    return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw Error(ErrorKind::ParseError, "bad boolean for '" + std::string(key) + "': '" + std::string(value) + "'");
}

RoutingMode parse_mode(std::string_view value) {
    if (value == "node") return RoutingMode::Node;
    if (value == "global") return RoutingMode::Global;
    throw Error(ErrorKind::ParseError, "sparsity_mode must be 'node' or 'global'");
}

}  // namespace

PipelineConfig parse_config(std::istream& in) {
    PipelineConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view text = line;
        if (auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
        text = trim(text);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string_view::npos)
            throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string_view key = trim(text.substr(0, eq));
        const std::string_view value = trim(text.substr(eq + 1));
        if (value.empty()) throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": empty value");

        if (key == "image_size") cfg.image_size = parse_unsigned<std::size_t>(key, value);
        else if (key == "c1") cfg.c1 = parse_unsigned<std::size_t>(key, value);
        else if (key == "c2") cfg.c2 = parse_unsigned<std::size_t>(key, value);
        else if (key == "c3") cfg.c3 = parse_unsigned<std::size_t>(key, value);
        else if (key == "d") cfg.d = parse_unsigned<std::size_t>(key, value);
        else if (key == "m") cfg.m = parse_unsigned<std::size_t>(key, value);
        else if (key == "h_e") cfg.h_e = parse_unsigned<std::size_t>(key, value);
        else if (key == "rank") cfg.rank = parse_unsigned<std::size_t>(key, value);
        else if (key == "heads") cfg.heads = parse_unsigned<std::size_t>(key, value);
        else if (key == "gamma") cfg.gamma = parse_double(value);
        else if (key == "sparsity_mode") cfg.sparsity_mode = parse_mode(value);
        else if (key == "shared_bias") cfg.shared_bias = parse_bool(key, value);
        else if (key == "se_ratio") cfg.se_ratio = parse_unsigned<std::size_t>(key, value);
        else if (key == "alpha") cfg.alpha = parse_double(value);
        else if (key == "beta") cfg.beta = parse_double(value);
        else if (key == "gamma_f") cfg.gamma_f = parse_double(value);
        else if (key == "seed") cfg.seed = parse_unsigned<std::uint64_t>(key, value);
        else throw Error(ErrorKind::InvalidConfig, "unknown key '" + std::string(key) + "' on line " + std::to_string(lineno));
    }
    cfg.validate();
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open config " + path.string());
    return parse_config(in);
}

void write_config(std::ostream& out, const PipelineConfig& cfg) {
    out << "image_size = " << cfg.image_size << '\n'
        << "c1 = " << cfg.c1 << '\n'
        << "c2 = " << cfg.c2 << '\n'
        << "c3 = " << cfg.c3 << '\n'
        << "d = " << cfg.d << '\n'
        << "m = " << cfg.m << '\n'
        << "h_e = " << cfg.h_e << '\n'
        << "rank = " << cfg.rank << '\n'
        << "heads = " << cfg.heads << '\n'
        << "gamma = " << format_double(cfg.gamma) << '\n'
        << "sparsity_mode = " << (cfg.sparsity_mode == RoutingMode::Node ? "node" : "global") << '\n'
        << "shared_bias = " << (cfg.shared_bias ? "true" : "false") << '\n'
        << "se_ratio = " << cfg.se_ratio << '\n'
        << "alpha = " << format_double(cfg.alpha) << '\n'
        << "beta = " << format_double(cfg.beta) << '\n'
        << "gamma_f = " << format_double(cfg.gamma_f) << '\n'
        << "seed = " << cfg.seed << '\n';
}

}  // namespace hyperfuse
