#include "hyperfuse/config.hpp"
#include "hyperfuse/error.hpp"
#include "hyperfuse/pipeline.hpp"
#include "hyperfuse/tensor.hpp"
#include "hyperfuse/verify.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

namespace {

std::optional<std::uint64_t> env_u64(const char* name) {
    const char* raw = std::getenv(name);
    if (!raw || !*raw) return std::nullopt;
    std::uint64_t v = 0;
    const std::string_view text(raw);
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw hyperfuse::Error(hyperfuse::ErrorKind::InvalidConfig, std::string(name) + " is not an unsigned integer");
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hyperfuse: hypergraph attention fusion of RGB and thermal feature pyramids"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "Internal worker threads (default: HYPERFUSE_THREADS or 1)");

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir = "hyperfuse_out";
    std::string csv_dir;

    auto* run = app.add_subcommand("run", "Run the forward pipeline and write per-stage artifacts");
    run->add_option("--config", config_path, "Config file (key = value lines)")->required()->check(CLI::ExistingFile);
    auto* seed_opt = run->add_option("--seed", seed, "Seed override (takes precedence over HYPERFUSE_SEED)");
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--from-csv", csv_dir, "Read {rgb,ir}_p{3,4,5}.csv from this directory")->check(CLI::ExistingDirectory);

    auto* params = app.add_subcommand("params", "Print the parameter report");
    params->add_option("--config", config_path, "Config file (key = value lines)")->required()->check(CLI::ExistingFile);

    auto* check = app.add_subcommand("check", "Run the oracle and invariant suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (threads <= 0) threads = static_cast<int>(env_u64("HYPERFUSE_THREADS").value_or(1));
        hyperfuse::set_num_threads(threads);

        if (*check) return hyperfuse::verify::run_check_suite(std::cout) ? 0 : 1;

        hyperfuse::PipelineConfig cfg = hyperfuse::load_config(config_path);
        if (auto env = env_u64("HYPERFUSE_SEED")) cfg.seed = *env;
        if (seed_opt->count() > 0) cfg.seed = seed;

        if (*params) {
            hyperfuse::write_param_report(std::cout, hyperfuse::count_params(cfg), cfg);
            return 0;
        }

        std::optional<std::filesystem::path> source;
        if (!csv_dir.empty()) source = csv_dir;
        const auto artifacts = hyperfuse::run_forward(cfg, out_dir, source);
        std::cout << "wrote " << artifacts.files.size() << " files to " << artifacts.out_dir.string() << " (seed " << cfg.seed << ")\n";
        return 0;
    } catch (const hyperfuse::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
