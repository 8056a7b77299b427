#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "toalign/data.hpp"
#include "toalign/errors.hpp"
#include "toalign/harness.hpp"
#include "toalign/selfcheck.hpp"

namespace fs = std::filesystem;

namespace {

int cmd_run(const std::string& config_path, int jobs, const std::string& out_override,
            long seed_override) {
    toalign::HarnessConfig cfg = toalign::parse_config_file(config_path);
    if (!out_override.empty()) cfg.output_dir = out_override;
    if (seed_override >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed_override)};

    const auto outcome = toalign::run_harness(cfg, jobs);
    std::printf("wrote %s\n", (fs::path(cfg.output_dir) / "results.csv").string().c_str());
    for (const auto& row : outcome.table) {
        std::printf("  %-16s seeds=%d mean_acc=%.4f std=%.4f failures=%d\n", row.method.c_str(),
                    row.seeds, row.mean_acc, row.std_acc, row.failures);
    }
    return outcome.exit_code;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_override) {
    toalign::HarnessConfig cfg = toalign::parse_config_file(config_path);
    if (!out_override.empty()) cfg.output_dir = out_override;
    fs::create_directories(cfg.output_dir);

    const auto data = toalign::generate(cfg.data);
    const fs::path dir(cfg.output_dir);
    toalign::export_csv(data.source_train, (dir / "source_train.csv").string());
    toalign::export_csv(data.target_train, (dir / "target_train.csv").string());
    toalign::export_csv(data.target_test, (dir / "target_test.csv").string());
    std::printf("wrote %zu source / %zu target-train / %zu target-test samples under %s\n",
                data.source_train.size(), data.target_train.size(), data.target_test.size(),
                cfg.output_dir.c_str());
    return 0;
}

int cmd_check() {
    const bool ok = toalign::report_checks(toalign::run_all_checks());
    return ok ? 0 : 1;
}

int cmd_viz(const std::string& run_dir) {
    toalign::reemit_artifacts(run_dir);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Task-oriented adversarial domain adaptation lab on synthetic data"};
    app.require_subcommand(1);

    std::string config_path, run_dir, out_override;
    int jobs = 1;
    long seed_override = -1;

    auto* run = app.add_subcommand("run", "Execute the configured method x seed matrix");
    run->add_option("config", config_path, "experiment config file")->required();
    run->add_option("--jobs", jobs, "parallel experiment cells")->check(CLI::PositiveNumber);
    run->add_option("--out", out_override, "override the configured output directory");
    run->add_option("--seed-override", seed_override, "run only this seed");

    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic splits as CSV");
    gen->add_option("config", config_path, "experiment config file")->required();
    gen->add_option("--out", out_override, "override the configured output directory");

    app.add_subcommand("check", "Run the built-in gradient and invariant suites");

    auto* viz = app.add_subcommand("viz", "Re-emit plots and heatmaps from stored records");
    viz->add_option("run_dir", run_dir, "directory written by a previous run")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("run")) return cmd_run(config_path, jobs, out_override, seed_override);
        if (app.got_subcommand("gen-data")) return cmd_gen_data(config_path, out_override);
        if (app.got_subcommand("check")) return cmd_check();
        if (app.got_subcommand("viz")) return cmd_viz(run_dir);
    } catch (const toalign::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const toalign::ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
