#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "toalign/data.hpp"
#include "toalign/train.hpp"

namespace toalign {

// A method x seed matrix over one shared synthetic dataset configuration.
struct HarnessConfig {
    std::vector<Method> methods;
    std::vector<std::uint64_t> seeds;
    std::string output_dir = "out";
    TrainConfig train;     // per-cell template; method and seed overwritten
    SyntheticConfig data;
    int heatmap_samples = 8;
};

// Flat key-value file with [experiment] and [data] sections; '#' starts a
// comment. Unknown keys or sections are errors.
HarnessConfig parse_config_file(const std::string& path);
HarnessConfig parse_config_text(const std::string& text, const std::string& origin);

struct AggregateRow {
    std::string method;
    int seeds = 0;
    double mean_acc = 0.0;
    double std_acc = 0.0;   // population std
    double mean_lcls = 0.0;
    double mean_ld = 0.0;
    int failures = 0;
};

// Mean/std of final target accuracy and final losses per method, sorted by
// method name. All records of one method must agree on the epoch count.
std::vector<AggregateRow> aggregate(const std::vector<ExperimentRecord>& records,
                                    const std::vector<std::string>& failed_methods = {});

// JSON-lines round trip for per-epoch records:
// {"method","seed","epoch","l_cls","l_d","target_acc","degenerate_decomp_count"}.
void write_jsonl(const ExperimentRecord& record, const std::string& path);
ExperimentRecord read_jsonl(const std::string& path);

void write_results_csv(const std::vector<AggregateRow>& rows, const std::string& path);

// Accuracy-vs-epoch chart, one polyline per method (seed mean), hand-emitted
// SVG so there is no plotting dependency.
std::string render_curves_svg(const std::vector<ExperimentRecord>& records);
void emit_svg_curves(const std::vector<ExperimentRecord>& records, const std::string& path);

struct CellResult {
    std::string method;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    ExperimentRecord record;
};

struct HeatmapArtifact {
    std::string name;  // file stem, e.g. "DANN_seed1_img0_pos"
    Heatmap map;
};

struct RunOutcome {
    std::vector<CellResult> cells;
    std::vector<AggregateRow> table;
    int exit_code = 0;
};

// Executes every (method, seed) cell, up to `jobs` concurrently, and writes
// results.csv, runs/*.jsonl, curves.svg and heatmaps/* under out_dir. Cell
// RNG never depends on scheduling, so any jobs count gives identical numbers.
RunOutcome run_harness(const HarnessConfig& cfg, int jobs);

// Re-emits curves.svg and heatmap PGMs from the stored records in a previous
// run directory.
void reemit_artifacts(const std::string& run_dir);

// TOALIGN_LOG={info,debug}; info when unset.
enum class LogLevel { Warn = 0, Info = 1, Debug = 2 };
LogLevel log_level();
void log_line(LogLevel level, const std::string& message);

}  // namespace toalign
