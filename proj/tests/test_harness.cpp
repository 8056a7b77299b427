#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "toalign/errors.hpp"
#include "toalign/harness.hpp"

using namespace toalign;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"(
# minimal matrix for integration tests
[experiment]
methods = SourceOnly, DANN
seeds = 1, 2
epochs = 1
batch_size = 8
eta0 = 1e-3
feature_dim = 8
mid_channels = 4
disc_hidden = 8
heatmap_samples = 2

[data]
num_classes = 2
height = 8
width = 8
n_source_per_class = 6
n_target_train_per_class = 6
n_target_test_per_class = 4
seed = 5
)";

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Cheap well-formedness scan: every opened tag closes in order.
bool xml_well_formed(const std::string& text) {
    std::vector<std::string> stack;
    std::size_t i = 0;
    while ((i = text.find('<', i)) != std::string::npos) {
        const auto end = text.find('>', i);
        if (end == std::string::npos) return false;
        std::string tag = text.substr(i + 1, end - i - 1);
        i = end + 1;
        if (tag.empty()) return false;
        if (tag[0] == '?' || tag[0] == '!') continue;
        const bool self_closing = tag.back() == '/';
        if (tag[0] == '/') {
            if (stack.empty()) return false;
            const std::string name = tag.substr(1);
            if (stack.back() != name) return false;
            stack.pop_back();
        } else if (!self_closing) {
            stack.push_back(tag.substr(0, tag.find_first_of(" \t")));
        }
    }
    return stack.empty();
}

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
    std::size_t count = 0, pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

ExperimentRecord make_record(const std::string& method, std::uint64_t seed,
                             std::vector<double> accs) {
    ExperimentRecord r;
    r.method = method;
    r.seed = seed;
    for (std::size_t i = 0; i < accs.size(); ++i) {
        EpochRecord e;
        e.epoch = static_cast<int>(i);
        if (i > 0) {
            e.l_cls = 1.0 / static_cast<double>(i);
            e.l_d = 1.2;
        }
        e.target_acc = accs[i];
        r.epochs.push_back(e);
    }
    return r;
}

}  // namespace

TEST_CASE("config parsing accepts the documented schema") {
    const auto cfg = parse_config_text(kTinyConfig, "<test>");
    CHECK(cfg.methods == std::vector<Method>{Method::SourceOnly, Method::Dann});
    CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2});
    CHECK(cfg.train.epochs == 1);
    CHECK(cfg.train.batch_size == 8);
    CHECK(cfg.data.num_classes == 2);
    CHECK(cfg.data.seed == 5);
    CHECK(cfg.heatmap_samples == 2);
}

TEST_CASE("config parsing fails fast") {
    CHECK_THROWS_AS(parse_config_text("[experiment]\nwibble = 3\n", "<t>"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[nonsense]\n", "<t>"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("methods = DANN\n", "<t>"), ParseError);  // outside section
    CHECK_THROWS_AS(parse_config_text("[experiment]\nmethods DANN\n", "<t>"), ParseError);
    CHECK_THROWS_AS(parse_config_text("[experiment]\nmethods = Quux\nseeds = 1\n", "<t>"),
                    ConfigError);
    CHECK_THROWS_AS(parse_config_text("[experiment]\nseeds = 1\n", "<t>"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[experiment]\nmethods = DANN\n", "<t>"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[experiment]\nmethods = DANN\nseeds = 1\nepochs = x\n", "<t>"),
                    ConfigError);
    // value-domain validation happens at parse time too
    CHECK_THROWS_AS(
        parse_config_text("[experiment]\nmethods = DANN\nseeds = 1\n[data]\nheight = 10\n", "<t>"),
        ConfigError);
}

TEST_CASE("aggregate means, stds and failure counts") {
    std::vector<ExperimentRecord> records;
    records.push_back(make_record("DANN", 1, {0.3, 0.6}));
    records.push_back(make_record("DANN", 2, {0.4, 0.8}));
    records.push_back(make_record("SourceOnly", 1, {0.5, 0.5}));

    const auto rows = aggregate(records, {"DANN"});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].method == "DANN");  // sorted by method name
    CHECK(rows[0].seeds == 2);
    CHECK(rows[0].mean_acc == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(rows[0].std_acc == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(rows[0].failures == 1);
    CHECK(rows[1].method == "SourceOnly");
    CHECK(rows[1].seeds == 1);
    CHECK(rows[1].std_acc == 0.0);
    CHECK(rows[1].failures == 0);
}

TEST_CASE("aggregate rejects mixed epoch counts") {
    std::vector<ExperimentRecord> records;
    records.push_back(make_record("DANN", 1, {0.3, 0.6}));
    records.push_back(make_record("DANN", 2, {0.4, 0.8, 0.9}));
    CHECK_THROWS_AS(aggregate(records), ContractError);
}

TEST_CASE("jsonl round trips records including the null-loss row") {
    const auto dir = fs::temp_directory_path() / "toalign_jsonl_test";
    fs::create_directories(dir);
    const auto path = (dir / "rec.jsonl").string();

    const auto rec = make_record("ToAlign_DANN", 9, {0.25, 0.5, 0.75});
    write_jsonl(rec, path);
    const auto back = read_jsonl(path);

    CHECK(back.method == rec.method);
    CHECK(back.seed == rec.seed);
    REQUIRE(back.epochs.size() == rec.epochs.size());
    for (std::size_t i = 0; i < rec.epochs.size(); ++i) {
        CHECK(back.epochs[i].epoch == rec.epochs[i].epoch);
        CHECK(back.epochs[i].l_cls == rec.epochs[i].l_cls);
        CHECK(back.epochs[i].l_d == rec.epochs[i].l_d);
        CHECK(back.epochs[i].target_acc == rec.epochs[i].target_acc);
    }
    fs::remove_all(dir);
}

TEST_CASE("svg curves: one polyline per method, monotone y mapping, valid xml") {
    std::vector<ExperimentRecord> records;
    records.push_back(make_record("DANN", 1, {0.2, 0.5, 0.9}));
    records.push_back(make_record("DANN", 2, {0.4, 0.5, 0.7}));
    records.push_back(make_record("SourceOnly", 1, {0.5, 0.5, 0.5}));

    const auto svg = render_curves_svg(records);
    CHECK(xml_well_formed(svg));
    CHECK(count_occurrences(svg, "<polyline") == 2);
    CHECK(svg.find("epoch") != std::string::npos);
    CHECK(svg.find("target accuracy") != std::string::npos);
    CHECK(svg.find("DANN") != std::string::npos);
    CHECK(svg.find("SourceOnly") != std::string::npos);

    // DANN means are 0.3, 0.5, 0.8: rising accuracy must move points up
    const auto poly = svg.find("<polyline");
    const auto points_at = svg.find("points=\"", poly);
    const auto points_end = svg.find('"', points_at + 8);
    std::stringstream pts(svg.substr(points_at + 8, points_end - points_at - 8));
    std::vector<double> ys;
    std::string pair;
    while (pts >> pair) {
        ys.push_back(std::stod(pair.substr(pair.find(',') + 1)));
    }
    REQUIRE(ys.size() == 3);
    CHECK(ys[0] > ys[1]);
    CHECK(ys[1] > ys[2]);
}

TEST_CASE("svg with no epoch rows stays axes-only and well-formed") {
    ExperimentRecord empty;
    empty.method = "DANN";
    empty.seed = 1;
    const auto svg = render_curves_svg({empty});
    CHECK(xml_well_formed(svg));
    CHECK(count_occurrences(svg, "<polyline") == 0);
    CHECK(svg.find("<line") != std::string::npos);
}

TEST_CASE("results csv has the fixed column header") {
    const auto dir = fs::temp_directory_path() / "toalign_csv_header";
    fs::create_directories(dir);
    const auto path = (dir / "results.csv").string();
    write_results_csv(aggregate({make_record("DANN", 1, {0.5, 0.6})}), path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "method,seeds,mean_acc,std_acc,mean_lcls,mean_ld,failures");
    fs::remove_all(dir);
}

TEST_CASE("harness runs a matrix, writes artifacts, and is deterministic") {
    const auto dir = fs::temp_directory_path() / "toalign_harness_run";
    fs::remove_all(dir);

    auto cfg = parse_config_text(kTinyConfig, "<test>");
    cfg.output_dir = (dir / "a").string();
    const auto outcome = run_harness(cfg, 1);
    CHECK(outcome.exit_code == 0);
    CHECK(outcome.cells.size() == 4);
    CHECK(outcome.table.size() == 2);

    CHECK(fs::exists(dir / "a" / "results.csv"));
    CHECK(fs::exists(dir / "a" / "curves.svg"));
    CHECK(fs::exists(dir / "a" / "runs" / "DANN_seed1.jsonl"));
    CHECK(fs::exists(dir / "a" / "runs" / "SourceOnly_seed2.jsonl"));
    // heatmaps for the first seed of each method, pos and neg per image
    CHECK(fs::exists(dir / "a" / "heatmaps" / "DANN_seed1_img0_pos.pgm"));
    CHECK(fs::exists(dir / "a" / "heatmaps" / "DANN_seed1_img0_neg.pgm"));
    CHECK(fs::exists(dir / "a" / "heatmaps" / "DANN_seed1_img1_pos.csv"));
    CHECK_FALSE(fs::exists(dir / "a" / "heatmaps" / "DANN_seed2_img0_pos.pgm"));

    // a rerun and a parallel run hit identical bytes
    cfg.output_dir = (dir / "b").string();
    run_harness(cfg, 1);
    CHECK(slurp(dir / "a" / "results.csv") == slurp(dir / "b" / "results.csv"));

    cfg.output_dir = (dir / "c").string();
    run_harness(cfg, 4);
    CHECK(slurp(dir / "a" / "results.csv") == slurp(dir / "c" / "results.csv"));
    CHECK(slurp(dir / "a" / "runs" / "DANN_seed2.jsonl") ==
          slurp(dir / "c" / "runs" / "DANN_seed2.jsonl"));

    // one method x one seed leaves exactly one data row
    HarnessConfig single = parse_config_text(kTinyConfig, "<test>");
    single.methods = {Method::SourceOnly};
    single.seeds = {1};
    single.output_dir = (dir / "single").string();
    run_harness(single, 1);
    std::ifstream in(dir / "single" / "results.csv");
    std::string line;
    int rows = 0;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 1);

    // viz re-emits identical artifacts from the stored records
    const auto svg_before = slurp(dir / "a" / "curves.svg");
    const auto pgm_before = slurp(dir / "a" / "heatmaps" / "DANN_seed1_img0_pos.pgm");
    fs::remove(dir / "a" / "curves.svg");
    fs::remove(dir / "a" / "heatmaps" / "DANN_seed1_img0_pos.pgm");
    reemit_artifacts((dir / "a").string());
    CHECK(slurp(dir / "a" / "curves.svg") == svg_before);
    CHECK(slurp(dir / "a" / "heatmaps" / "DANN_seed1_img0_pos.pgm") == pgm_before);

    fs::remove_all(dir);
}

TEST_CASE("aggregate matches an independent recomputation from the stored jsonl") {
    const auto dir = fs::temp_directory_path() / "toalign_reagg";
    fs::remove_all(dir);

    auto cfg = parse_config_text(kTinyConfig, "<test>");
    cfg.methods = {Method::Dann};
    cfg.output_dir = dir.string();
    const auto outcome = run_harness(cfg, 2);

    double mean = 0.0;
    std::vector<double> finals;
    for (std::uint64_t seed : cfg.seeds) {
        const auto rec = read_jsonl((dir / "runs" / ("DANN_seed" + std::to_string(seed) + ".jsonl")).string());
        finals.push_back(rec.epochs.back().target_acc);
        mean += rec.epochs.back().target_acc;
    }
    mean /= static_cast<double>(finals.size());
    double var = 0.0;
    for (double f : finals) var += (f - mean) * (f - mean);
    const double stddev = std::sqrt(var / static_cast<double>(finals.size()));

    REQUIRE(outcome.table.size() == 1);
    CHECK(outcome.table[0].mean_acc == doctest::Approx(mean).epsilon(1e-12));
    CHECK(outcome.table[0].std_acc == doctest::Approx(stddev).epsilon(1e-9));

    fs::remove_all(dir);
}
