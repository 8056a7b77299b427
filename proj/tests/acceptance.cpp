// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Thresholds and tolerances are fixed in code; the ordering margins in
// criterion 6 and the region-membership thresholds in criterion 9 were pinned
// from a pilot run of the committed default configuration.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "toalign/data.hpp"
#include "toalign/decompose.hpp"
#include "toalign/harness.hpp"
#include "toalign/selfcheck.hpp"
#include "toalign/train.hpp"

namespace fs = std::filesystem;
using namespace toalign;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool passed, const std::string& detail) {
    std::printf("[%s] criterion %d: %-28s %s\n", passed ? "PASS" : "FAIL", id, name.c_str(),
                detail.c_str());
    if (!passed) ++g_failures;
    std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

bool all_passed(const std::vector<CheckResult>& results, std::string& detail) {
    bool ok = true;
    for (const auto& r : results) {
        if (!r.passed) {
            ok = false;
            detail += " " + r.name + ": " + r.detail + ";";
        }
    }
    return ok;
}

// The committed default experiment configuration (mirrors configs/default.cfg).
HarnessConfig default_config() {
    HarnessConfig cfg;
    cfg.methods = {Method::SourceOnly, Method::Dann, Method::ToAlignDann, Method::TiAlignDann};
    cfg.seeds = {1, 2, 3, 4, 5};
    cfg.train.epochs = 50;
    cfg.train.batch_size = 32;
    cfg.train.eta0 = 0.1;
    cfg.data = SyntheticConfig{};
    cfg.heatmap_samples = 8;
    return cfg;
}

void criterion_1_gradients() {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    const bool ok = all_passed(run_gradient_checks(10), detail);
    const double elapsed = seconds_since(start);
    std::ostringstream d;
    d << "ops + composed graphs + reversal exactness, 10 seeds, " << elapsed << " s";
    report(1, "gradient oracle suite", ok && elapsed < 60.0, d.str() + detail);
}

void criterion_2_decomposition() {
    std::string detail;
    const auto results = run_decomposition_checks(1000);
    bool ok = true;
    for (const auto& r : results) {
        if (r.name == "decompose/linear-class-gradient" || r.name == "decompose/stop-gradient") {
            continue;  // criterion 3 / module tests
        }
        if (!r.passed) {
            ok = false;
            detail += " " + r.name + ";";
        }
    }
    report(2, "decomposition invariants", ok,
           "energy, antisymmetry, constant weight, scale covariance over 1000 trials" + detail);
}

void criterion_3_linear_gradient() {
    for (const auto& r : run_decomposition_checks(1)) {
        if (r.name == "decompose/linear-class-gradient") {
            report(3, "linear-classifier gradient", r.passed, r.detail);
            return;
        }
    }
    report(3, "linear-classifier gradient", false, "check not found");
}

void criterion_4_reduction() {
    SyntheticConfig dc;
    dc.n_source_per_class = 16;
    dc.n_target_train_per_class = 16;
    dc.n_target_test_per_class = 8;
    dc.seed = 11;
    const auto data = generate(dc);

    TrainConfig tc;
    tc.seed = 4242;
    tc.batch_size = 8;
    tc.method = Method::ToAlignDann;
    Trainer constant_w(tc, dc.num_classes, 1);
    constant_w.attention_override = [](const std::vector<double>& pooled, int) {
        return std::vector<double>(pooled.size(), 3.0);
    };
    tc.method = Method::Dann;
    Trainer baseline(tc, dc.num_classes, 1);

    double worst = 0.0;
    for (int step = 0; step < 20; ++step) {
        std::vector<const Sample*> src, tgt;
        for (int i = 0; i < 4; ++i) {
            src.push_back(&data.source_train.samples[(step * 4 + i) % data.source_train.size()]);
            tgt.push_back(&data.target_train.samples[(step * 4 + i) % data.target_train.size()]);
        }
        const double p = step / 19.0;
        const auto a = constant_w.train_step(src, tgt, p);
        const auto b = baseline.train_step(src, tgt, p);
        worst = std::max({worst, std::fabs(a.l_cls - b.l_cls), std::fabs(a.l_d - b.l_d)});
    }
    std::ostringstream d;
    d << "max |loss difference| = " << worst << " over 20 paired steps";
    report(4, "reduction consistency", worst <= 1e-9, d.str());
}

void criterion_5_schedule() {
    std::string detail;
    const bool ok = all_passed(run_schedule_checks(), detail);
    report(5, "schedule spot checks", ok,
           "lr(0)=eta0, lr(0.3)=3.5355e-4 +/- 1e-8, defaults gamma=10 tau=0.75" + detail);
}

void criterion_6_ordering() {
    const auto start = std::chrono::steady_clock::now();
    auto cfg = default_config();
    const auto dir = fs::temp_directory_path() / "toalign_acceptance_ordering";
    fs::remove_all(dir);
    cfg.output_dir = dir.string();
    cfg.heatmap_samples = 0;

    const auto outcome = run_harness(cfg, 4);
    std::map<std::string, double> mean_acc;
    for (const auto& row : outcome.table) mean_acc[row.method] = row.mean_acc;
    const double elapsed = seconds_since(start);

    // Margins pinned from the pilot run of this configuration (seed means:
    // SourceOnly 0.790, DANN 1.000, ToAlign_DANN 1.000, TiAlign_DANN 0.406).
    const double to_align_margin = 0.0;  // ToAlign_DANN >= DANN, tie at ceiling
    const double ti_align_margin = 0.2;  // TiAlign_DANN < SourceOnly - 0.2 (pilot gap 0.384)
    const bool order_ok =
        mean_acc.at("ToAlign_DANN") >= mean_acc.at("DANN") - to_align_margin &&
        mean_acc.at("TiAlign_DANN") < mean_acc.at("SourceOnly") - ti_align_margin;

    std::ostringstream d;
    d << "mean acc: SourceOnly " << mean_acc.at("SourceOnly") << ", DANN " << mean_acc.at("DANN")
      << ", ToAlign_DANN " << mean_acc.at("ToAlign_DANN") << ", TiAlign_DANN "
      << mean_acc.at("TiAlign_DANN") << " (5 seeds, " << elapsed << " s)";
    report(6, "qualitative ordering", order_ok && outcome.exit_code == 0 && elapsed < 600.0,
           d.str());
    fs::remove_all(dir);
}

void criterion_7_loss_anchors() {
    std::string detail;
    const bool ok = all_passed(run_loss_anchor_checks(), detail);
    report(7, "loss value anchors", ok, "uniform CE = ln K, indifferent D = 2 ln 2, at 1e-12" + detail);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_8_determinism() {
    auto cfg = default_config();
    cfg.methods = {Method::Dann, Method::ToAlignDann};
    cfg.seeds = {1, 2};
    cfg.train.epochs = 2;
    cfg.data.n_source_per_class = 16;
    cfg.data.n_target_train_per_class = 16;
    cfg.data.n_target_test_per_class = 8;
    cfg.heatmap_samples = 2;

    const auto base = fs::temp_directory_path() / "toalign_acceptance_determinism";
    fs::remove_all(base);

    cfg.output_dir = (base / "a").string();
    run_harness(cfg, 1);
    cfg.output_dir = (base / "b").string();
    run_harness(cfg, 1);
    cfg.output_dir = (base / "c").string();
    run_harness(cfg, 4);

    const bool rerun_ok = slurp(base / "a" / "results.csv") == slurp(base / "b" / "results.csv");
    const bool jobs_ok = slurp(base / "a" / "results.csv") == slurp(base / "c" / "results.csv");
    const bool runs_ok = slurp(base / "a" / "runs" / "DANN_seed1.jsonl") ==
                         slurp(base / "c" / "runs" / "DANN_seed1.jsonl");
    report(8, "determinism", rerun_ok && jobs_ok && runs_ok,
           std::string("rerun identical: ") + (rerun_ok ? "yes" : "no") +
               ", jobs 1 vs 4 identical: " + (jobs_ok && runs_ok ? "yes" : "no"));
    fs::remove_all(base);
}

void criterion_9_visualization() {
    auto cfg = default_config();
    TrainConfig tc = cfg.train;
    tc.method = Method::ToAlignDann;
    tc.seed = 1;

    const auto data = generate(cfg.data);
    Trainer trainer(tc, cfg.data.num_classes, cfg.data.channels);
    trainer.train_loop(data);

    // same deterministic sample draw the harness uses
    std::vector<std::size_t> idx(data.target_test.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng = Rng(cfg.data.seed).split(stream_tag("heatmap_samples"));
    rng.shuffle(idx);
    idx.resize(8);

    const int cell_h = cfg.data.height / 4;  // two 2x poolings
    const int cell_w = cfg.data.width / 4;
    int pos_inside = 0, neg_outside = 0;
    for (std::size_t i : idx) {
        const Sample& s = data.target_test.samples[i];
        const auto mask = foreground_mask(cfg.data, s.label);
        auto out = trainer.networks().extractor.forward(s.x);
        auto attention = class_gradient(out.pooled, trainer.networks().classifier, s.label);

        auto covers_foreground = [&](const Heatmap& map) {
            std::size_t best = 0;
            for (std::size_t p = 1; p < map.values.size(); ++p) {
                if (map.values[p] > map.values[best]) best = p;
            }
            const int ci = static_cast<int>(best) / map.width;
            const int cj = static_cast<int>(best) % map.width;
            for (int r = ci * cell_h; r < (ci + 1) * cell_h; ++r) {
                for (int c = cj * cell_w; c < (cj + 1) * cell_w; ++c) {
                    if (mask[static_cast<std::size_t>(r) * cfg.data.width + c]) return true;
                }
            }
            return false;
        };

        if (covers_foreground(spatial_response_map(out.feature_map, attention->data, 1))) {
            ++pos_inside;
        }
        if (!covers_foreground(spatial_response_map(out.feature_map, attention->data, -1))) {
            ++neg_outside;
        }
    }

    std::ostringstream d;
    d << "positive max inside foreground " << pos_inside << "/8, negative max outside "
      << neg_outside << "/8";
    // thresholds 70% / 50% confirmed by the pilot (8/8 and 4/8 on this config)
    report(9, "visualization sanity", pos_inside >= 6 && neg_outside >= 4, d.str());
}

}  // namespace

int main() {
    criterion_1_gradients();
    criterion_2_decomposition();
    criterion_3_linear_gradient();
    criterion_4_reduction();
    criterion_5_schedule();
    criterion_6_ordering();
    criterion_7_loss_anchors();
    criterion_8_determinism();
    criterion_9_visualization();

    if (g_failures) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all acceptance criteria passed\n");
    return 0;
}
