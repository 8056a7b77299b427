#include "toalign/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "toalign/errors.hpp"

namespace fs = std::filesystem;

namespace toalign {

// ---- logging ---------------------------------------------------------------

LogLevel log_level() {
    const char* env = std::getenv("TOALIGN_LOG");
    if (env && std::string(env) == "debug") return LogLevel::Debug;
    return LogLevel::Info;
}

void log_line(LogLevel level, const std::string& message) {
    static std::mutex mu;
    if (static_cast<int>(level) > static_cast<int>(log_level())) return;
    std::lock_guard lock(mu);
    std::fprintf(stderr, "[toalign] %s\n", message.c_str());
}

// ---- config file ------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
    }
}

long parse_int(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const long d = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("bad integer value for " + key + ": '" + v + "'");
    }
}

}  // namespace

HarnessConfig parse_config_text(const std::string& text, const std::string& origin) {
    HarnessConfig cfg;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool saw_methods = false, saw_seeds = false;

    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ParseError(origin + ":" + std::to_string(lineno) + ": unterminated section");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section != "experiment" && section != "data") {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown section [" +
                                  section + "]");
            }
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) {
            throw ParseError(origin + ":" + std::to_string(lineno) + ": key outside any section");
        }

        if (section == "experiment") {
            if (key == "methods") {
                for (const auto& name : split_list(value)) cfg.methods.push_back(parse_method(name));
                saw_methods = true;
            } else if (key == "seeds") {
                for (const auto& s : split_list(value)) {
                    cfg.seeds.push_back(static_cast<std::uint64_t>(parse_int(s, key)));
                }
                saw_seeds = true;
            } else if (key == "output_dir") {
                cfg.output_dir = value;
            } else if (key == "epochs") {
                cfg.train.epochs = static_cast<int>(parse_int(value, key));
            } else if (key == "batch_size") {
                cfg.train.batch_size = static_cast<int>(parse_int(value, key));
            } else if (key == "eta0") {
                cfg.train.eta0 = parse_double(value, key);
            } else if (key == "gamma") {
                cfg.train.gamma = parse_double(value, key);
            } else if (key == "tau") {
                cfg.train.tau = parse_double(value, key);
            } else if (key == "grl_lambda_max") {
                cfg.train.grl_lambda_max = parse_double(value, key);
            } else if (key == "momentum") {
                cfg.train.momentum = parse_double(value, key);
            } else if (key == "feature_dim") {
                cfg.train.feature_dim = static_cast<int>(parse_int(value, key));
            } else if (key == "mid_channels") {
                cfg.train.mid_channels = static_cast<int>(parse_int(value, key));
            } else if (key == "disc_hidden") {
                cfg.train.disc_hidden = static_cast<int>(parse_int(value, key));
            } else if (key == "dropout_rate") {
                cfg.train.dropout_rate = parse_double(value, key);
            } else if (key == "heatmap_samples") {
                cfg.heatmap_samples = static_cast<int>(parse_int(value, key));
            } else {
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": unknown key '" + key + "' in [experiment]");
            }
        } else {
            if (key == "num_classes") {
                cfg.data.num_classes = static_cast<int>(parse_int(value, key));
            } else if (key == "height") {
                cfg.data.height = static_cast<int>(parse_int(value, key));
            } else if (key == "width") {
                cfg.data.width = static_cast<int>(parse_int(value, key));
            } else if (key == "n_source_per_class") {
                cfg.data.n_source_per_class = static_cast<int>(parse_int(value, key));
            } else if (key == "n_target_train_per_class") {
                cfg.data.n_target_train_per_class = static_cast<int>(parse_int(value, key));
            } else if (key == "n_target_test_per_class") {
                cfg.data.n_target_test_per_class = static_cast<int>(parse_int(value, key));
            } else if (key == "foreground_intensity") {
                cfg.data.foreground_intensity = parse_double(value, key);
            } else if (key == "background_noise") {
                cfg.data.background_noise = parse_double(value, key);
            } else if (key == "stripe_intensity") {
                cfg.data.stripe_intensity = parse_double(value, key);
            } else if (key == "stripe_period") {
                cfg.data.stripe_period = static_cast<int>(parse_int(value, key));
            } else if (key == "noise_sigma") {
                cfg.data.noise_sigma = parse_double(value, key);
            } else if (key == "seed") {
                cfg.data.seed = static_cast<std::uint64_t>(parse_int(value, key));
            } else {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key +
                                  "' in [data]");
            }
        }
    }

    if (!saw_methods || cfg.methods.empty()) throw ConfigError(origin + ": no methods configured");
    if (!saw_seeds || cfg.seeds.empty()) throw ConfigError(origin + ": no seeds configured");
    if (cfg.heatmap_samples < 0) throw ConfigError(origin + ": heatmap_samples must be >= 0");
    validate(cfg.train);
    validate(cfg.data);
    return cfg;
}

HarnessConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

// ---- jsonl -------------------------------------------------------------------

void write_jsonl(const ExperimentRecord& record, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    for (const auto& e : record.epochs) {
        nlohmann::json row{
            {"method", record.method},
            {"seed", record.seed},
            {"epoch", e.epoch},
            {"l_cls", e.l_cls ? nlohmann::json(*e.l_cls) : nlohmann::json(nullptr)},
            {"l_d", e.l_d ? nlohmann::json(*e.l_d) : nlohmann::json(nullptr)},
            {"target_acc", e.target_acc},
            {"degenerate_decomp_count", e.degenerate_count},
        };
        out << row.dump() << '\n';
    }
    if (!out) throw DataError("failed writing " + path);
}

ExperimentRecord read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    ExperimentRecord record;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json row;
        try {
            row = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (record.epochs.empty()) {
            record.method = row.at("method").get<std::string>();
            record.seed = row.at("seed").get<std::uint64_t>();
        }
        EpochRecord er;
        er.epoch = row.at("epoch").get<int>();
        if (!row.at("l_cls").is_null()) er.l_cls = row.at("l_cls").get<double>();
        if (!row.at("l_d").is_null()) er.l_d = row.at("l_d").get<double>();
        er.target_acc = row.at("target_acc").get<double>();
        er.degenerate_count = row.at("degenerate_decomp_count").get<long>();
        record.epochs.push_back(er);
    }
    return record;
}

// ---- aggregation ---------------------------------------------------------------

std::vector<AggregateRow> aggregate(const std::vector<ExperimentRecord>& records,
                                    const std::vector<std::string>& failed_methods) {
    std::map<std::string, std::vector<const ExperimentRecord*>> by_method;
    for (const auto& r : records) by_method[r.method].push_back(&r);
    std::map<std::string, int> failures;
    for (const auto& m : failed_methods) {
        ++failures[m];
        by_method.try_emplace(m);  // keep a row even if every seed failed
    }

    std::vector<AggregateRow> rows;
    for (const auto& [method, group] : by_method) {
        AggregateRow row;
        row.method = method;
        row.seeds = static_cast<int>(group.size());
        row.failures = failures.count(method) ? failures.at(method) : 0;
        if (!group.empty()) {
            const std::size_t epochs = group.front()->epochs.size();
            double acc_sum = 0.0, acc_sq = 0.0, lcls_sum = 0.0, ld_sum = 0.0;
            for (const auto* r : group) {
                if (r->epochs.size() != epochs) {
                    throw ContractError("aggregate: mixed epoch counts for method " + method);
                }
                if (r->epochs.empty()) throw ContractError("aggregate: record without epochs");
                const auto& last = r->epochs.back();
                acc_sum += last.target_acc;
                acc_sq += last.target_acc * last.target_acc;
                lcls_sum += last.l_cls.value_or(std::nan(""));
                ld_sum += last.l_d.value_or(std::nan(""));
            }
            const double n = static_cast<double>(group.size());
            row.mean_acc = acc_sum / n;
            row.std_acc = std::sqrt(std::max(0.0, acc_sq / n - row.mean_acc * row.mean_acc));
            row.mean_lcls = lcls_sum / n;
            row.mean_ld = ld_sum / n;
        } else {
            row.mean_acc = row.std_acc = row.mean_lcls = row.mean_ld = std::nan("");
        }
        rows.push_back(std::move(row));
    }
    return rows;  // std::map iteration is already sorted by method name
}

void write_results_csv(const std::vector<AggregateRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "method,seeds,mean_acc,std_acc,mean_lcls,mean_ld,failures\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%d,%.17g,%.17g,%.17g,%.17g,%d", r.method.c_str(),
                      r.seeds, r.mean_acc, r.std_acc, r.mean_lcls, r.mean_ld, r.failures);
        out << buf << '\n';
    }
    if (!out) throw DataError("failed writing " + path);
}

// ---- run -------------------------------------------------------------------------

namespace {

std::vector<std::size_t> sample_heatmap_indices(const SyntheticConfig& data_cfg, std::size_t n_test,
                                                int wanted) {
    std::vector<std::size_t> idx(n_test);
    for (std::size_t i = 0; i < n_test; ++i) idx[i] = i;
    Rng rng = Rng(data_cfg.seed).split(stream_tag("heatmap_samples"));
    rng.shuffle(idx);
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(wanted)));
    return idx;
}

std::vector<HeatmapArtifact> cell_heatmaps(const HarnessConfig& cfg, Trainer& trainer,
                                           const Dataset& target_test, const std::string& stem) {
    std::vector<HeatmapArtifact> artifacts;
    const auto indices =
        sample_heatmap_indices(cfg.data, target_test.samples.size(), cfg.heatmap_samples);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Sample& s = target_test.samples[indices[i]];
        auto out = trainer.networks().extractor.forward(s.x);
        auto attention = class_gradient(out.pooled, trainer.networks().classifier, s.label);
        const std::string base = stem + "_img" + std::to_string(i);
        artifacts.push_back({base + "_pos", spatial_response_map(out.feature_map, attention->data, 1)});
        artifacts.push_back({base + "_neg", spatial_response_map(out.feature_map, attention->data, -1)});
    }
    return artifacts;
}

}  // namespace

RunOutcome run_harness(const HarnessConfig& cfg, int jobs) {
    if (jobs < 1) throw ConfigError("jobs must be at least 1");

    struct Cell {
        Method method;
        std::uint64_t seed;
        bool emit_heatmaps;
        CellResult result;
        std::vector<HeatmapArtifact> heatmaps;
    };

    std::vector<Cell> cells;
    for (Method m : cfg.methods) {
        for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
            cells.push_back(Cell{m, cfg.seeds[si], si == 0, {}, {}});
        }
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            Cell& cell = cells[i];
            cell.result.method = method_name(cell.method);
            cell.result.seed = cell.seed;
            try {
                TrainConfig tc = cfg.train;
                tc.method = cell.method;
                tc.seed = cell.seed;
                const DomainData data = generate(cfg.data);
                Trainer trainer(tc, cfg.data.num_classes, cfg.data.channels);
                cell.result.record = trainer.train_loop(data);
                if (cell.emit_heatmaps && cfg.heatmap_samples > 0) {
                    cell.heatmaps = cell_heatmaps(
                        cfg, trainer, data.target_test,
                        cell.result.method + "_seed" + std::to_string(cell.seed));
                }
                log_line(LogLevel::Info,
                         "cell " + cell.result.method + " seed " + std::to_string(cell.seed) +
                             " final acc " +
                             std::to_string(cell.result.record.epochs.back().target_acc));
            } catch (const std::exception& e) {
                cell.result.failed = true;
                cell.result.error = e.what();
                log_line(LogLevel::Warn, "cell " + cell.result.method + " seed " +
                                             std::to_string(cell.seed) + " failed: " + e.what());
            }
        }
    };

    std::vector<std::thread> pool;
    const int n_threads = std::min<int>(jobs, static_cast<int>(cells.size()));
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    // All file output happens here, on the coordinating thread.
    const fs::path out_dir(cfg.output_dir);
    fs::create_directories(out_dir / "runs");
    fs::create_directories(out_dir / "heatmaps");

    RunOutcome outcome;
    std::vector<ExperimentRecord> ok_records;
    std::vector<std::string> failed_methods;
    for (auto& cell : cells) {
        if (cell.result.failed) {
            failed_methods.push_back(cell.result.method);
        } else {
            ok_records.push_back(cell.result.record);
            write_jsonl(cell.result.record,
                        (out_dir / "runs" /
                         (cell.result.method + "_seed" + std::to_string(cell.seed) + ".jsonl"))
                            .string());
        }
        for (const auto& hm : cell.heatmaps) {
            write_heatmap_csv(hm.map, (out_dir / "heatmaps" / (hm.name + ".csv")).string());
            write_pgm(hm.map, (out_dir / "heatmaps" / (hm.name + ".pgm")).string());
        }
        outcome.cells.push_back(std::move(cell.result));
    }

    outcome.table = aggregate(ok_records, failed_methods);
    write_results_csv(outcome.table, (out_dir / "results.csv").string());
    emit_svg_curves(ok_records, (out_dir / "curves.svg").string());
    outcome.exit_code = failed_methods.empty() ? 0 : 1;
    return outcome;
}

void reemit_artifacts(const std::string& run_dir) {
    const fs::path dir(run_dir);
    if (!fs::is_directory(dir)) throw ConfigError("not a run directory: " + run_dir);

    std::vector<ExperimentRecord> records;
    std::vector<fs::path> run_files;
    if (fs::is_directory(dir / "runs")) {
        for (const auto& entry : fs::directory_iterator(dir / "runs")) {
            if (entry.path().extension() == ".jsonl") run_files.push_back(entry.path());
        }
    }
    std::sort(run_files.begin(), run_files.end());
    for (const auto& p : run_files) records.push_back(read_jsonl(p.string()));
    emit_svg_curves(records, (dir / "curves.svg").string());

    if (fs::is_directory(dir / "heatmaps")) {
        std::vector<fs::path> maps;
        for (const auto& entry : fs::directory_iterator(dir / "heatmaps")) {
            if (entry.path().extension() == ".csv") maps.push_back(entry.path());
        }
        std::sort(maps.begin(), maps.end());
        for (const auto& p : maps) {
            const Heatmap hm = read_heatmap_csv(p.string());
            fs::path pgm = p;
            pgm.replace_extension(".pgm");
            write_pgm(hm, pgm.string());
        }
    }
    log_line(LogLevel::Info, "re-emitted artifacts under " + run_dir);
}

}  // namespace toalign
