#include "toalign/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "toalign/errors.hpp"

namespace toalign {

void validate(const SyntheticConfig& cfg) {
    if (cfg.num_classes < 2) throw ConfigError("num_classes must be at least 2");
    if (cfg.n_source_per_class < 1 || cfg.n_target_train_per_class < 1 ||
        cfg.n_target_test_per_class < 1) {
        throw ConfigError("per-class sample counts must be at least 1");
    }
    if (cfg.vector_mode) {
        if (cfg.vector_dim < 2 * cfg.num_classes) {
            throw ConfigError("vector_dim too small for the class layout");
        }
        return;
    }
    if (cfg.channels != 1) throw ConfigError("image mode supports a single channel");
    if (cfg.height < 8 || cfg.width < 8 || cfg.height % 4 != 0 || cfg.width % 4 != 0) {
        throw ConfigError("image dims must be at least 8 and divisible by 4");
    }
    if (cfg.stripe_period < 2) throw ConfigError("stripe_period must be at least 2");
    if (!(cfg.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
}

namespace {

struct ShapeSpot {
    int row;
    int col;
};

// Class-fixed anchor on a coarse grid; shapes cycle disk -> cross -> bar.
ShapeSpot anchor_for(const SyntheticConfig& cfg, int klass) {
    static constexpr double kGrid[][2] = {
        {0.28, 0.28}, {0.28, 0.72}, {0.72, 0.47}, {0.72, 0.85}, {0.47, 0.5}, {0.85, 0.2},
    };
    const auto& g = kGrid[klass % 6];
    return {static_cast<int>(g[0] * cfg.height), static_cast<int>(g[1] * cfg.width)};
}

}  // namespace

std::vector<bool> foreground_mask(const SyntheticConfig& cfg, int klass) {
    validate(cfg);
    if (cfg.vector_mode) throw ContractError("foreground_mask is defined for image mode only");
    if (klass < 0 || klass >= cfg.num_classes) throw IndexError("foreground_mask: bad class");

    std::vector<bool> mask(static_cast<std::size_t>(cfg.height) * cfg.width, false);
    const ShapeSpot at = anchor_for(cfg, klass);
    for (int dr = -3; dr <= 3; ++dr) {
        for (int dc = -3; dc <= 3; ++dc) {
            const int r = at.row + dr, c = at.col + dc;
            if (r < 0 || r >= cfg.height || c < 0 || c >= cfg.width) continue;
            if (klass % 3 == 0 && dr * dr + dc * dc > 9.5) continue;  // round blob
            mask[static_cast<std::size_t>(r) * cfg.width + c] = true;
        }
    }
    return mask;
}

std::vector<double> foreground_pattern(const SyntheticConfig& cfg, int klass) {
    const auto mask = foreground_mask(cfg, klass);
    const ShapeSpot at = anchor_for(cfg, klass);
    const double lo = 0.12;  // dark texture cells, still above typical background

    std::vector<double> pattern(mask.size(), 0.0);
    for (int r = 0; r < cfg.height; ++r) {
        for (int c = 0; c < cfg.width; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * cfg.width + c;
            if (!mask[i]) continue;
            const int dr = r - at.row, dc = c - at.col;
            double v = cfg.foreground_intensity;
            switch (klass % 3) {
                case 0:  // solid blob
                    break;
                case 1:  // checkerboard
                    if ((dr + dc) % 2 != 0) v = lo;
                    break;
                default:  // diagonal grating
                    if (((dr - dc) % 3 + 3) % 3 != 0) v = lo;
                    break;
            }
            pattern[i] = v;
        }
    }
    return pattern;
}

Sample make_sample(const SyntheticConfig& cfg, int klass, Domain domain, BackgroundStyle bg,
                   Rng& rng) {
    validate(cfg);
    if (klass < 0 || klass >= cfg.num_classes) throw IndexError("make_sample: bad class");

    Sample s;
    s.domain = domain;
    s.label = klass;

    if (cfg.vector_mode) {
        // Gaussian blobs: two coordinates per class carry the signal, the
        // tail coordinates carry the domain offset.
        std::vector<double> v(static_cast<std::size_t>(cfg.vector_dim), 0.1);
        v[static_cast<std::size_t>(2 * klass)] = 0.8;
        v[static_cast<std::size_t>(2 * klass + 1)] = 0.8;
        if (bg == BackgroundStyle::TargetStripes) {
            for (int i = 2 * cfg.num_classes; i < cfg.vector_dim; ++i) {
                v[static_cast<std::size_t>(i)] += 0.55;
            }
        }
        for (auto& x : v) x = std::clamp(x + cfg.noise_sigma * rng.normal(), 0.0, 1.0);
        s.x = tensor({1, 1, cfg.vector_dim}, std::move(v));
        return s;
    }

    const std::size_t plane = static_cast<std::size_t>(cfg.height) * cfg.width;
    std::vector<double> px(plane, 0.0);
    const auto mask = foreground_mask(cfg, klass);
    const auto pattern = foreground_pattern(cfg, klass);

    // Per-sample stripe amplitude and phase, so the planted shift degrades
    // transfer gradually instead of all-or-nothing.
    const bool stripes = bg == BackgroundStyle::TargetStripes;
    const double amplitude = stripes ? cfg.stripe_intensity * rng.uniform(0.4, 1.0) : 0.0;
    const int phase = stripes ? static_cast<int>(rng.below(cfg.stripe_period)) : 0;

    for (int r = 0; r < cfg.height; ++r) {
        const bool striped =
            stripes && ((r + phase) % cfg.stripe_period) < cfg.stripe_period / 2;
        for (int c = 0; c < cfg.width; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * cfg.width + c;
            if (mask[i]) {
                px[i] = pattern[i];
            } else {
                px[i] = rng.uniform(0.0, cfg.background_noise);
                if (striped) px[i] += amplitude;
            }
        }
    }
    for (auto& v : px) v = std::clamp(v + cfg.noise_sigma * rng.normal(), 0.0, 1.0);

    s.x = tensor({cfg.channels, cfg.height, cfg.width}, std::move(px));
    return s;
}

Dataset make_split(const SyntheticConfig& cfg, int per_class, Domain domain, BackgroundStyle bg,
                   bool labeled, Rng& rng) {
    validate(cfg);
    if (per_class < 1) throw ConfigError("per-class sample counts must be at least 1");
    Dataset out;
    if (cfg.vector_mode) {
        out.channels = 1;
        out.height = 1;
        out.width = cfg.vector_dim;
    } else {
        out.channels = cfg.channels;
        out.height = cfg.height;
        out.width = cfg.width;
    }
    out.samples.reserve(static_cast<std::size_t>(per_class) * cfg.num_classes);
    for (int k = 0; k < cfg.num_classes; ++k) {
        for (int i = 0; i < per_class; ++i) {
            Sample s = make_sample(cfg, k, domain, bg, rng);
            if (!labeled) s.label = kUnlabeled;
            out.samples.push_back(std::move(s));
        }
    }
    return out;
}

DomainData generate(const SyntheticConfig& cfg) {
    validate(cfg);
    Rng root(cfg.seed);
    Rng src_rng = root.split(stream_tag("source_train"));
    Rng tgt_train_rng = root.split(stream_tag("target_train"));
    Rng tgt_test_rng = root.split(stream_tag("target_test"));

    DomainData data;
    data.source_train = make_split(cfg, cfg.n_source_per_class, Domain::Source,
                                   BackgroundStyle::SourceNoise, true, src_rng);
    data.target_train = make_split(cfg, cfg.n_target_train_per_class, Domain::Target,
                                   BackgroundStyle::TargetStripes, false, tgt_train_rng);
    data.target_test = make_split(cfg, cfg.n_target_test_per_class, Domain::Target,
                                  BackgroundStyle::TargetStripes, true, tgt_test_rng);
    return data;
}

void export_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);

    const std::size_t n =
        static_cast<std::size_t>(dataset.channels) * dataset.height * dataset.width;
    out << "domain,label";
    for (std::size_t i = 0; i < n; ++i) out << ",pixel_" << i;
    out << '\n';

    char buf[32];
    for (const auto& s : dataset.samples) {
        out << (s.domain == Domain::Source ? "source" : "target") << ',' << s.label;
        for (double v : s.x->data) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw DataError("failed writing " + path);
}

namespace {

// Shape recovery from a bare pixel count: square counts >= 64 are images,
// anything else is a flat vector. Generation conventions keep the two modes
// on opposite sides of the rule (images are >= 16x16, blob vectors small).
void infer_dims(std::size_t n, Dataset& out) {
    const auto side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    if (side >= 8 && static_cast<std::size_t>(side) * side == n) {
        out.channels = 1;
        out.height = side;
        out.width = side;
    } else {
        out.channels = 1;
        out.height = 1;
        out.width = static_cast<int>(n);
    }
}

}  // namespace

Dataset import_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ":1: missing header");
    std::size_t pixel_count = 0;
    {
        std::stringstream header(line);
        std::string col;
        if (!std::getline(header, col, ',') || col != "domain") {
            throw ParseError(path + ":1: expected first column 'domain'");
        }
        if (!std::getline(header, col, ',') || col != "label") {
            throw ParseError(path + ":1: expected second column 'label'");
        }
        while (std::getline(header, col, ',')) {
            if (col != "pixel_" + std::to_string(pixel_count)) {
                throw ParseError(path + ":1: unexpected column '" + col + "'");
            }
            ++pixel_count;
        }
        if (pixel_count == 0) throw ParseError(path + ":1: no pixel columns");
    }

    Dataset out;
    infer_dims(pixel_count, out);

    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;

        Sample s;
        if (!std::getline(row, cell, ',')) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": empty row");
        }
        if (cell == "source") {
            s.domain = Domain::Source;
        } else if (cell == "target") {
            s.domain = Domain::Target;
        } else {
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad domain '" + cell + "'");
        }

        if (!std::getline(row, cell, ',')) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": missing label");
        }
        try {
            std::size_t pos = 0;
            s.label = std::stoi(cell, &pos);
            if (pos != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad label '" + cell + "'");
        }

        std::vector<double> px;
        px.reserve(pixel_count);
        while (std::getline(row, cell, ',')) {
            try {
                std::size_t pos = 0;
                px.push_back(std::stod(cell, &pos));
                if (pos != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw ParseError(path + ":" + std::to_string(lineno) + ": bad pixel '" + cell +
                                 "'");
            }
        }
        if (px.size() != pixel_count) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(pixel_count) + " pixels, got " +
                             std::to_string(px.size()));
        }
        s.x = tensor({out.channels, out.height, out.width}, std::move(px));
        out.samples.push_back(std::move(s));
    }
    return out;
}

}  // namespace toalign
