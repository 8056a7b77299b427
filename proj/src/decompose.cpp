#include "toalign/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "toalign/errors.hpp"
#include "toalign/ops.hpp"

namespace toalign {

TensorPtr class_gradient(const TensorPtr& pooled, const Classifier& classifier, int label) {
    if (label < 0 || label >= classifier.num_classes()) {
        throw IndexError("class_gradient: label " + std::to_string(label) + " out of range [0, " +
                         std::to_string(classifier.num_classes()) + ")");
    }
    // A bare value tensor is not on any tape; differentiate through a
    // grad-enabled alias at the same point instead.
    const TensorPtr probe =
        pooled->requires_grad ? pooled : tensor(pooled->shape, pooled->data, true);
    auto score = pick(classifier.forward(probe), label);
    return tensor(pooled->shape, partial(score, probe), false);
}

double energy_scale(const TensorPtr& pooled, const TensorPtr& weights) {
    if (pooled->shape != weights->shape) {
        throw DimensionError("energy_scale: " + shape_str(pooled->shape) + " vs " +
                             shape_str(weights->shape));
    }
    double feat_sq = 0.0;
    double weighted_sq = 0.0;
    for (std::size_t i = 0; i < pooled->numel(); ++i) {
        const double f = pooled->data[i];
        const double wf = weights->data[i] * f;
        feat_sq += f * f;
        weighted_sq += wf * wf;
    }
    if (std::sqrt(weighted_sq) <= kDegenerateWeightThreshold) {
        throw DegenerateWeightError("energy_scale: ||w ⊙ f|| below threshold");
    }
    return std::sqrt(feat_sq / weighted_sq);
}

DecomposedFeature decompose(const TensorPtr& pooled, const TensorPtr& attention) {
    DecomposedFeature out;
    out.pooled = pooled;
    out.attention = detach(attention);
    out.energy_scale = energy_scale(pooled, out.attention);
    out.positive = scale(hadamard(out.attention, pooled), out.energy_scale);
    out.negative = scale(out.positive, -1.0);
    return out;
}

Heatmap spatial_response_map(const TensorPtr& feature_map, const std::vector<double>& weights,
                             int sign) {
    if (feature_map->shape.size() != 3) {
        throw DimensionError("spatial_response_map expects [M x H x W], got " +
                             shape_str(feature_map->shape));
    }
    const int m = feature_map->shape[0];
    const int h = feature_map->shape[1], w = feature_map->shape[2];
    if (static_cast<int>(weights.size()) != m) {
        throw DimensionError("spatial_response_map: " + std::to_string(weights.size()) +
                             " weights for " + std::to_string(m) + " channels");
    }
    if (sign != 1 && sign != -1) throw ContractError("spatial_response_map: sign must be +1 or -1");

    Heatmap map;
    map.height = h;
    map.width = w;
    map.values.assign(static_cast<std::size_t>(h) * w, 0.0);
    const std::size_t plane = map.values.size();
    for (std::size_t p = 0; p < plane; ++p) {
        double s = 0.0;
        for (int ci = 0; ci < m; ++ci) {
            s += weights[static_cast<std::size_t>(ci)] * feature_map->data[ci * plane + p];
        }
        map.values[p] = std::max(0.0, sign * s);
    }
    const double peak = *std::max_element(map.values.begin(), map.values.end());
    if (peak > 0.0) {
        for (double& v : map.values) v /= peak;
    }
    return map;
}

void write_pgm(const Heatmap& map, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
    for (double v : map.values) {
        const int level = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        out.put(static_cast<char>(level));
    }
    if (!out) throw DataError("failed writing " + path);
}

void write_heatmap_csv(const Heatmap& map, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    char buf[32];
    for (int i = 0; i < map.height; ++i) {
        for (int j = 0; j < map.width; ++j) {
            if (j) out << ',';
            std::snprintf(buf, sizeof buf, "%.17g", map.values[static_cast<std::size_t>(i) * map.width + j]);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw DataError("failed writing " + path);
}

Heatmap read_heatmap_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    Heatmap map;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        int cols = 0;
        while (std::getline(row, cell, ',')) {
            std::size_t pos = 0;
            double v;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                throw ParseError(path + ":" + std::to_string(lineno) + ": bad value '" + cell + "'");
            }
            if (pos != cell.size()) {
                throw ParseError(path + ":" + std::to_string(lineno) + ": bad value '" + cell + "'");
            }
            map.values.push_back(v);
            ++cols;
        }
        if (map.width == 0) {
            map.width = cols;
        } else if (cols != map.width) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": ragged row");
        }
        ++map.height;
    }
    return map;
}

}  // namespace toalign
