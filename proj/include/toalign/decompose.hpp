#pragma once

#include <string>
#include <vector>

#include "toalign/nets.hpp"
#include "toalign/tensor.hpp"

namespace toalign {

// ||w ⊙ f|| at or below this threshold makes the energy rescaling unusable.
inline constexpr double kDegenerateWeightThreshold = 1e-12;

// Task-oriented split of a pooled feature. `positive` carries the
// class-discriminative content at the original feature energy; `negative` is
// its exact sign flip. Gradient flows through `positive`/`negative` into the
// pooled feature only — the attention weights and the scale are constants.
struct DecomposedFeature {
    TensorPtr pooled;     // f, still attached to its tape
    TensorPtr attention;  // detached channel weights (d logit_k / d f)
    double energy_scale = 0.0;
    TensorPtr positive;   // energy_scale * attention ⊙ f
    TensorPtr negative;   // -positive
};

// Channel-importance weights for the ground-truth class: the gradient of the
// pre-softmax logit of class `label` w.r.t. the pooled feature. The result is
// detached; no gradient ever flows back through it.
TensorPtr class_gradient(const TensorPtr& pooled, const Classifier& classifier, int label);

// Factor s making ||s * w ⊙ f||^2 == ||f||^2. Throws DegenerateWeightError
// when ||w ⊙ f|| <= kDegenerateWeightThreshold; callers fall back to the
// undecomposed feature and count the event.
double energy_scale(const TensorPtr& pooled, const TensorPtr& weights);

DecomposedFeature decompose(const TensorPtr& pooled, const TensorPtr& attention);

// Spatial response map, values normalized to [0, 1] (an all-zero map stays
// all-zero). sign = +1 highlights task-discriminative cells, -1 the
// task-irrelevant ones.
struct Heatmap {
    int height = 0;
    int width = 0;
    std::vector<double> values;  // row-major, in [0, 1]
};

Heatmap spatial_response_map(const TensorPtr& feature_map, const std::vector<double>& weights,
                             int sign);

// 8-bit grayscale P5 output plus a full-precision CSV twin.
void write_pgm(const Heatmap& map, const std::string& path);
void write_heatmap_csv(const Heatmap& map, const std::string& path);
Heatmap read_heatmap_csv(const std::string& path);

}  // namespace toalign
