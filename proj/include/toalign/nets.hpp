#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "toalign/ops.hpp"
#include "toalign/rng.hpp"
#include "toalign/tensor.hpp"

namespace toalign {

// Glorot-uniform fill: entries ~ U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
TensorPtr glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng);

struct ConvLayer {
    TensorPtr weight;  // [C_out x C_in x 3 x 3]
    TensorPtr bias;    // [C_out]
};

struct LinearLayer {
    TensorPtr weight;  // [out x in]
    TensorPtr bias;    // [out]

    // y = W x + b for a rank-1 input.
    TensorPtr apply(const TensorPtr& x) const;
};

// Two conv blocks (conv 3x3 pad 1 -> ReLU -> 2x avg pool), channels
// in -> mid -> out. Emits the non-negative feature map and its spatial mean.
class Extractor {
public:
    Extractor(int in_channels, int mid_channels, int out_channels, Rng& rng);

    struct Output {
        TensorPtr feature_map;  // [M x H/4 x W/4], entries >= 0
        TensorPtr pooled;       // [M]
    };

    // Input spatial dims must be at least 8x8 and divisible by 4.
    Output forward(const TensorPtr& image) const;

    std::vector<TensorPtr> parameters() const;
    std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;

    int out_channels() const { return out_channels_; }

private:
    ConvLayer conv1_;
    ConvLayer conv2_;
    int in_channels_;
    int out_channels_;
};

// Single affine map from pooled features to class logits.
class Classifier {
public:
    Classifier(int feature_dim, int num_classes, Rng& rng);

    TensorPtr forward(const TensorPtr& pooled) const;

    std::vector<TensorPtr> parameters() const;
    std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;

    int num_classes() const { return layer_.weight->shape[0]; }
    int feature_dim() const { return layer_.weight->shape[1]; }
    const LinearLayer& layer() const { return layer_; }

private:
    LinearLayer layer_;
};

// Three affine layers with ReLU + dropout after the first two; sigmoid output
// clamped away from {0, 1}. Input width is fixed at construction (features or
// class probabilities, depending on the method).
class Discriminator {
public:
    Discriminator(int input_dim, int hidden_dim, double dropout_rate, Rng& rng);

    // Scalar probability that the input came from the source domain.
    TensorPtr forward(const TensorPtr& input, Mode mode, Rng& dropout_rng) const;

    std::vector<TensorPtr> parameters() const;
    std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;

    int input_dim() const { return fc1_.weight->shape[1]; }

private:
    LinearLayer fc1_;
    LinearLayer fc2_;
    LinearLayer fc3_;
    double dropout_rate_;
};

struct NetConfig {
    int in_channels = 1;
    int mid_channels = 16;
    int feature_dim = 32;        // M
    int num_classes = 3;         // K
    int disc_input_dim = 32;     // M for feature-fed methods, K for DANNP
    int disc_hidden = 64;
    double dropout_rate = 0.5;
};

struct Networks {
    Networks(const NetConfig& cfg, Rng& init_rng);

    Extractor extractor;
    Classifier classifier;
    Discriminator discriminator;

    std::vector<TensorPtr> parameters() const;
    std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;
};

// JSON checkpoint: {"layers": {name: {"shape": [...], "data": [...]}}}.
// Values round-trip exactly (shortest-representation doubles).
void save_checkpoint(const Networks& nets, const std::string& path);
void load_checkpoint(Networks& nets, const std::string& path);

// Order-sensitive hash over the raw parameter bytes.
std::uint64_t parameter_fingerprint(const Networks& nets);

}  // namespace toalign
