#include "toalign/nets.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "toalign/errors.hpp"

namespace toalign {

TensorPtr glorot_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = rng.uniform(-a, a);
    return tensor(std::move(shape), std::move(data), true);
}

TensorPtr LinearLayer::apply(const TensorPtr& x) const {
    const int in = weight->shape[1];
    const int out = weight->shape[0];
    if (x->shape.size() != 1 || x->shape[0] != in) {
        throw DimensionError("linear layer expects input [" + std::to_string(in) + "], got " +
                             shape_str(x->shape));
    }
    auto col = reshape(x, {in, 1});
    auto prod = reshape(matmul(weight, col), {out});
    return add(prod, bias);
}

namespace {

ConvLayer make_conv(int c_in, int c_out, Rng& rng) {
    ConvLayer layer;
    layer.weight = glorot_uniform({c_out, c_in, 3, 3}, c_in * 9, c_out * 9, rng);
    layer.bias = zeros({c_out}, true);
    return layer;
}

LinearLayer make_linear(int in, int out, Rng& rng) {
    LinearLayer layer;
    layer.weight = glorot_uniform({out, in}, in, out, rng);
    layer.bias = zeros({out}, true);
    return layer;
}

}  // namespace

Extractor::Extractor(int in_channels, int mid_channels, int out_channels, Rng& rng)
    : conv1_(make_conv(in_channels, mid_channels, rng)),
      conv2_(make_conv(mid_channels, out_channels, rng)),
      in_channels_(in_channels),
      out_channels_(out_channels) {}

Extractor::Output Extractor::forward(const TensorPtr& image) const {
    if (image->shape.size() != 3 || image->shape[0] != in_channels_) {
        throw DimensionError("extractor expects [" + std::to_string(in_channels_) +
                             " x H x W], got " + shape_str(image->shape));
    }
    if (image->shape[1] < 8 || image->shape[2] < 8) {
        throw DimensionError("extractor input must be at least 8x8, got " +
                             shape_str(image->shape));
    }
    auto h1 = avg_pool2(relu(add_channel_bias(conv2d(image, conv1_.weight), conv1_.bias)));
    auto feature_map =
        avg_pool2(relu(add_channel_bias(conv2d(h1, conv2_.weight), conv2_.bias)));
    auto pooled = gap(feature_map);
    return {feature_map, pooled};
}

std::vector<TensorPtr> Extractor::parameters() const {
    return {conv1_.weight, conv1_.bias, conv2_.weight, conv2_.bias};
}

std::vector<std::pair<std::string, TensorPtr>> Extractor::named_parameters() const {
    return {{"extractor.conv1.weight", conv1_.weight},
            {"extractor.conv1.bias", conv1_.bias},
            {"extractor.conv2.weight", conv2_.weight},
            {"extractor.conv2.bias", conv2_.bias}};
}

Classifier::Classifier(int feature_dim, int num_classes, Rng& rng)
    : layer_(make_linear(feature_dim, num_classes, rng)) {}

TensorPtr Classifier::forward(const TensorPtr& pooled) const {
    return layer_.apply(pooled);
}

std::vector<TensorPtr> Classifier::parameters() const {
    return {layer_.weight, layer_.bias};
}

std::vector<std::pair<std::string, TensorPtr>> Classifier::named_parameters() const {
    return {{"classifier.fc.weight", layer_.weight}, {"classifier.fc.bias", layer_.bias}};
}

Discriminator::Discriminator(int input_dim, int hidden_dim, double dropout_rate, Rng& rng)
    : fc1_(make_linear(input_dim, hidden_dim, rng)),
      fc2_(make_linear(hidden_dim, hidden_dim, rng)),
      fc3_(make_linear(hidden_dim, 1, rng)),
      dropout_rate_(dropout_rate) {}

TensorPtr Discriminator::forward(const TensorPtr& input, Mode mode, Rng& dropout_rng) const {
    auto h1 = dropout(relu(fc1_.apply(input)), dropout_rate_, mode, dropout_rng);
    auto h2 = dropout(relu(fc2_.apply(h1)), dropout_rate_, mode, dropout_rng);
    auto logit = reshape(fc3_.apply(h2), {});
    return sigmoid(logit);
}

std::vector<TensorPtr> Discriminator::parameters() const {
    return {fc1_.weight, fc1_.bias, fc2_.weight, fc2_.bias, fc3_.weight, fc3_.bias};
}

std::vector<std::pair<std::string, TensorPtr>> Discriminator::named_parameters() const {
    return {{"discriminator.fc1.weight", fc1_.weight}, {"discriminator.fc1.bias", fc1_.bias},
            {"discriminator.fc2.weight", fc2_.weight}, {"discriminator.fc2.bias", fc2_.bias},
            {"discriminator.fc3.weight", fc3_.weight}, {"discriminator.fc3.bias", fc3_.bias}};
}

Networks::Networks(const NetConfig& cfg, Rng& init_rng)
    : extractor(cfg.in_channels, cfg.mid_channels, cfg.feature_dim, init_rng),
      classifier(cfg.feature_dim, cfg.num_classes, init_rng),
      discriminator(cfg.disc_input_dim, cfg.disc_hidden, cfg.dropout_rate, init_rng) {}

std::vector<TensorPtr> Networks::parameters() const {
    std::vector<TensorPtr> all = extractor.parameters();
    for (const auto& p : classifier.parameters()) all.push_back(p);
    for (const auto& p : discriminator.parameters()) all.push_back(p);
    return all;
}

std::vector<std::pair<std::string, TensorPtr>> Networks::named_parameters() const {
    auto all = extractor.named_parameters();
    for (auto& p : classifier.named_parameters()) all.push_back(std::move(p));
    for (auto& p : discriminator.named_parameters()) all.push_back(std::move(p));
    return all;
}

void save_checkpoint(const Networks& nets, const std::string& path) {
    nlohmann::json layers = nlohmann::json::object();
    for (const auto& [name, param] : nets.named_parameters()) {
        layers[name] = {{"shape", param->shape}, {"data", param->data}};
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    out << nlohmann::json{{"layers", layers}}.dump();
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

void load_checkpoint(Networks& nets, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint " + path + ": " + e.what());
    }
    const auto& layers = doc.at("layers");
    for (auto& [name, param] : nets.named_parameters()) {
        if (!layers.contains(name)) throw DataError("checkpoint missing layer " + name);
        const auto& entry = layers.at(name);
        const auto shape = entry.at("shape").get<std::vector<int>>();
        if (shape != param->shape) {
            throw DimensionError("checkpoint layer " + name + " has shape " + shape_str(shape) +
                                 ", expected " + shape_str(param->shape));
        }
        param->data = entry.at("data").get<std::vector<double>>();
        if (param->data.size() != param->numel()) {
            throw DataError("checkpoint layer " + name + " has wrong value count");
        }
    }
}

std::uint64_t parameter_fingerprint(const Networks& nets) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& param : nets.parameters()) {
        for (double v : param->data) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            for (int shift = 0; shift < 64; shift += 8) {
                h ^= (bits >> shift) & 0xff;
                h *= 0x100000001b3ull;
            }
        }
    }
    return h;
}

}  // namespace toalign
