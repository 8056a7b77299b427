#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toalign/rng.hpp"
#include "toalign/tensor.hpp"

namespace toalign {

enum class Domain { Source, Target };

inline constexpr int kUnlabeled = -1;

struct Sample {
    TensorPtr x;                // [C x H x W], pixel values in [0, 1]
    int label = kUnlabeled;     // class index, kUnlabeled for unlabeled target
    Domain domain = Domain::Source;
};

struct Dataset {
    std::vector<Sample> samples;
    int channels = 1;
    int height = 0;
    int width = 0;

    std::size_t size() const { return samples.size(); }
};

struct DomainData {
    Dataset source_train;   // labeled
    Dataset target_train;   // unlabeled
    Dataset target_test;    // labeled, disjoint from target_train
};

// Two-domain synthetic images with planted structure: the class decides a
// bright foreground patch at a class-fixed location whose texture also
// depends on the class (solid disk / checkerboard / diagonal grating); the
// domain decides the background (source: low uniform noise, target:
// horizontal stripes). Foreground pixels are never touched by the
// background, so the domain shift is task-irrelevant by construction.
struct SyntheticConfig {
    int num_classes = 3;
    int channels = 1;
    int height = 16;
    int width = 16;
    int n_source_per_class = 64;
    int n_target_train_per_class = 64;
    int n_target_test_per_class = 32;
    double foreground_intensity = 0.9;
    double background_noise = 0.15;     // source background: U(0, background_noise)
    double stripe_intensity = 0.4;      // target background stripes
    int stripe_period = 4;              // stripes cover rows with (row % period) < period/2
    double noise_sigma = 0.02;          // additive pixel noise, clamped to [0, 1]
    bool vector_mode = false;           // flat Gaussian-blob vectors for fast tests
    int vector_dim = 12;
    std::uint64_t seed = 7;
};

enum class BackgroundStyle { SourceNoise, TargetStripes };

void validate(const SyntheticConfig& cfg);

// Pixels owned by the class's foreground patch (image mode only).
std::vector<bool> foreground_mask(const SyntheticConfig& cfg, int klass);

// Noise-free pixel values of the class's foreground patch over a zero image;
// the rendering source of truth, also usable as a matching template.
std::vector<double> foreground_pattern(const SyntheticConfig& cfg, int klass);

Sample make_sample(const SyntheticConfig& cfg, int klass, Domain domain, BackgroundStyle bg,
                   Rng& rng);

// One split, class-balanced: per_class samples of every class, in class order.
Dataset make_split(const SyntheticConfig& cfg, int per_class, Domain domain, BackgroundStyle bg,
                   bool labeled, Rng& rng);

// The three standard splits, deterministic per cfg.seed.
DomainData generate(const SyntheticConfig& cfg);

// CSV with header "domain,label,pixel_0..pixel_{N-1}"; unlabeled rows carry
// label -1; values serialized at full precision so round trips are bitwise.
void export_csv(const Dataset& dataset, const std::string& path);
Dataset import_csv(const std::string& path);

}  // namespace toalign
