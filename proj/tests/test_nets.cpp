#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "toalign/errors.hpp"
#include "toalign/decompose.hpp"
#include "toalign/nets.hpp"
#include "toalign/selfcheck.hpp"

using namespace toalign;

namespace {

Networks make_nets(std::uint64_t seed, NetConfig cfg = {}) {
    Rng rng(seed);
    return Networks(cfg, rng);
}

TensorPtr random_image(Rng& rng, int h = 16, int w = 16) {
    std::vector<double> px(static_cast<std::size_t>(h) * w);
    for (auto& v : px) v = rng.uniform(0.0, 1.0);
    return tensor({1, h, w}, std::move(px));
}

}  // namespace

TEST_CASE("zero input with zero biases pools to zero") {
    auto nets = make_nets(3);
    auto out = nets.extractor.forward(zeros({1, 16, 16}));
    for (double v : out.pooled->data) CHECK(v == 0.0);
}

TEST_CASE("feature map is non-negative for random inputs and weights") {
    Rng rng(11);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto nets = make_nets(seed);
        auto out = nets.extractor.forward(random_image(rng));
        for (double v : out.feature_map->data) CHECK(v >= 0.0);
    }
}

TEST_CASE("pooled feature equals an independent per-channel mean") {
    Rng rng(12);
    auto nets = make_nets(4);
    auto out = nets.extractor.forward(random_image(rng));
    const auto& f = *out.feature_map;
    const int m = f.shape[0];
    const std::size_t plane = static_cast<std::size_t>(f.shape[1]) * f.shape[2];
    for (int c = 0; c < m; ++c) {
        double s = 0.0;
        for (std::size_t p = 0; p < plane; ++p) s += f.data[c * plane + p];
        CHECK(out.pooled->data[static_cast<std::size_t>(c)] == s / static_cast<double>(plane));
    }
}

TEST_CASE("extractor rejects undersized input") {
    auto nets = make_nets(5);
    CHECK_THROWS_AS(nets.extractor.forward(zeros({1, 4, 4})), DimensionError);
    CHECK_THROWS_AS(nets.extractor.forward(zeros({2, 16, 16})), DimensionError);
}

TEST_CASE("classifier affine structure") {
    Rng rng(6);
    Classifier clf(8, 3, rng);

    // zero weights and biases give zero logits
    for (auto& p : clf.parameters()) std::fill(p->data.begin(), p->data.end(), 0.0);
    auto logits = clf.forward(full({8}, 0.4));
    for (double v : logits->data) CHECK(v == 0.0);

    // with a bias restored, the zero feature maps onto the bias
    clf.parameters()[1]->data = {0.3, -0.7, 1.1};
    auto at_zero = clf.forward(zeros({8}));
    CHECK(at_zero->data == std::vector<double>{0.3, -0.7, 1.1});

    // linearity after removing the bias
    Rng vrng(7);
    Classifier lin(6, 4, vrng);
    std::vector<double> fvals(6);
    for (auto& v : fvals) v = vrng.uniform(-1.0, 1.0);
    auto f = tensor({6}, fvals);
    const auto bias = lin.parameters()[1]->data;
    auto y1 = lin.forward(f);
    auto y2 = lin.forward(scale(f, 2.0));
    for (int k = 0; k < 4; ++k) {
        const double lhs = y2->data[static_cast<std::size_t>(k)] - bias[static_cast<std::size_t>(k)];
        const double rhs = 2.0 * (y1->data[static_cast<std::size_t>(k)] - bias[static_cast<std::size_t>(k)]);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("discriminator with a zeroed final layer answers 0.5") {
    Rng rng(8);
    Discriminator d(10, 16, 0.5, rng);
    auto params = d.parameters();
    std::fill(params[4]->data.begin(), params[4]->data.end(), 0.0);  // fc3 weight
    std::fill(params[5]->data.begin(), params[5]->data.end(), 0.0);  // fc3 bias
    Rng drop(1);
    auto p = d.forward(full({10}, 0.3), Mode::Eval, drop);
    CHECK(p->item() == 0.5);
}

TEST_CASE("discriminator rejects inputs of the wrong width") {
    Rng rng(14);
    Discriminator d(6, 16, 0.5, rng);
    Rng drop(1);
    CHECK_THROWS_AS(d.forward(full({7}, 0.1), Mode::Eval, drop), DimensionError);
}

TEST_CASE("positive features always map to finite logits") {
    Rng rng(15);
    NetConfig nc;
    nc.feature_dim = 10;
    nc.num_classes = 4;
    nc.disc_input_dim = 10;
    Rng init(16);
    Networks nets(nc, init);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> fv(10), wv(10);
        for (auto& v : fv) v = rng.uniform(-1.0, 1.0);
        for (auto& v : wv) v = rng.uniform(-1.0, 1.0);
        auto dec = decompose(tensor({10}, fv, true), tensor({10}, wv));
        auto logits = nets.classifier.forward(dec.positive);
        CHECK(all_finite(*logits));
    }
}

TEST_CASE("discriminator eval mode is deterministic and clamped") {
    Rng rng(9);
    Discriminator d(6, 16, 0.5, rng);
    Rng drop_a(10), drop_b(99);
    auto v = full({6}, 0.25);
    CHECK(d.forward(v, Mode::Eval, drop_a)->item() == d.forward(v, Mode::Eval, drop_b)->item());

    Rng vrng(10);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> vals(6);
        for (auto& x : vals) x = vrng.uniform(-40.0, 40.0);
        const double p = d.forward(tensor({6}, vals), Mode::Eval, drop_a)->item();
        CHECK(p >= kProbEps);
        CHECK(p <= 1.0 - kProbEps);
    }
}

TEST_CASE("initialization is seed-deterministic") {
    auto a = make_nets(1234);
    auto b = make_nets(1234);
    CHECK(parameter_fingerprint(a) == parameter_fingerprint(b));

    auto c = make_nets(1235);
    CHECK(parameter_fingerprint(a) != parameter_fingerprint(c));
}

TEST_CASE("glorot fill is centered") {
    Rng rng(20);
    const int fan_in = 100, fan_out = 100;
    auto w = glorot_uniform({100, 100}, fan_in, fan_out, rng);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    double mean = 0.0;
    for (double v : w->data) {
        CHECK(std::fabs(v) <= a);
        mean += v;
    }
    mean /= static_cast<double>(w->numel());
    CHECK(std::fabs(mean) <= 3.0 * a / std::sqrt(12.0 * 1e4));
}

TEST_CASE("checkpoint round trip restores every value bitwise") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "toalign_ckpt_test";
    fs::create_directories(dir);
    const auto path = (dir / "nets.json").string();

    auto saved = make_nets(777);
    save_checkpoint(saved, path);

    auto restored = make_nets(1);
    CHECK(parameter_fingerprint(saved) != parameter_fingerprint(restored));
    load_checkpoint(restored, path);
    CHECK(parameter_fingerprint(saved) == parameter_fingerprint(restored));

    fs::remove_all(dir);
}

TEST_CASE("loading a checkpoint with the wrong architecture fails") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "toalign_ckpt_mismatch";
    fs::create_directories(dir);
    const auto path = (dir / "nets.json").string();

    auto saved = make_nets(1);
    save_checkpoint(saved, path);

    NetConfig other;
    other.feature_dim = 16;
    other.disc_input_dim = 16;
    auto wrong = make_nets(2, other);
    CHECK_THROWS_AS(load_checkpoint(wrong, path), DimensionError);

    fs::remove_all(dir);
}

TEST_CASE("end-to-end gradient suites pass on a couple of seeds") {
    for (const auto& r : run_gradient_checks(2)) {
        INFO(r.name, ": ", r.detail);
        CHECK(r.passed);
    }
}
