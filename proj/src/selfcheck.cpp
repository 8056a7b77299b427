#include "toalign/selfcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "toalign/decompose.hpp"
#include "toalign/errors.hpp"
#include "toalign/gradcheck.hpp"
#include "toalign/nets.hpp"
#include "toalign/ops.hpp"
#include "toalign/train.hpp"

namespace toalign {

namespace {

constexpr double kStep = 1e-4;
constexpr double kTol = 1e-4;
constexpr double kKinkMargin = 1e-3;

TensorPtr random_leaf(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return tensor(std::move(shape), std::move(data), true);
}

// Random entries kept clear of the ReLU kink.
TensorPtr random_leaf_off_kink(std::vector<int> shape, Rng& rng) {
    auto t = random_leaf(std::move(shape), rng);
    for (auto& v : t->data) {
        while (std::fabs(v) < kKinkMargin) v = rng.uniform(-1.0, 1.0);
    }
    return t;
}

// Scalar readout with generic weights so no gradient degenerates to zero.
TensorPtr weighted_readout(const TensorPtr& out, Rng& rng) {
    std::vector<double> w(out->numel());
    for (auto& v : w) v = rng.uniform(0.25, 1.75);
    return sum(hadamard(out, tensor(out->shape, std::move(w))));
}

struct OpProbe {
    std::string name;
    // Builds leaves and returns (loss builder, leaves to check).
    std::function<std::pair<std::function<TensorPtr()>, std::vector<TensorPtr>>(Rng&)> build;
};

CheckResult fd_check_ops(int seeds) {
    std::vector<OpProbe> probes;

    probes.push_back({"matmul", [](Rng& rng) {
        auto a = random_leaf({3, 4}, rng);
        auto b = random_leaf({4, 2}, rng);
        return std::pair{std::function<TensorPtr()>([a, b] { return matmul(a, b); }),
                         std::vector<TensorPtr>{a, b}};
    }});
    probes.push_back({"conv2d", [](Rng& rng) {
        auto x = random_leaf({2, 6, 6}, rng);
        auto k = random_leaf({3, 2, 3, 3}, rng);
        return std::pair{std::function<TensorPtr()>([x, k] { return conv2d(x, k); }),
                         std::vector<TensorPtr>{x, k}};
    }});
    probes.push_back({"add_channel_bias", [](Rng& rng) {
        auto x = random_leaf({3, 4, 4}, rng);
        auto b = random_leaf({3}, rng);
        return std::pair{std::function<TensorPtr()>([x, b] { return add_channel_bias(x, b); }),
                         std::vector<TensorPtr>{x, b}};
    }});
    probes.push_back({"relu", [](Rng& rng) {
        auto x = random_leaf_off_kink({12}, rng);
        return std::pair{std::function<TensorPtr()>([x] { return relu(x); }),
                         std::vector<TensorPtr>{x}};
    }});
    probes.push_back({"avg_pool2", [](Rng& rng) {
        auto x = random_leaf({2, 4, 4}, rng);
        return std::pair{std::function<TensorPtr()>([x] { return avg_pool2(x); }),
                         std::vector<TensorPtr>{x}};
    }});
    probes.push_back({"gap", [](Rng& rng) {
        auto x = random_leaf({4, 3, 3}, rng);
        return std::pair{std::function<TensorPtr()>([x] { return gap(x); }),
                         std::vector<TensorPtr>{x}};
    }});
    probes.push_back({"hadamard", [](Rng& rng) {
        auto a = random_leaf({8}, rng);
        auto b = random_leaf({8}, rng);
        return std::pair{std::function<TensorPtr()>([a, b] { return hadamard(a, b); }),
                         std::vector<TensorPtr>{a, b}};
    }});
    probes.push_back({"add", [](Rng& rng) {
        auto a = random_leaf({7}, rng);
        auto b = random_leaf({7}, rng);
        return std::pair{std::function<TensorPtr()>([a, b] { return add(a, b); }),
                         std::vector<TensorPtr>{a, b}};
    }});
    probes.push_back({"scale", [](Rng& rng) {
        auto a = random_leaf({6}, rng);
        return std::pair{std::function<TensorPtr()>([a] { return scale(a, -1.7); }),
                         std::vector<TensorPtr>{a}};
    }});
    probes.push_back({"sum", [](Rng& rng) {
        auto a = random_leaf({9}, rng);
        return std::pair{std::function<TensorPtr()>([a] { return reshape(sum(a), {1}); }),
                         std::vector<TensorPtr>{a}};
    }});
    probes.push_back({"reshape", [](Rng& rng) {
        auto a = random_leaf({3, 4}, rng);
        return std::pair{std::function<TensorPtr()>([a] { return reshape(a, {2, 6}); }),
                         std::vector<TensorPtr>{a}};
    }});
    probes.push_back({"pick", [](Rng& rng) {
        auto a = random_leaf({5}, rng);
        return std::pair{std::function<TensorPtr()>([a] { return reshape(pick(a, 3), {1}); }),
                         std::vector<TensorPtr>{a}};
    }});
    probes.push_back({"sigmoid", [](Rng& rng) {
        auto x = random_leaf({6}, rng, -2.5, 2.5);
        return std::pair{std::function<TensorPtr()>([x] { return sigmoid(x); }),
                         std::vector<TensorPtr>{x}};
    }});
    probes.push_back({"softmax", [](Rng& rng) {
        auto x = random_leaf({5}, rng, -2.0, 2.0);
        return std::pair{std::function<TensorPtr()>([x] { return softmax(x); }),
                         std::vector<TensorPtr>{x}};
    }});
    probes.push_back({"softmax_cross_entropy", [](Rng& rng) {
        auto x = random_leaf({5}, rng, -2.0, 2.0);
        return std::pair{
            std::function<TensorPtr()>([x] { return reshape(softmax_cross_entropy(x, 2), {1}); }),
            std::vector<TensorPtr>{x}};
    }});
    probes.push_back({"binary_cross_entropy", [](Rng& rng) {
        auto p = random_leaf({}, rng, 0.05, 0.95);
        return std::pair{
            std::function<TensorPtr()>([p] { return reshape(binary_cross_entropy(p, 1), {1}); }),
            std::vector<TensorPtr>{p}};
    }});
    probes.push_back({"dropout_eval", [](Rng& rng) {
        auto x = random_leaf({6}, rng);
        return std::pair{std::function<TensorPtr()>([x, &rng] {
                             return dropout(x, 0.5, Mode::Eval, rng);
                         }),
                         std::vector<TensorPtr>{x}};
    }});

    double worst = 0.0;
    std::string worst_tag;
    for (const auto& probe : probes) {
        for (int seed = 0; seed < seeds; ++seed) {
            Rng rng(0x5eedull + static_cast<std::uint64_t>(seed));
            auto [forward, leaves] = probe.build(rng);
            Rng readout_rng = rng.split(stream_tag("readout"));
            auto loss_of = [&, forward = forward]() {
                Rng local = readout_rng;  // identical readout weights per call
                return weighted_readout(forward(), local);
            };
            auto loss = loss_of();
            backward(loss);
            auto eval = [&]() { return loss_of()->item(); };
            for (const auto& leaf : leaves) {
                const auto report = check_gradient(eval, leaf, leaf->grad, kStep);
                if (report.max_rel_err > worst) {
                    worst = report.max_rel_err;
                    worst_tag = probe.name + "/seed" + std::to_string(seed);
                }
                leaf->zero_grad();
            }
        }
    }
    std::ostringstream detail;
    detail << "max rel err " << worst << " (" << worst_tag << ") over " << seeds << " seeds";
    return {"gradient/ops", worst < kTol, detail.str()};
}

// Forward passes rebuilt from the network parameters so every ReLU input is
// visible for the kink-exclusion rule. Eval mode throughout (dropout off).
struct ComposedForward {
    TensorPtr loss;
    std::vector<TensorPtr> preacts;
};

std::map<std::string, TensorPtr> param_map(const Networks& nets) {
    std::map<std::string, TensorPtr> map;
    for (const auto& [name, p] : nets.named_parameters()) map[name] = p;
    return map;
}

ComposedForward compose_classification(const std::map<std::string, TensorPtr>& p,
                                       const TensorPtr& image, int label) {
    ComposedForward out;
    auto z1 = add_channel_bias(conv2d(image, p.at("extractor.conv1.weight")),
                               p.at("extractor.conv1.bias"));
    out.preacts.push_back(z1);
    auto h1 = avg_pool2(relu(z1));
    auto z2 = add_channel_bias(conv2d(h1, p.at("extractor.conv2.weight")),
                               p.at("extractor.conv2.bias"));
    out.preacts.push_back(z2);
    auto fmap = avg_pool2(relu(z2));
    auto pooled = gap(fmap);
    const int k = p.at("classifier.fc.weight")->shape[0];
    auto logits = add(reshape(matmul(p.at("classifier.fc.weight"),
                                     reshape(pooled, {pooled->shape[0], 1})),
                              {k}),
                      p.at("classifier.fc.bias"));
    out.loss = softmax_cross_entropy(logits, label);
    return out;
}

ComposedForward compose_domain(const std::map<std::string, TensorPtr>& p, const TensorPtr& image,
                               double lambda, int target) {
    ComposedForward out;
    auto z1 = add_channel_bias(conv2d(image, p.at("extractor.conv1.weight")),
                               p.at("extractor.conv1.bias"));
    out.preacts.push_back(z1);
    auto h1 = avg_pool2(relu(z1));
    auto z2 = add_channel_bias(conv2d(h1, p.at("extractor.conv2.weight")),
                               p.at("extractor.conv2.bias"));
    out.preacts.push_back(z2);
    auto pooled = gap(avg_pool2(relu(z2)));

    auto lin = [&](const char* w, const char* b, const TensorPtr& x) {
        auto weight = p.at(w);
        return add(reshape(matmul(weight, reshape(x, {x->shape[0], 1})), {weight->shape[0]}),
                   p.at(b));
    };
    auto v = grl(pooled, lambda);
    auto d1 = lin("discriminator.fc1.weight", "discriminator.fc1.bias", v);
    out.preacts.push_back(d1);
    auto d2 = lin("discriminator.fc2.weight", "discriminator.fc2.bias", relu(d1));
    out.preacts.push_back(d2);
    auto prob = sigmoid(reshape(lin("discriminator.fc3.weight", "discriminator.fc3.bias", relu(d2)),
                                {}));
    out.loss = binary_cross_entropy(prob, target);
    return out;
}

bool clear_of_kinks(const ComposedForward& f) {
    for (const auto& t : f.preacts) {
        for (double v : t->data) {
            if (std::fabs(v) < kKinkMargin) return false;
        }
    }
    return true;
}

// Spread probe indices over a tensor.
std::vector<std::size_t> probe_indices(std::size_t n, std::size_t wanted) {
    std::vector<std::size_t> idx;
    const std::size_t count = std::min(n, wanted);
    for (std::size_t i = 0; i < count; ++i) idx.push_back(i * n / count);
    return idx;
}

CheckResult fd_check_composed(int seeds) {
    double worst = 0.0;
    std::string worst_tag;
    int skipped = 0;

    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(0xc0deull + 977u * static_cast<std::uint64_t>(seed));
        NetConfig nc;
        nc.in_channels = 1;
        nc.mid_channels = 5;
        nc.feature_dim = 7;
        nc.num_classes = 3;
        nc.disc_input_dim = 7;
        nc.disc_hidden = 11;
        Rng init = rng.split(stream_tag("init"));
        Networks nets(nc, init);
        // Zero-initialized biases leave exact-zero rectifier inputs on dead
        // padded patches, which no input resample can clear. Generic biases
        // keep every pre-activation away from the kink.
        for (const auto& p : nets.parameters()) {
            if (p->shape.size() != 1) continue;
            for (auto& v : p->data) {
                v = (init.uniform() < 0.5 ? -1.0 : 1.0) * init.uniform(0.05, 0.3);
            }
        }
        const auto params = param_map(nets);

        // inputs drawn until every rectifier input clears the kink margin
        TensorPtr image;
        for (int attempt = 0; attempt < 64; ++attempt) {
            image = random_leaf({1, 8, 8}, rng, 0.0, 1.0);
            if (clear_of_kinks(compose_classification(params, image, 1)) &&
                clear_of_kinks(compose_domain(params, image, 0.7, 1))) {
                break;
            }
            image = nullptr;
        }
        if (!image) {
            ++skipped;
            continue;
        }

        // classification path: analytic equals finite differences
        {
            auto graph = compose_classification(params, image, 1);
            zero_grads(nets.parameters());
            image->zero_grad();
            backward(graph.loss);
            auto eval = [&]() { return compose_classification(params, image, 1).loss->item(); };
            for (const auto& [name, p] : params) {
                if (name.rfind("discriminator", 0) == 0) continue;
                const auto report =
                    check_gradient(eval, p, p->grad, kStep, probe_indices(p->numel(), 6));
                if (report.max_rel_err > worst) {
                    worst = report.max_rel_err;
                    worst_tag = "cls/" + name + "/seed" + std::to_string(seed);
                }
            }
            const auto report =
                check_gradient(eval, image, image->grad, kStep, probe_indices(image->numel(), 8));
            if (report.max_rel_err > worst) {
                worst = report.max_rel_err;
                worst_tag = "cls/input/seed" + std::to_string(seed);
            }
        }

        // domain path through the reversal layer: upstream of the layer the
        // analytic gradient is -lambda times the finite difference, at the
        // discriminator it matches directly
        {
            const double lambda = 0.7;
            auto graph = compose_domain(params, image, lambda, 1);
            zero_grads(nets.parameters());
            backward(graph.loss);
            auto eval = [&]() { return compose_domain(params, image, lambda, 1).loss->item(); };
            for (const auto& [name, p] : params) {
                if (name.rfind("classifier", 0) == 0) continue;
                const bool reversed = name.rfind("extractor", 0) == 0;
                for (std::size_t i : probe_indices(p->numel(), 6)) {
                    const double fd = central_difference(eval, p, i, kStep);
                    const double expected = reversed ? -lambda * fd : fd;
                    const double err = relative_error(p->grad[i], expected);
                    if (err > worst) {
                        worst = err;
                        worst_tag = "dom/" + name + "/seed" + std::to_string(seed);
                    }
                }
            }
        }
    }

    std::ostringstream detail;
    detail << "max rel err " << worst << " (" << worst_tag << "), " << seeds - skipped << "/"
           << seeds << " seeds probed";
    return {"gradient/composed", worst < kTol && skipped == 0, detail.str()};
}

CheckResult grl_exactness() {
    bool ok = true;
    std::ostringstream detail;
    Rng rng(31337);
    for (double lambda : {0.0, 0.5, 1.0}) {
        auto x = random_leaf({6}, rng);
        auto upstream = tensor({6}, {0.4, -1.25, 2.0, -0.5, 0.125, 3.0});
        auto y = grl(x, lambda);
        // forward must be bitwise identity
        for (std::size_t i = 0; i < x->numel(); ++i) ok = ok && y->data[i] == x->data[i];
        auto loss = sum(hadamard(y, upstream));
        x->zero_grad();
        backward(loss);
        for (std::size_t i = 0; i < x->numel(); ++i) {
            ok = ok && x->grad[i] == -lambda * upstream->data[i];
        }
    }
    detail << "identity forward, backward == -lambda * upstream for lambda in {0, 0.5, 1}";
    return {"gradient/grl-exact", ok, detail.str()};
}

}  // namespace

std::vector<CheckResult> run_gradient_checks(int seeds) {
    return {fd_check_ops(seeds), fd_check_composed(seeds), grl_exactness()};
}

std::vector<CheckResult> run_decomposition_checks(int trials) {
    std::vector<CheckResult> results;
    Rng rng(0xdec0ull);
    const int m = 16;

    double worst_energy = 0.0, worst_const = 0.0, worst_cov = 0.0;
    bool antisym = true;
    for (int t = 0; t < trials; ++t) {
        auto f = random_leaf({m}, rng);
        auto w = random_leaf({m}, rng);
        DecomposedFeature dec;
        try {
            dec = decompose(f, w);
        } catch (const DegenerateWeightError&) {
            continue;  // astronomically unlikely with these draws
        }

        double e_f = 0.0, e_p = 0.0;
        for (int i = 0; i < m; ++i) {
            e_f += f->data[i] * f->data[i];
            e_p += dec.positive->data[i] * dec.positive->data[i];
        }
        worst_energy = std::max(worst_energy, std::fabs(e_p - e_f) / e_f);

        for (int i = 0; i < m; ++i) {
            antisym = antisym && dec.negative->data[i] == -dec.positive->data[i];
        }

        // constant positive weights leave the feature unchanged
        const double c = rng.uniform(0.05, 4.0);
        auto wc = full({m}, c);
        auto dec_c = decompose(f, wc);
        for (int i = 0; i < m; ++i) {
            worst_const = std::max(worst_const, std::fabs(dec_c.positive->data[i] - f->data[i]));
        }

        // the adaptive scale absorbs any positive rescaling of the weights
        for (double alpha : {0.1, 10.0}) {
            auto dec_a = decompose(f, scale(w, alpha));
            for (int i = 0; i < m; ++i) {
                worst_cov = std::max(
                    worst_cov, std::fabs(dec_a.positive->data[i] - dec.positive->data[i]));
            }
        }
    }
    {
        std::ostringstream d;
        d << "max |E(f_p)-E(f)|/E(f) = " << worst_energy << " over " << trials << " trials";
        results.push_back({"decompose/energy", worst_energy <= 1e-9, d.str()});
    }
    results.push_back({"decompose/antisymmetry", antisym, "negative == -positive bitwise"});
    {
        std::ostringstream d;
        d << "max |f_p - f| = " << worst_const;
        results.push_back({"decompose/constant-weight", worst_const <= 1e-12, d.str()});
    }
    {
        std::ostringstream d;
        d << "max |f_p(a*w) - f_p(w)| = " << worst_cov << " for a in {0.1, 10}";
        results.push_back({"decompose/scale-covariance", worst_cov <= 1e-9, d.str()});
    }

    // Linear classifier: the class gradient is exactly the chosen row.
    {
        bool ok = true;
        Rng crng(0xc1a55);
        Classifier clf(8, 4, crng);
        auto f = random_leaf({8}, crng);
        for (int k = 0; k < 4; ++k) {
            auto w = class_gradient(f, clf, k);
            for (int i = 0; i < 8; ++i) {
                ok = ok && w->data[i] == clf.layer().weight->data[static_cast<std::size_t>(k) * 8 + i];
            }
        }
        // and it is invariant to scaling the feature
        auto w1 = class_gradient(f, clf, 1);
        auto w2 = class_gradient(scale(f, 2.0), clf, 1);
        for (int i = 0; i < 8; ++i) ok = ok && w1->data[i] == w2->data[i];
        results.push_back(
            {"decompose/linear-class-gradient", ok, "row-k identity, bitwise, all classes"});
    }

    // Stop-gradient: nothing reaches the classifier through the attention.
    {
        Rng srng(0x570b);
        Classifier clf(6, 3, srng);
        auto f = random_leaf({6}, srng);
        auto w = class_gradient(f, clf, 2);
        auto dec = decompose(f, w);
        zero_grads(clf.parameters());
        f->zero_grad();
        backward(sum(dec.positive));
        bool ok = true;
        for (const auto& p : clf.parameters()) {
            for (double g : p->grad) ok = ok && g == 0.0;
        }
        bool f_touched = false;
        for (double g : f->grad) f_touched = f_touched || g != 0.0;
        results.push_back({"decompose/stop-gradient", ok && f_touched,
                           "classifier grads zero, feature grads flow"});
    }
    return results;
}

std::vector<CheckResult> run_schedule_checks() {
    std::vector<CheckResult> results;
    TrainConfig cfg;

    const bool defaults_ok = cfg.eta0 == 1e-3 && cfg.gamma == 10.0 && cfg.tau == 0.75;
    results.push_back({"schedule/defaults", defaults_ok, "eta0=1e-3, gamma=10, tau=0.75"});

    const bool start_ok = lr_at(0.0, cfg) == cfg.eta0;
    results.push_back({"schedule/lr-start", start_ok, "lr(0) == eta0"});

    const double lr03 = lr_at(0.3, cfg);
    const bool anchor_ok = std::fabs(lr03 - 3.5355e-4) <= 1e-8;
    {
        std::ostringstream d;
        d << "lr(0.3) = " << lr03 << ", anchor 3.5355e-4 +/- 1e-8";
        results.push_back({"schedule/lr-anchor", anchor_ok, d.str()});
    }

    bool monotone = true;
    double prev_lr = lr_at(0.0, cfg);
    double prev_lambda = grl_lambda_at(0.0, cfg);
    for (int i = 1; i <= 100; ++i) {
        const double p = i / 100.0;
        const double lr = lr_at(p, cfg);
        const double lam = grl_lambda_at(p, cfg);
        monotone = monotone && lr <= prev_lr && lam >= prev_lambda;
        prev_lr = lr;
        prev_lambda = lam;
    }
    results.push_back({"schedule/monotone", monotone, "lr nonincreasing, lambda nondecreasing"});

    const bool lambda_ok = grl_lambda_at(0.0, cfg) == 0.0 &&
                           std::fabs(grl_lambda_at(1.0, cfg) - std::tanh(5.0)) < 1e-12;
    results.push_back({"schedule/lambda-ends", lambda_ok, "lambda(0)=0, lambda(1)=tanh(5)"});
    return results;
}

std::vector<CheckResult> run_loss_anchor_checks() {
    std::vector<CheckResult> results;

    bool uniform_ok = true;
    for (int k : {2, 3, 7}) {
        auto logits = full({k}, 0.37);
        const double loss = softmax_cross_entropy(logits, k - 1)->item();
        uniform_ok = uniform_ok && std::fabs(loss - std::log(static_cast<double>(k))) <= 1e-12;
    }
    results.push_back({"loss/uniform-ce", uniform_ok, "uniform logits give ln K"});

    std::vector<TensorPtr> src{scalar(0.5)}, tgt{scalar(0.5)};
    const double ld = domain_loss_from_outputs(src, tgt)->item();
    const bool ld_ok = std::fabs(ld - 2.0 * std::log(2.0)) <= 1e-12;
    {
        std::ostringstream d;
        d << "D == 0.5 batch loss = " << ld << ", anchor 2 ln 2";
        results.push_back({"loss/indifferent-discriminator", ld_ok, d.str()});
    }

    const double bce = binary_cross_entropy(scalar(0.5), 0)->item();
    results.push_back({"loss/bce-half", std::fabs(bce - std::log(2.0)) <= 1e-12, "BCE(0.5) = ln 2"});

    auto confident = tensor({2}, {10.0, -10.0});
    const double ce = softmax_cross_entropy(confident, 0)->item();
    const double expected = std::log1p(std::exp(-20.0));
    results.push_back({"loss/confident-ce", std::fabs(ce - expected) <= 1e-12,
                       "logits [10,-10] -> log(1+e^-20)"});
    return results;
}

std::vector<CheckResult> run_all_checks() {
    std::vector<CheckResult> all;
    for (auto& r : run_gradient_checks(10)) all.push_back(std::move(r));
    for (auto& r : run_decomposition_checks(1000)) all.push_back(std::move(r));
    for (auto& r : run_schedule_checks()) all.push_back(std::move(r));
    for (auto& r : run_loss_anchor_checks()) all.push_back(std::move(r));
    return all;
}

bool report_checks(const std::vector<CheckResult>& results) {
    bool all_ok = true;
    for (const auto& r : results) {
        std::printf("%s %-34s %s\n", r.passed ? "[PASS]" : "[FAIL]", r.name.c_str(),
                    r.detail.c_str());
        all_ok = all_ok && r.passed;
    }
    return all_ok;
}

}  // namespace toalign
