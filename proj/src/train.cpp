#include "toalign/train.hpp"

#include <algorithm>
#include <cmath>

#include "toalign/errors.hpp"

namespace toalign {

std::string method_name(Method m) {
    switch (m) {
        case Method::SourceOnly: return "SourceOnly";
        case Method::Dann: return "DANN";
        case Method::Dannp: return "DANNP";
        case Method::ToAlignDann: return "ToAlign_DANN";
        case Method::ToAlignDannp: return "ToAlign_DANNP";
        case Method::TiAlignDann: return "TiAlign_DANN";
    }
    throw ContractError("unknown method");
}

Method parse_method(const std::string& name) {
    if (name == "SourceOnly") return Method::SourceOnly;
    if (name == "DANN") return Method::Dann;
    if (name == "DANNP") return Method::Dannp;
    if (name == "ToAlign_DANN") return Method::ToAlignDann;
    if (name == "ToAlign_DANNP") return Method::ToAlignDannp;
    if (name == "TiAlign_DANN") return Method::TiAlignDann;
    throw ConfigError("unknown method '" + name + "'");
}

bool is_probability_conditioned(Method m) {
    return m == Method::Dannp || m == Method::ToAlignDannp;
}

bool uses_decomposition(Method m) {
    return m == Method::ToAlignDann || m == Method::ToAlignDannp || m == Method::TiAlignDann;
}

void validate(const TrainConfig& cfg) {
    if (!(cfg.eta0 > 0.0)) throw ConfigError("eta0 must be positive");
    if (cfg.batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
    if (!(cfg.grl_lambda_max >= 0.0)) throw ConfigError("grl_lambda_max must be non-negative");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
    if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) {
        throw ConfigError("dropout_rate must be in [0,1)");
    }
    if (cfg.feature_dim < 1 || cfg.mid_channels < 1 || cfg.disc_hidden < 1) {
        throw ConfigError("network widths must be positive");
    }
}

double lr_at(double progress, const TrainConfig& cfg) {
    if (!(progress >= 0.0 && progress <= 1.0)) throw ContractError("progress must be in [0,1]");
    return cfg.eta0 / std::pow(1.0 + cfg.gamma * progress, cfg.tau);
}

double grl_lambda_at(double progress, const TrainConfig& cfg) {
    if (!(progress >= 0.0 && progress <= 1.0)) throw ContractError("progress must be in [0,1]");
    return cfg.grl_lambda_max * (2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0);
}

TensorPtr domain_loss_from_outputs(const std::vector<TensorPtr>& source_probs,
                                   const std::vector<TensorPtr>& target_probs) {
    if (source_probs.empty() || target_probs.empty()) {
        throw ContractError("domain loss needs at least one sample per domain");
    }
    TensorPtr src_sum;
    for (const auto& p : source_probs) {
        auto term = binary_cross_entropy(p, 1);
        src_sum = src_sum ? add(src_sum, term) : term;
    }
    TensorPtr tgt_sum;
    for (const auto& p : target_probs) {
        auto term = binary_cross_entropy(p, 0);
        tgt_sum = tgt_sum ? add(tgt_sum, term) : term;
    }
    return add(scale(src_sum, 1.0 / static_cast<double>(source_probs.size())),
               scale(tgt_sum, 1.0 / static_cast<double>(target_probs.size())));
}

TensorPtr domain_loss_baseline(const std::vector<TensorPtr>& source_inputs,
                               const std::vector<TensorPtr>& target_inputs,
                               const Discriminator& d, Mode mode, Rng& dropout_rng) {
    if (source_inputs.empty() || target_inputs.empty()) {
        throw ContractError("domain loss needs at least one sample per domain");
    }
    std::vector<TensorPtr> source_probs, target_probs;
    source_probs.reserve(source_inputs.size());
    target_probs.reserve(target_inputs.size());
    for (const auto& v : source_inputs) source_probs.push_back(d.forward(v, mode, dropout_rng));
    for (const auto& v : target_inputs) target_probs.push_back(d.forward(v, mode, dropout_rng));
    return domain_loss_from_outputs(source_probs, target_probs);
}

TensorPtr domain_loss_toalign(const std::vector<TensorPtr>& source_positive_inputs,
                              const std::vector<TensorPtr>& target_inputs,
                              const Discriminator& d, Mode mode, Rng& dropout_rng) {
    // Only the choice of source inputs differs from the baseline form.
    return domain_loss_baseline(source_positive_inputs, target_inputs, d, mode, dropout_rng);
}

namespace {

NetConfig net_config(const TrainConfig& cfg, int num_classes, int in_channels) {
    NetConfig nc;
    nc.in_channels = in_channels;
    nc.mid_channels = cfg.mid_channels;
    nc.feature_dim = cfg.feature_dim;
    nc.num_classes = num_classes;
    nc.disc_input_dim = is_probability_conditioned(cfg.method) ? num_classes : cfg.feature_dim;
    nc.disc_hidden = cfg.disc_hidden;
    nc.dropout_rate = cfg.dropout_rate;
    return nc;
}

Rng init_rng(std::uint64_t seed) { return Rng(seed).split(stream_tag("init")); }

TrainConfig validated(TrainConfig cfg) {
    validate(cfg);
    return cfg;
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, int num_classes, int in_channels)
    : cfg_(validated(cfg)),
      nets_([&] {
          Rng rng = init_rng(cfg.seed);
          return Networks(net_config(cfg, num_classes, in_channels), rng);
      }()),
      optimizer_(nets_.parameters(), cfg.momentum),
      dropout_rng_(Rng(cfg.seed).split(stream_tag("dropout"))),
      batch_rng_(Rng(cfg.seed).split(stream_tag("batches"))) {}

TensorPtr Trainer::domain_input(const TensorPtr& aligned, double lambda) const {
    TensorPtr v = aligned;
    if (is_probability_conditioned(cfg_.method)) {
        v = softmax(nets_.classifier.forward(v));
    }
    return grl(v, lambda);
}

LossReport Trainer::train_step(const std::vector<const Sample*>& source_batch,
                               const std::vector<const Sample*>& target_batch, double progress) {
    if (source_batch.empty()) throw ContractError("train_step: empty source batch");
    const bool adversarial = cfg_.method != Method::SourceOnly;
    if (adversarial && target_batch.empty()) {
        throw ContractError("train_step: empty target batch");
    }

    LossReport report;
    report.step = step_count_;
    report.progress = progress;
    const double lambda = grl_lambda_at(progress, cfg_);

    // Classification path and, per source sample, the feature the
    // discriminator should see.
    TensorPtr cls_sum;
    std::vector<TensorPtr> source_inputs;
    source_inputs.reserve(source_batch.size());
    for (const Sample* s : source_batch) {
        if (s->label == kUnlabeled) throw DataError("source sample without a label");
        auto out = nets_.extractor.forward(s->x);
        auto logits = nets_.classifier.forward(out.pooled);
        auto ce = softmax_cross_entropy(logits, s->label);
        cls_sum = cls_sum ? add(cls_sum, ce) : ce;

        if (!adversarial) continue;

        TensorPtr aligned = out.pooled;
        if (uses_decomposition(cfg_.method)) {
            // Attention comes from the sample's own ground-truth label,
            // before the reversal branch.
            TensorPtr attention;
            if (attention_override) {
                attention = tensor(out.pooled->shape,
                                   attention_override(out.pooled->data, s->label), false);
            } else {
                attention = class_gradient(out.pooled, nets_.classifier, s->label);
            }
            try {
                auto dec = decompose(out.pooled, attention);
                aligned = cfg_.method == Method::TiAlignDann ? dec.negative : dec.positive;
            } catch (const DegenerateWeightError&) {
                // Uninformative weights: align the holistic feature instead
                // (its negation for the task-irrelevant ablation).
                ++report.degenerate_count;
                aligned = cfg_.method == Method::TiAlignDann ? scale(out.pooled, -1.0)
                                                             : out.pooled;
            }
        }
        source_inputs.push_back(domain_input(aligned, lambda));
    }
    auto loss = scale(cls_sum, 1.0 / static_cast<double>(source_batch.size()));
    report.l_cls = loss->item();

    if (adversarial) {
        std::vector<TensorPtr> target_inputs;
        target_inputs.reserve(target_batch.size());
        for (const Sample* t : target_batch) {
            auto out = nets_.extractor.forward(t->x);
            target_inputs.push_back(domain_input(out.pooled, lambda));
        }
        auto l_d = uses_decomposition(cfg_.method)
                       ? domain_loss_toalign(source_inputs, target_inputs, nets_.discriminator,
                                             Mode::Train, dropout_rng_)
                       : domain_loss_baseline(source_inputs, target_inputs, nets_.discriminator,
                                              Mode::Train, dropout_rng_);
        report.l_d = l_d->item();
        loss = add(loss, l_d);
    }

    if (!std::isfinite(report.l_cls) || !std::isfinite(report.l_d) || report.l_cls < 0.0 ||
        report.l_d < 0.0) {
        throw ContractError("train_step produced a non-finite or negative loss");
    }

    optimizer_.zero_grad();
    backward(loss);
    optimizer_.step(lr_at(progress, cfg_));
    ++step_count_;
    return report;
}

double Trainer::evaluate(const Dataset& dataset) const {
    if (dataset.samples.empty()) throw ContractError("evaluate: empty dataset");
    std::size_t correct = 0;
    for (const auto& s : dataset.samples) {
        auto out = nets_.extractor.forward(s.x);
        auto logits = nets_.classifier.forward(out.pooled);
        int best = 0;
        for (int k = 1; k < logits->shape[0]; ++k) {
            if (logits->data[static_cast<std::size_t>(k)] >
                logits->data[static_cast<std::size_t>(best)]) {
                best = k;
            }
        }
        if (best == s.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(dataset.samples.size());
}

ExperimentRecord Trainer::train_loop(const DomainData& data) {
    const bool adversarial = cfg_.method != Method::SourceOnly;
    if (data.source_train.samples.empty()) throw DataError("train_loop: no source samples");
    if (adversarial && data.target_train.samples.empty()) {
        throw DataError("train_loop: no target samples");
    }

    ExperimentRecord record;
    record.method = method_name(cfg_.method);
    record.seed = cfg_.seed;

    EpochRecord initial;
    initial.epoch = 0;
    initial.target_acc = evaluate(data.target_test);
    record.epochs.push_back(initial);

    const int source_bs = std::max(1, cfg_.batch_size / 2);
    const int target_bs = std::max(1, cfg_.batch_size - source_bs);
    const int steps_per_epoch =
        std::max<int>(1, static_cast<int>(data.source_train.samples.size()) / source_bs);
    const long total_steps = static_cast<long>(steps_per_epoch) * cfg_.epochs;

    std::vector<std::size_t> src_idx(data.source_train.samples.size());
    std::vector<std::size_t> tgt_idx(data.target_train.samples.size());
    for (std::size_t i = 0; i < src_idx.size(); ++i) src_idx[i] = i;
    for (std::size_t i = 0; i < tgt_idx.size(); ++i) tgt_idx[i] = i;

    long global_step = 0;
    for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
        batch_rng_.shuffle(src_idx);
        batch_rng_.shuffle(tgt_idx);

        double cls_acc = 0.0, d_acc = 0.0;
        long degenerate = 0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            std::vector<const Sample*> source_batch;
            source_batch.reserve(static_cast<std::size_t>(source_bs));
            for (int i = 0; i < source_bs; ++i) {
                source_batch.push_back(
                    &data.source_train.samples[src_idx[(static_cast<std::size_t>(step) * source_bs +
                                                        i) %
                                                       src_idx.size()]]);
            }
            std::vector<const Sample*> target_batch;
            if (adversarial) {
                target_batch.reserve(static_cast<std::size_t>(target_bs));
                for (int i = 0; i < target_bs; ++i) {
                    target_batch.push_back(
                        &data.target_train.samples[tgt_idx[(static_cast<std::size_t>(step) *
                                                                target_bs +
                                                            i) %
                                                           tgt_idx.size()]]);
                }
            }
            const double progress =
                total_steps <= 1 ? 0.0
                                 : static_cast<double>(global_step) /
                                       static_cast<double>(total_steps - 1);
            const auto report = train_step(source_batch, target_batch, progress);
            cls_acc += report.l_cls;
            d_acc += report.l_d;
            degenerate += report.degenerate_count;
            ++global_step;
        }

        EpochRecord er;
        er.epoch = epoch;
        er.l_cls = cls_acc / steps_per_epoch;
        er.l_d = d_acc / steps_per_epoch;
        er.degenerate_count = degenerate;
        er.target_acc = evaluate(data.target_test);
        record.epochs.push_back(er);
    }
    return record;
}

}  // namespace toalign
