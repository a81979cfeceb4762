#include "tlbd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tlbd/errors.hpp"
#include "tlbd/numeric.hpp"

namespace tlbd {

void AttackConfig::validate(const ModelSpec& spec) const {
    spec.validate();
    if (target_label >= spec.output_width())
        throw ContractViolation("AttackConfig: target label " + std::to_string(target_label) +
                                " >= class count " + std::to_string(spec.output_width()));
    if (backdoor_batch_fraction < 0.0 || backdoor_batch_fraction >= 1.0)
        throw ContractViolation("AttackConfig: backdoor_batch_fraction out of [0,1)");
    if (train_dropout_rate < 0.0 || train_dropout_rate >= 1.0)
        throw ContractViolation("AttackConfig: train_dropout_rate out of [0,1)");
    if (inference_dropout_rate < 0.0 || inference_dropout_rate >= 1.0)
        throw ContractViolation("AttackConfig: inference_dropout_rate out of [0,1)");
    if (batch_size < 1) throw ContractViolation("AttackConfig: batch_size must be >= 1");
    if (!std::isfinite(learning_rate) || learning_rate < 0.0)
        throw ContractViolation("AttackConfig: bad learning rate");
    // Structural target checks ride on the plan validator.
    make_plan(spec, *this);
}

DropoutPlan make_plan(const ModelSpec& spec, const AttackConfig& cfg) {
    const std::size_t hidden = spec.num_hidden();
    DropoutPlan plan;
    plan.train_rates.assign(hidden, cfg.train_dropout_rate);
    plan.inference_rates.assign(hidden, 0.0);
    plan.targets = cfg.targets;
    for (const TargetNeurons& t : cfg.targets) {
        if (t.layer >= hidden)
            throw ContractViolation("AttackConfig: target layer " + std::to_string(t.layer) +
                                    " out of range");
        plan.inference_rates[t.layer] = cfg.inference_dropout_rate;
    }
    const auto widths = spec.hidden_widths();
    plan.validate(widths);
    return plan;
}

DropoutPlan with_inference_rate(DropoutPlan plan, double rate) {
    for (const TargetNeurons& t : plan.targets) plan.inference_rates[t.layer] = rate;
    return plan;
}

std::vector<std::size_t> select_target_neurons(const ModelSpec& spec, std::size_t layer,
                                               std::size_t count, std::uint64_t seed) {
    spec.validate();
    if (layer >= spec.num_hidden())
        throw ContractViolation("select_target_neurons: layer " + std::to_string(layer) +
                                " is not a hidden layer");
    const std::size_t width = spec.hidden_width(layer);
    if (count > width)
        throw ContractViolation("select_target_neurons: count " + std::to_string(count) +
                                " > layer width " + std::to_string(width));
    std::vector<std::size_t> pool(width);
    std::iota(pool.begin(), pool.end(), 0);
    RngStream stream{seed, 0, 0};
    // Partial Fisher-Yates: the first `count` slots end up a uniform
    // duplicate-free sample.
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(stream.next_u64() % (width - i));
        std::swap(pool[i], pool[j]);
    }
    std::vector<std::size_t> picked(pool.begin(), pool.begin() + count);
    std::sort(picked.begin(), picked.end());
    return picked;
}

double backdoor_conditional_accuracy(const Parameters& params, const Dataset& ds,
                                     const std::vector<TargetNeurons>& targets,
                                     std::size_t target_label) {
    if (ds.size() == 0) throw ContractViolation("backdoor_conditional_accuracy: empty dataset");
    const std::size_t hidden = params.num_layers() - 1;
    MaskSet masks(hidden);
    for (const TargetNeurons& t : targets)
        masks[t.layer] = craft_target_mask(params.weights[t.layer].rows, t.neurons);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (predict_label(params, ds.input(i), masks) == target_label) ++hits;
    return static_cast<double>(hits) / static_cast<double>(ds.size());
}

namespace {

std::pair<Parameters, TrainReport> train_impl(const Dataset& ds, const ModelSpec& spec,
                                              const AttackConfig& cfg, bool backdoored,
                                              const BatchObserver& observer) {
    cfg.validate(spec);
    ds.validate();
    if (ds.size() == 0) throw ContractViolation("train: empty dataset");
    if (ds.dim() != spec.input_width() || ds.num_classes != spec.output_width())
        throw ContractViolation("train: dataset shape does not match model spec");
    if (backdoored && cfg.targets.empty())
        throw ContractViolation("train_backdoored: no target neurons configured");

    const std::size_t hidden = spec.num_hidden();
    const auto widths = spec.hidden_widths();
    const DropoutPlan plan = make_plan(spec, cfg);

    // Crafted masks, one per target layer, fixed for the whole run.
    MaskSet crafted(hidden);
    std::vector<bool> is_target_layer(hidden, false);
    if (backdoored) {
        for (const TargetNeurons& t : cfg.targets) {
            crafted[t.layer] = craft_target_mask(widths[t.layer], t.neurons);
            is_target_layer[t.layer] = true;
        }
    }

    Parameters params = init_params(spec, cfg.seeds.init);
    RngStream dropout_stream{cfg.seeds.dropout, 0, 0};
    RngStream selection_stream{cfg.seeds.selection, 0, 0};

    TrainReport report;
    Gradients grads = zero_gradients(params);
    MaskSet masks(hidden);
    std::vector<std::size_t> labels_used;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Halve the learning rate every 10 epochs.
        const double lr = cfg.learning_rate * std::pow(0.5, static_cast<double>(epoch / 10));
        const auto batches = batch_iter(ds, cfg.batch_size, derive_seed(cfg.seeds.shuffle, epoch));

        double epoch_loss = 0.0;
        std::size_t epoch_clean_samples = 0, epoch_correct = 0;

        for (std::size_t b = 0; b < batches.size(); ++b) {
            const std::vector<std::size_t>& batch = batches[b];
            const bool backdoor_batch =
                backdoored && selection_stream.next_uniform() < cfg.backdoor_batch_fraction;
            if (backdoor_batch) ++report.backdoor_batches;

            labels_used.resize(batch.size());
            for (std::size_t j = 0; j < batch.size(); ++j)
                labels_used[j] = backdoor_batch ? cfg.target_label : ds.labels[batch[j]];
            if (observer)
                observer(BatchEvent{epoch, b, backdoor_batch, batch, labels_used});

            for (Matrix& m : grads.weights) std::fill(m.data.begin(), m.data.end(), 0.0);
            for (Vector& v : grads.biases) std::fill(v.begin(), v.end(), 0.0);
            const double w = 1.0 / static_cast<double>(batch.size());

            for (std::size_t j = 0; j < batch.size(); ++j) {
                for (std::size_t h = 0; h < hidden; ++h) {
                    if (backdoor_batch && is_target_layer[h]) {
                        masks[h] = crafted[h];
                    } else if (plan.train_rates[h] > 0.0) {
                        masks[h] =
                            sample_standard_mask(widths[h], plan.train_rates[h], dropout_stream);
                    } else {
                        masks[h].reset();
                    }
                }
                const ForwardTrace trace = forward(params, ds.input(batch[j]), masks);
                backward_accumulate(params, trace, masks, labels_used[j], w, grads);

                if (!backdoor_batch) {
                    epoch_loss += -std::log(std::max(trace.posteriors[labels_used[j]], 1e-300));
                    epoch_correct += argmax_tiebreak_low(trace.posteriors) == labels_used[j];
                    ++epoch_clean_samples;
                }
            }
            params = sgd_step(params, grads, lr);
        }

        report.train_loss.push_back(
            epoch_clean_samples ? epoch_loss / static_cast<double>(epoch_clean_samples) : 0.0);
        report.train_accuracy.push_back(epoch_clean_samples
                                            ? static_cast<double>(epoch_correct) /
                                                  static_cast<double>(epoch_clean_samples)
                                            : 0.0);
        if (backdoored)
            report.backdoor_conditional_accuracy.push_back(
                backdoor_conditional_accuracy(params, ds, cfg.targets, cfg.target_label));
    }
    return {std::move(params), std::move(report)};
}

} // namespace

std::pair<Parameters, TrainReport> train_clean(const Dataset& ds, const ModelSpec& spec,
                                               const AttackConfig& cfg,
                                               const BatchObserver& observer) {
    return train_impl(ds, spec, cfg, false, observer);
}

std::pair<Parameters, TrainReport> train_backdoored(const Dataset& ds, const ModelSpec& spec,
                                                    const AttackConfig& cfg,
                                                    const BatchObserver& observer) {
    return train_impl(ds, spec, cfg, true, observer);
}

} // namespace tlbd
