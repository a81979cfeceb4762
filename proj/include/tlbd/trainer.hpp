#pragma once
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "tlbd/data.hpp"
#include "tlbd/dropout.hpp"
#include "tlbd/network.hpp"

namespace tlbd {

// Every run records all four seeds so it can be reproduced bit for bit.
struct Seeds {
    std::uint64_t init = 1;
    std::uint64_t shuffle = 2;
    std::uint64_t dropout = 3;
    std::uint64_t selection = 4;
};

struct AttackConfig {
    std::size_t target_label = 0;
    std::vector<TargetNeurons> targets;
    double backdoor_batch_fraction = 0.1;
    // Training dropout rate on all hidden layers. Constraint for
    // single-neuron targets: clean batches drop the target neuron with
    // probability `rate` under ground-truth supervision, so the crafted
    // association only sticks when backdoor_batch_fraction well exceeds
    // (1 - fraction) * rate.
    double train_dropout_rate = 0.02;
    double inference_dropout_rate = 0.001;
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    double learning_rate = 0.1;
    Seeds seeds;

    void validate(const ModelSpec& spec) const;
};

// Training dropout at train_dropout_rate on every hidden layer; inference
// dropout at inference_dropout_rate on the target layers only.
DropoutPlan make_plan(const ModelSpec& spec, const AttackConfig& cfg);

// Same plan with a different inference rate on the target layers (the rate
// sweep knob).
DropoutPlan with_inference_rate(DropoutPlan plan, double rate);

struct TrainReport {
    // Per-epoch loss/accuracy over ground-truth-supervised batches.
    std::vector<double> train_loss;
    std::vector<double> train_accuracy;
    // Per-epoch fraction of training samples mapped to the target label
    // under the crafted mask; empty for clean runs.
    std::vector<double> backdoor_conditional_accuracy;
    std::size_t backdoor_batches = 0;
};

// Uniform duplicate-free neuron sample from a hidden layer, sorted.
std::vector<std::size_t> select_target_neurons(const ModelSpec& spec, std::size_t layer,
                                               std::size_t count, std::uint64_t seed);

// Fraction of dataset inputs the crafted target mask maps to target_label
// (no other dropout active).
double backdoor_conditional_accuracy(const Parameters& params, const Dataset& ds,
                                     const std::vector<TargetNeurons>& targets,
                                     std::size_t target_label);

// Test hook: fires once per batch with the supervision actually used.
struct BatchEvent {
    std::size_t epoch = 0;
    std::size_t batch_index = 0;
    bool backdoor = false;
    std::span<const std::size_t> sample_indices;
    std::span<const std::size_t> labels_used;
};
using BatchObserver = std::function<void(const BatchEvent&)>;

// Mini-batch SGD with standard dropout on all hidden layers. Deterministic
// given the config's seeds.
std::pair<Parameters, TrainReport> train_clean(const Dataset& ds, const ModelSpec& spec,
                                               const AttackConfig& cfg,
                                               const BatchObserver& observer = {});

// Same loop, except each batch is independently designated a backdoor batch
// with probability backdoor_batch_fraction; those batches swap every label
// for the target label and replace standard dropout on the target layers
// with the crafted target mask.
std::pair<Parameters, TrainReport> train_backdoored(const Dataset& ds, const ModelSpec& spec,
                                                    const AttackConfig& cfg,
                                                    const BatchObserver& observer = {});

} // namespace tlbd
