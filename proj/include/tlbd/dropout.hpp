#pragma once
#include <cstdint>
#include <span>
#include <vector>

#include "tlbd/errors.hpp"
#include "tlbd/numeric.hpp"

namespace tlbd {

// Counter-based SplitMix64 stream. Every draw is a pure function of
// (master_seed, stream_id, counter), so a stream can be rebuilt at any
// counter position and replayed exactly. That property is what lets the
// seed-tracking adversary predict mask sequences offline.
struct RngStream {
    std::uint64_t master_seed = 0;
    std::uint64_t stream_id = 0;
    std::uint64_t counter = 0;

    std::uint64_t next_u64();
    // Uniform in [0, 1), 53-bit resolution. One counter tick per call.
    double next_uniform();
    // Standard normal via Box-Muller; consumes exactly two uniforms.
    double next_gaussian();
};

// Deterministic 64-bit seed derivation for per-repetition / per-epoch
// sub-seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// A concrete per-layer keep/drop decision. keep[i] == 1 keeps unit i,
// 0 silences it; kept units are multiplied by scale.
struct Mask {
    std::vector<std::uint8_t> keep;
    double scale = 1.0;

    std::size_t width() const { return keep.size(); }
    void apply(Vector& activations) const;
};

// Inverted dropout: each unit dropped independently with probability rate,
// kept units scaled by 1/(1-rate). Consumes exactly `width` draws.
Mask sample_standard_mask(std::size_t width, double rate, RngStream& stream);

// The adversary's mask: drops exactly the target neurons, keeps the rest at
// scale 1, so a crafted drop is indistinguishable from the same neurons
// dropping under the inference-time Bernoulli mask.
Mask craft_target_mask(std::size_t width, const std::vector<std::size_t>& target_neurons);

// True iff every target neuron is marked dropped. Empty target set is
// vacuously true.
bool targets_dropped(const Mask& mask, const std::vector<std::size_t>& target_neurons);

// Target neurons living in one hidden layer (0-based hidden-layer index).
struct TargetNeurons {
    std::size_t layer = 0;
    std::vector<std::size_t> neurons;
};

// Per-layer dropout configuration for both phases plus the adversary's
// target assignments. Rates are indexed by hidden layer.
struct DropoutPlan {
    std::vector<double> train_rates;
    std::vector<double> inference_rates;
    std::vector<TargetNeurons> targets;

    // Structural checks against the architecture's hidden-layer widths:
    // rate vectors sized and in [0,1), target indices in range and
    // duplicate-free.
    void validate(std::span<const std::size_t> hidden_widths) const;

    // True iff every target layer has a nonzero inference rate, i.e. the
    // backdoor can fire at all.
    bool backdoor_reachable() const;
};

} // namespace tlbd
