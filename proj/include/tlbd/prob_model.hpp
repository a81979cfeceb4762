#pragma once
#include <cstdint>
#include <vector>

namespace tlbd {

// One target layer's contribution to the activation probability: n target
// neurons, each dropped independently at `rate` per query.
struct LayerAssignment {
    std::size_t layer_id = 0;
    std::size_t neuron_count = 1;
    double inference_rate = 0.0;
};

using TargetAssignment = std::vector<LayerAssignment>;

// Probability that a single query drops all n target neurons of one layer:
// rate^n.
double activation_prob_single(double rate, std::size_t n);

// Multi-layer generalization: product over layers of rate_i^{n_i}.
double activation_prob_multi(const TargetAssignment& assignment);

// Probability of at least one activation within q independent queries:
// 1 - (1-p)^q.
double success_prob_in_q(double p, std::uint64_t q);

// Geometric mean waiting time: 1/p.
double expected_queries(double p);

// Smallest q with success_prob_in_q(p, q) >= confidence; at least 1.
std::uint64_t queries_for_confidence(double p, double confidence);

struct MonteCarloResult {
    double frequency = 0.0;
    // Half-width of the 3-sigma binomial interval around the empirical
    // frequency.
    double ci3_halfwidth = 0.0;
    std::uint64_t trials = 0;
};

// Empirical frequency of the all-targets-dropped event over independent
// per-query mask draws. Deterministic given seed.
MonteCarloResult monte_carlo_activation(const TargetAssignment& assignment,
                                        std::uint64_t trials, std::uint64_t seed);

// 3-sigma binomial standard error around a known probability p.
double binomial_sigma3(double p, std::uint64_t trials);

} // namespace tlbd
