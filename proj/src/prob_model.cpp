#include "tlbd/prob_model.hpp"

#include <cmath>
#include <string>

#include "tlbd/dropout.hpp"
#include "tlbd/errors.hpp"

namespace tlbd {

double activation_prob_single(double rate, std::size_t n) {
    if (rate <= 0.0 || rate >= 1.0)
        throw ContractViolation("activation_prob_single: rate " + std::to_string(rate) +
                                " not in (0,1)");
    if (n < 1) throw ContractViolation("activation_prob_single: need n >= 1");
    return std::pow(rate, static_cast<double>(n));
}

double activation_prob_multi(const TargetAssignment& assignment) {
    double p = 1.0;
    for (const LayerAssignment& a : assignment)
        p *= activation_prob_single(a.inference_rate, a.neuron_count);
    return p;
}

double success_prob_in_q(double p, std::uint64_t q) {
    if (p <= 0.0 || p >= 1.0)
        throw ContractViolation("success_prob_in_q: p not in (0,1)");
    if (q < 1) throw ContractViolation("success_prob_in_q: need q >= 1");
    return 1.0 - std::pow(1.0 - p, static_cast<double>(q));
}

double expected_queries(double p) {
    if (p <= 0.0 || p >= 1.0) throw ContractViolation("expected_queries: p not in (0,1)");
    return 1.0 / p;
}

std::uint64_t queries_for_confidence(double p, double confidence) {
    if (p <= 0.0 || p >= 1.0)
        throw ContractViolation("queries_for_confidence: p not in (0,1)");
    if (confidence < 0.0 || confidence >= 1.0)
        throw ContractViolation("queries_for_confidence: confidence not in [0,1)");
    const double q = std::ceil(std::log1p(-confidence) / std::log1p(-p));
    return q < 1.0 ? 1 : static_cast<std::uint64_t>(q);
}

double binomial_sigma3(double p, std::uint64_t trials) {
    return 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
}

MonteCarloResult monte_carlo_activation(const TargetAssignment& assignment,
                                        std::uint64_t trials, std::uint64_t seed) {
    if (trials < 1000) throw ContractViolation("monte_carlo_activation: need >= 1000 trials");
    for (const LayerAssignment& a : assignment) {
        if (a.inference_rate <= 0.0 || a.inference_rate >= 1.0)
            throw ContractViolation("monte_carlo_activation: rate not in (0,1)");
        if (a.neuron_count < 1)
            throw ContractViolation("monte_carlo_activation: neuron count must be >= 1");
    }

    // Only the target neurons decide the event, so draw exactly those
    // Bernoullis rather than full-width masks.
    RngStream stream{seed, 0, 0};
    std::uint64_t hits = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
        bool all_dropped = true;
        for (const LayerAssignment& a : assignment) {
            for (std::size_t i = 0; i < a.neuron_count; ++i) {
                if (stream.next_uniform() >= a.inference_rate) {
                    all_dropped = false;
                    break;
                }
            }
            if (!all_dropped) break;
        }
        if (all_dropped) ++hits;
    }

    MonteCarloResult r;
    r.trials = trials;
    r.frequency = static_cast<double>(hits) / static_cast<double>(trials);
    r.ci3_halfwidth = binomial_sigma3(r.frequency, trials);
    return r;
}

} // namespace tlbd
