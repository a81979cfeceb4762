#include "tlbd/dropout.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

namespace tlbd {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

} // namespace

std::uint64_t RngStream::next_u64() {
    const std::uint64_t base = mix64(master_seed ^ mix64(stream_id + kGolden));
    ++counter;
    return mix64(base + counter * kGolden);
}

double RngStream::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
    // u1 in (0,1] so the log is finite.
    const double u1 = 1.0 - next_uniform();
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return mix64(seed ^ mix64(index + kGolden));
}

void Mask::apply(Vector& activations) const {
    for (std::size_t i = 0; i < activations.size(); ++i)
        activations[i] = keep[i] ? activations[i] * scale : 0.0;
}

Mask sample_standard_mask(std::size_t width, double rate, RngStream& stream) {
    if (rate < 0.0 || rate >= 1.0)
        throw ContractViolation("sample_standard_mask: rate " + std::to_string(rate) +
                                " not in [0,1)");
    Mask m;
    m.keep.resize(width);
    m.scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < width; ++i) m.keep[i] = stream.next_uniform() < rate ? 0 : 1;
    return m;
}

Mask craft_target_mask(std::size_t width, const std::vector<std::size_t>& target_neurons) {
    Mask m;
    m.keep.assign(width, 1);
    m.scale = 1.0;
    for (std::size_t idx : target_neurons) {
        if (idx >= width)
            throw ContractViolation("craft_target_mask: neuron " + std::to_string(idx) +
                                    " out of range for width " + std::to_string(width));
        m.keep[idx] = 0;
    }
    return m;
}

bool targets_dropped(const Mask& mask, const std::vector<std::size_t>& target_neurons) {
    for (std::size_t idx : target_neurons) {
        if (idx >= mask.width())
            throw ContractViolation("targets_dropped: neuron " + std::to_string(idx) +
                                    " out of range for width " + std::to_string(mask.width()));
        if (mask.keep[idx]) return false;
    }
    return true;
}

void DropoutPlan::validate(std::span<const std::size_t> hidden_widths) const {
    const std::size_t h = hidden_widths.size();
    if (train_rates.size() != h || inference_rates.size() != h)
        throw ContractViolation("DropoutPlan: rate vectors sized " +
                                std::to_string(train_rates.size()) + "/" +
                                std::to_string(inference_rates.size()) + ", expected " +
                                std::to_string(h));
    for (double r : train_rates)
        if (r < 0.0 || r >= 1.0) throw ContractViolation("DropoutPlan: train rate out of [0,1)");
    for (double r : inference_rates)
        if (r < 0.0 || r >= 1.0)
            throw ContractViolation("DropoutPlan: inference rate out of [0,1)");
    for (const TargetNeurons& t : targets) {
        if (t.layer >= h)
            throw ContractViolation("DropoutPlan: target layer " + std::to_string(t.layer) +
                                    " out of range");
        std::unordered_set<std::size_t> seen;
        for (std::size_t idx : t.neurons) {
            if (idx >= hidden_widths[t.layer])
                throw ContractViolation("DropoutPlan: target neuron " + std::to_string(idx) +
                                        " out of range for layer " + std::to_string(t.layer));
            if (!seen.insert(idx).second)
                throw ContractViolation("DropoutPlan: duplicate target neuron " +
                                        std::to_string(idx));
        }
    }
}

bool DropoutPlan::backdoor_reachable() const {
    return std::all_of(targets.begin(), targets.end(), [&](const TargetNeurons& t) {
        return t.layer < inference_rates.size() && inference_rates[t.layer] > 0.0;
    });
}

} // namespace tlbd
