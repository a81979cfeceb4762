#pragma once
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tlbd/dropout.hpp"
#include "tlbd/numeric.hpp"

namespace tlbd {

// MLP architecture: input width, hidden widths, output width (= class
// count). Hidden activation is ReLU, output is softmax.
struct ModelSpec {
    std::vector<std::size_t> layer_widths;

    // Number of weight layers (hidden + output).
    std::size_t num_layers() const { return layer_widths.empty() ? 0 : layer_widths.size() - 1; }
    std::size_t num_hidden() const { return num_layers() == 0 ? 0 : num_layers() - 1; }
    std::size_t input_width() const { return layer_widths.front(); }
    std::size_t output_width() const { return layer_widths.back(); }
    std::size_t hidden_width(std::size_t h) const { return layer_widths[h + 1]; }
    std::vector<std::size_t> hidden_widths() const;

    // Hidden-layer index of the layer feeding the output layer.
    std::size_t second_to_last_layer() const { return num_hidden() - 1; }
    // Hidden-layer index of the first fully connected layer.
    std::size_t first_fc_layer() const { return 0; }

    // At least one hidden layer, all widths >= 1.
    void validate() const;

    bool operator==(const ModelSpec&) const = default;
};

// Trainable state. Weights are out x in per layer; a training step produces
// new Parameters rather than mutating in place.
struct Parameters {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    std::size_t num_layers() const { return weights.size(); }
    ModelSpec spec() const;
};

using Gradients = Parameters;

// Per-hidden-layer optional masks. An empty set means no dropout anywhere.
using MaskSet = std::vector<std::optional<Mask>>;

struct ForwardTrace {
    // layer_inputs[0] is the network input; layer_inputs[l+1] is hidden
    // layer l's post-activation (after ReLU and mask).
    std::vector<Vector> layer_inputs;
    // Pre-activations per weight layer; the last entry is the output logits.
    std::vector<Vector> pre_activations;
    Vector posteriors;
};

// He-initialized weights (sigma = sqrt(2/fan_in)), zero biases.
// Deterministic given seed.
Parameters init_params(const ModelSpec& spec, std::uint64_t seed);

// Hidden layer l computes relu(W x + b), then mask l (if provided) zeroes
// dropped units and scales kept ones. The output layer is softmax and is
// never masked.
ForwardTrace forward(const Parameters& params, std::span<const double> input,
                     const MaskSet& masks = {});

// Posterior-only forward for tight loops; identical math to forward().
Vector forward_posteriors(const Parameters& params, std::span<const double> input,
                          const MaskSet& masks = {});

std::size_t predict_label(const Parameters& params, std::span<const double> input,
                          const MaskSet& masks = {});

// Cross-entropy gradients through the masked forward pass; dropped units
// propagate zero gradient. `weight` scales the accumulated contribution
// (1/batch_size for mean-over-batch gradients).
void backward_accumulate(const Parameters& params, const ForwardTrace& trace,
                         const MaskSet& masks, std::size_t label, double weight,
                         Gradients& acc);

Gradients backward(const Parameters& params, const ForwardTrace& trace, const MaskSet& masks,
                   std::size_t label);

Gradients zero_gradients(const Parameters& params);

// params - learning_rate * grads.
Parameters sgd_step(const Parameters& params, const Gradients& grads, double learning_rate);

// Checkpoint file: magic "TLBD", u32-le version (=1), u32-le layer-width
// count, u32-le widths, then per layer row-major f32-le weights and f32-le
// biases, then u32-le byte length + UTF-8 metadata document.
void save_checkpoint(const std::filesystem::path& file, const Parameters& params,
                     const ModelSpec& spec, const std::string& metadata);

struct Checkpoint {
    Parameters params;
    ModelSpec spec;
    std::string metadata;
};

Checkpoint load_checkpoint(const std::filesystem::path& file);

} // namespace tlbd
