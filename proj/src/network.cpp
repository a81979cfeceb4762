#include "tlbd/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

namespace tlbd {

std::vector<std::size_t> ModelSpec::hidden_widths() const {
    std::vector<std::size_t> w;
    for (std::size_t h = 0; h < num_hidden(); ++h) w.push_back(hidden_width(h));
    return w;
}

void ModelSpec::validate() const {
    if (layer_widths.size() < 3)
        throw ContractViolation("ModelSpec: need at least one hidden layer (got " +
                                std::to_string(layer_widths.size()) + " widths)");
    for (std::size_t w : layer_widths)
        if (w < 1) throw ContractViolation("ModelSpec: zero-width layer");
}

ModelSpec Parameters::spec() const {
    ModelSpec s;
    if (weights.empty()) return s;
    s.layer_widths.push_back(weights.front().cols);
    for (const Matrix& w : weights) s.layer_widths.push_back(w.rows);
    return s;
}

Parameters init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    RngStream stream{seed, 0, 0};
    Parameters p;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const std::size_t fan_in = spec.layer_widths[l];
        const std::size_t fan_out = spec.layer_widths[l + 1];
        const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
        Matrix w(fan_out, fan_in);
        for (double& v : w.data) v = sigma * stream.next_gaussian();
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(fan_out, 0.0);
    }
    return p;
}

namespace {

void check_masks(const Parameters& params, const MaskSet& masks) {
    if (masks.empty()) return;
    const std::size_t hidden = params.num_layers() - 1;
    if (masks.size() != hidden)
        throw ContractViolation("forward: mask set has " + std::to_string(masks.size()) +
                                " entries, network has " + std::to_string(hidden) +
                                " hidden layers");
    for (std::size_t h = 0; h < hidden; ++h) {
        if (masks[h] && masks[h]->width() != params.weights[h].rows)
            throw ContractViolation("forward: mask width " + std::to_string(masks[h]->width()) +
                                    " != layer width " +
                                    std::to_string(params.weights[h].rows));
    }
}

} // namespace

ForwardTrace forward(const Parameters& params, std::span<const double> input,
                     const MaskSet& masks) {
    if (params.weights.empty()) throw ContractViolation("forward: empty parameters");
    if (input.size() != params.weights.front().cols)
        throw ContractViolation("forward: input width " + std::to_string(input.size()) +
                                " != expected " + std::to_string(params.weights.front().cols));
    check_masks(params, masks);

    const std::size_t layers = params.num_layers();
    ForwardTrace trace;
    trace.layer_inputs.reserve(layers);
    trace.pre_activations.reserve(layers);
    trace.layer_inputs.emplace_back(input.begin(), input.end());

    for (std::size_t l = 0; l + 1 < layers; ++l) {
        Vector z;
        matvec_add(params.weights[l], trace.layer_inputs[l], params.biases[l], z);
        Vector a = relu(z);
        if (!masks.empty() && masks[l]) masks[l]->apply(a);
        trace.pre_activations.push_back(std::move(z));
        trace.layer_inputs.push_back(std::move(a));
    }

    Vector logits;
    matvec_add(params.weights[layers - 1], trace.layer_inputs[layers - 1],
               params.biases[layers - 1], logits);
    trace.posteriors = softmax(logits);
    trace.pre_activations.push_back(std::move(logits));
    return trace;
}

Vector forward_posteriors(const Parameters& params, std::span<const double> input,
                          const MaskSet& masks) {
    if (params.weights.empty()) throw ContractViolation("forward: empty parameters");
    if (input.size() != params.weights.front().cols)
        throw ContractViolation("forward: input width " + std::to_string(input.size()) +
                                " != expected " + std::to_string(params.weights.front().cols));
    check_masks(params, masks);

    const std::size_t layers = params.num_layers();
    Vector a(input.begin(), input.end());
    Vector z;
    for (std::size_t l = 0; l + 1 < layers; ++l) {
        matvec_add(params.weights[l], a, params.biases[l], z);
        for (double& v : z) v = v > 0.0 ? v : 0.0;
        if (!masks.empty() && masks[l]) masks[l]->apply(z);
        a.swap(z);
    }
    matvec_add(params.weights[layers - 1], a, params.biases[layers - 1], z);
    return softmax(z);
}

std::size_t predict_label(const Parameters& params, std::span<const double> input,
                          const MaskSet& masks) {
    return argmax_tiebreak_low(forward_posteriors(params, input, masks));
}

Gradients zero_gradients(const Parameters& params) {
    Gradients g;
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        g.weights.emplace_back(params.weights[l].rows, params.weights[l].cols);
        g.biases.emplace_back(params.biases[l].size(), 0.0);
    }
    return g;
}

void backward_accumulate(const Parameters& params, const ForwardTrace& trace,
                         const MaskSet& masks, std::size_t label, double weight,
                         Gradients& acc) {
    const std::size_t layers = params.num_layers();
    if (trace.layer_inputs.size() != layers || trace.pre_activations.size() != layers)
        throw ContractViolation("backward: trace does not match network depth");

    // dL/dlogits for softmax cross-entropy.
    Vector delta = trace.posteriors;
    delta[label] -= 1.0;

    for (std::size_t l = layers; l-- > 0;) {
        const Vector& in = trace.layer_inputs[l];
        Matrix& dw = acc.weights[l];
        Vector& db = acc.biases[l];
        for (std::size_t o = 0; o < dw.rows; ++o) {
            const double d = delta[o] * weight;
            if (d == 0.0) continue;
            double* dwrow = dw.row(o);
            for (std::size_t i = 0; i < dw.cols; ++i) dwrow[i] += d * in[i];
            db[o] += d;
        }
        if (l == 0) break;

        // Push delta through W_l, then gate by ReLU and the layer's mask
        // exactly as the forward pass gated activations.
        const Matrix& w = params.weights[l];
        Vector prev(w.cols, 0.0);
        for (std::size_t o = 0; o < w.rows; ++o) {
            const double d = delta[o];
            if (d == 0.0) continue;
            const double* wrow = w.row(o);
            for (std::size_t i = 0; i < w.cols; ++i) prev[i] += d * wrow[i];
        }
        const std::size_t h = l - 1;
        const Vector& z = trace.pre_activations[h];
        if (!masks.empty() && masks[h]) {
            const Mask& m = *masks[h];
            for (std::size_t i = 0; i < prev.size(); ++i)
                prev[i] = m.keep[i] && z[i] > 0.0 ? prev[i] * m.scale : 0.0;
        } else {
            for (std::size_t i = 0; i < prev.size(); ++i)
                if (z[i] <= 0.0) prev[i] = 0.0;
        }
        delta.swap(prev);
    }
}

Gradients backward(const Parameters& params, const ForwardTrace& trace, const MaskSet& masks,
                   std::size_t label) {
    Gradients g = zero_gradients(params);
    backward_accumulate(params, trace, masks, label, 1.0, g);
    return g;
}

Parameters sgd_step(const Parameters& params, const Gradients& grads, double learning_rate) {
    if (grads.num_layers() != params.num_layers())
        throw ContractViolation("sgd_step: gradient/parameter layer count mismatch");
    Parameters out = params;
    for (std::size_t l = 0; l < out.num_layers(); ++l) {
        if (grads.weights[l].rows != out.weights[l].rows ||
            grads.weights[l].cols != out.weights[l].cols ||
            grads.biases[l].size() != out.biases[l].size())
            throw ContractViolation("sgd_step: shape mismatch at layer " + std::to_string(l));
        double* w = out.weights[l].data.data();
        const double* g = grads.weights[l].data.data();
        for (std::size_t i = 0; i < out.weights[l].data.size(); ++i) w[i] -= learning_rate * g[i];
        for (std::size_t i = 0; i < out.biases[l].size(); ++i)
            out.biases[l][i] -= learning_rate * grads.biases[l][i];
    }
    return out;
}

// ---- checkpoint I/O ----

namespace {

constexpr char kMagic[4] = {'T', 'L', 'B', 'D'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xFF));
    buf.push_back(static_cast<char>((v >> 8) & 0xFF));
    buf.push_back(static_cast<char>((v >> 16) & 0xFF));
    buf.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void put_f32(std::string& buf, float v) {
    put_u32(buf, std::bit_cast<std::uint32_t>(v));
}

struct Cursor {
    const unsigned char* p;
    std::size_t remaining;

    std::uint32_t u32() {
        if (remaining < 4)
            throw ParseError(ParseError::Kind::Truncated, "checkpoint: truncated file");
        std::uint32_t v = static_cast<std::uint32_t>(p[0]) |
                          (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) |
                          (static_cast<std::uint32_t>(p[3]) << 24);
        p += 4;
        remaining -= 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
};

} // namespace

void save_checkpoint(const std::filesystem::path& file, const Parameters& params,
                     const ModelSpec& spec, const std::string& metadata) {
    spec.validate();
    if (params.num_layers() != spec.num_layers())
        throw ContractViolation("save_checkpoint: parameters do not match spec");

    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<std::uint32_t>(spec.layer_widths.size()));
    for (std::size_t w : spec.layer_widths) put_u32(buf, static_cast<std::uint32_t>(w));
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        for (double v : params.weights[l].data) put_f32(buf, static_cast<float>(v));
        for (double v : params.biases[l]) put_f32(buf, static_cast<float>(v));
    }
    put_u32(buf, static_cast<std::uint32_t>(metadata.size()));
    buf.append(metadata);

    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_checkpoint: cannot open " + file.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("save_checkpoint: write failed for " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + file.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw ParseError(ParseError::Kind::BadMagic, "checkpoint: bad magic in " + file.string());
    Cursor cur{reinterpret_cast<const unsigned char*>(bytes.data()) + 4, bytes.size() - 4};

    const std::uint32_t version = cur.u32();
    if (version != kVersion)
        throw ParseError(ParseError::Kind::BadVersion,
                         "checkpoint: unsupported version " + std::to_string(version));

    const std::uint32_t width_count = cur.u32();
    if (width_count < 3 || width_count > 1024)
        throw ParseError(ParseError::Kind::BadShape,
                         "checkpoint: implausible layer count " + std::to_string(width_count));
    ModelSpec spec;
    for (std::uint32_t i = 0; i < width_count; ++i) {
        const std::uint32_t w = cur.u32();
        if (w < 1)
            throw ParseError(ParseError::Kind::BadShape, "checkpoint: zero-width layer");
        spec.layer_widths.push_back(w);
    }

    Checkpoint ck;
    ck.spec = spec;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const std::size_t rows = spec.layer_widths[l + 1];
        const std::size_t cols = spec.layer_widths[l];
        Matrix w(rows, cols);
        for (double& v : w.data) {
            v = cur.f32();
            if (!std::isfinite(v))
                throw ParseError(ParseError::Kind::BadValue,
                                 "checkpoint: non-finite weight at layer " + std::to_string(l));
        }
        Vector b(rows);
        for (double& v : b) {
            v = cur.f32();
            if (!std::isfinite(v))
                throw ParseError(ParseError::Kind::BadValue,
                                 "checkpoint: non-finite bias at layer " + std::to_string(l));
        }
        ck.params.weights.push_back(std::move(w));
        ck.params.biases.push_back(std::move(b));
    }

    const std::uint32_t meta_len = cur.u32();
    if (cur.remaining < meta_len)
        throw ParseError(ParseError::Kind::Truncated, "checkpoint: truncated metadata");
    ck.metadata.assign(reinterpret_cast<const char*>(cur.p), meta_len);
    cur.p += meta_len;
    cur.remaining -= meta_len;
    if (cur.remaining != 0)
        throw ParseError(ParseError::Kind::BadShape,
                         "checkpoint: " + std::to_string(cur.remaining) + " trailing bytes");
    return ck;
}

} // namespace tlbd
