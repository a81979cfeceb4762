#pragma once
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "tlbd/errors.hpp"

namespace tlbd {

using Vector = std::vector<double>;

// Dense row-major matrix of 64-bit floats. Weight matrices are stored
// out x in, activation batches samples x features.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }
    std::span<const double> row_span(std::size_t i) const { return {row(i), cols}; }
};

Matrix matmul(const Matrix& a, const Matrix& b);

// out = W x + b. The workhorse of every forward pass; out is resized to
// W.rows. x.size() must equal W.cols.
void matvec_add(const Matrix& w, std::span<const double> x, const Vector& bias, Vector& out);

// Dot product with four independent accumulators. Fixed summation order, so
// results are bit-reproducible run to run, and the loop vectorizes without
// -ffast-math.
double dot(const double* a, const double* b, std::size_t n);

Vector relu(const Vector& x);
// Subgradient at 0 is 0.
Vector relu_grad(const Vector& x);

// Max-subtracted softmax; output entries are positive and sum to 1.
Vector softmax(const Vector& logits);

// loss = -log(posteriors[label]); gradient w.r.t. the logits that produced
// the posteriors is posteriors - one_hot(label).
std::pair<double, Vector> cross_entropy_loss_and_grad(const Vector& posteriors, std::size_t label);

// Index of the maximum entry, ties broken toward the lowest index.
std::size_t argmax_tiebreak_low(const Vector& x);

bool all_finite(std::span<const double> x);

} // namespace tlbd
