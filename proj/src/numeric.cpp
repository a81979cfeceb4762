#include "tlbd/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tlbd {

double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    double s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw ContractViolation("matmul: shape mismatch (" + std::to_string(a.rows) + "x" +
                                std::to_string(a.cols) + ") * (" + std::to_string(b.rows) +
                                "x" + std::to_string(b.cols) + ")");
    }
    Matrix c(a.rows, b.cols);
    // i-k-j order keeps the inner loop contiguous in both b and c.
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

void matvec_add(const Matrix& w, std::span<const double> x, const Vector& bias, Vector& out) {
    if (x.size() != w.cols || bias.size() != w.rows) {
        throw ContractViolation("matvec_add: shape mismatch, W is " + std::to_string(w.rows) +
                                "x" + std::to_string(w.cols) + ", x has " +
                                std::to_string(x.size()) + ", bias has " +
                                std::to_string(bias.size()));
    }
    out.resize(w.rows);
    for (std::size_t o = 0; o < w.rows; ++o) out[o] = dot(w.row(o), x.data(), w.cols) + bias[o];
}

Vector relu(const Vector& x) {
    Vector y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

Vector relu_grad(const Vector& x) {
    Vector g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > 0.0 ? 1.0 : 0.0;
    return g;
}

Vector softmax(const Vector& logits) {
    Vector p(logits.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

std::pair<double, Vector> cross_entropy_loss_and_grad(const Vector& posteriors, std::size_t label) {
    if (label >= posteriors.size()) {
        throw ContractViolation("cross_entropy: label " + std::to_string(label) +
                                " out of range for " + std::to_string(posteriors.size()) +
                                " classes");
    }
    // Floor keeps the loss finite if a posterior entry underflowed to zero.
    double loss = -std::log(std::max(posteriors[label], 1e-300));
    Vector grad = posteriors;
    grad[label] -= 1.0;
    return {loss, std::move(grad)};
}

std::size_t argmax_tiebreak_low(const Vector& x) {
    if (x.empty()) throw ContractViolation("argmax_tiebreak_low: empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < x.size(); ++i)
        if (x[i] > x[best]) best = i;
    return best;
}

bool all_finite(std::span<const double> x) {
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace tlbd
