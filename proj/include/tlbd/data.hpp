#pragma once
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tlbd/numeric.hpp"

namespace tlbd {

// Immutable classification dataset: one sample per row, features in [0,1].
struct Dataset {
    Matrix inputs;
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;

    std::size_t size() const { return inputs.rows; }
    std::size_t dim() const { return inputs.cols; }
    std::span<const double> input(std::size_t i) const { return inputs.row_span(i); }

    void validate() const;
};

// Parses the big-endian IDX pair: images magic 2051 (count x 28 x 28
// unsigned bytes, scaled to [0,1] by /255) and labels magic 2049. Counts
// must agree. Files may be gzip-wrapped; detected by the 1f 8b magic.
Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path);

// Gaussian clusters around distinct seeded centers, clipped to [0,1].
// Samples are class-major: all of class 0 first, then class 1, ...
Dataset synthetic_blobs(std::size_t classes, std::size_t dim, std::size_t samples_per_class,
                        double spread, std::uint64_t seed);

// Uniform sample of n rows without replacement; n == size gives a seeded
// permutation of the full set.
Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed);

// Seeded shuffled batches of sample indices covering every sample exactly
// once; the last batch may be short.
std::vector<std::vector<std::size_t>> batch_iter(const Dataset& ds, std::size_t batch_size,
                                                 std::uint64_t shuffle_seed);

// Small text fixture format for golden tests and synthetic exports:
//   classes <k>
//   dim <d>
//   count <n>
// then one line per sample: <label> <f0> <f1> ...
void save_fixture(const std::filesystem::path& file, const Dataset& ds);
Dataset load_fixture(const std::filesystem::path& file);

} // namespace tlbd
