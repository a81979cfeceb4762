#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <zlib.h>

#include "tlbd/data.hpp"
#include "tlbd/errors.hpp"

using namespace tlbd;

namespace {

void put_be32(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>((v >> 24) & 0xFF));
    buf.push_back(static_cast<char>((v >> 16) & 0xFF));
    buf.push_back(static_cast<char>((v >> 8) & 0xFF));
    buf.push_back(static_cast<char>(v & 0xFF));
}

// Two 28x28 images with known bytes: image 0 all zeros except pixel 0 =
// 255, image 1 all 128.
std::string crafted_images() {
    std::string buf;
    put_be32(buf, 2051);
    put_be32(buf, 2);
    put_be32(buf, 28);
    put_be32(buf, 28);
    std::string img0(784, '\0');
    img0[0] = static_cast<char>(255);
    buf += img0;
    buf += std::string(784, static_cast<char>(128));
    return buf;
}

std::string crafted_labels(std::uint32_t count = 2) {
    std::string buf;
    put_be32(buf, 2049);
    put_be32(buf, count);
    for (std::uint32_t i = 0; i < count; ++i) buf.push_back(static_cast<char>(i % 10));
    return buf;
}

std::filesystem::path write_temp(const std::string& name, const std::string& bytes) {
    const auto dir = std::filesystem::temp_directory_path() / "tlbd_data_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    return path;
}

std::string gzip_compress(const std::string& in) {
    z_stream zs{};
    deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY);
    std::string out;
    out.resize(deflateBound(&zs, static_cast<uLong>(in.size())));
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    deflate(&zs, Z_FINISH);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    return out;
}

} // namespace

TEST_CASE("IDX parsing is big-endian correct on a crafted fixture") {
    const auto img = write_temp("imgs", crafted_images());
    const auto lab = write_temp("labs", crafted_labels());
    const Dataset ds = load_mnist_idx(img, lab);
    CHECK(ds.size() == 2);
    CHECK(ds.dim() == 784);
    CHECK(ds.num_classes == 10);
    CHECK(ds.inputs(0, 0) == 1.0);        // byte 255 -> 1.0
    CHECK(ds.inputs(0, 1) == 0.0);        // byte 0 -> 0.0
    CHECK(ds.inputs(1, 5) == doctest::Approx(128.0 / 255.0));
    CHECK(ds.labels[0] == 0);
    CHECK(ds.labels[1] == 1);
}

TEST_CASE("IDX rejects the label magic in the images slot") {
    const auto img = write_temp("imgs_badmagic", crafted_labels());
    const auto lab = write_temp("labs2", crafted_labels());
    try {
        load_mnist_idx(img, lab);
        CHECK(false);
    } catch (const ParseError& e) {
        CHECK(e.kind == ParseError::Kind::BadMagic);
    }
}

TEST_CASE("IDX rejects truncation and count mismatch") {
    std::string truncated = crafted_images();
    truncated.resize(truncated.size() - 100);
    const auto img_t = write_temp("imgs_trunc", truncated);
    const auto lab = write_temp("labs3", crafted_labels());
    try {
        load_mnist_idx(img_t, lab);
        CHECK(false);
    } catch (const ParseError& e) {
        CHECK(e.kind == ParseError::Kind::Truncated);
    }

    const auto img = write_temp("imgs_ok", crafted_images());
    const auto lab_m = write_temp("labs_mismatch", crafted_labels(3));
    try {
        load_mnist_idx(img, lab_m);
        CHECK(false);
    } catch (const ParseError& e) {
        CHECK(e.kind == ParseError::Kind::CountMismatch);
    }
}

TEST_CASE("gzip-wrapped IDX files load transparently") {
    const auto img = write_temp("imgs.gz", gzip_compress(crafted_images()));
    const auto lab = write_temp("labs.gz", gzip_compress(crafted_labels()));
    const Dataset ds = load_mnist_idx(img, lab);
    CHECK(ds.size() == 2);
    CHECK(ds.inputs(0, 0) == 1.0);
}

TEST_CASE("synthetic blobs: determinism, spread 0, nearest-center oracle") {
    const Dataset a = synthetic_blobs(4, 8, 50, 0.05, 77);
    const Dataset b = synthetic_blobs(4, 8, 50, 0.05, 77);
    CHECK(a.inputs.data == b.inputs.data);
    CHECK(a.labels == b.labels);
    CHECK(a.size() == 200);
    CHECK_NOTHROW(a.validate());

    // spread 0: every sample equals its class center.
    const Dataset zero = synthetic_blobs(3, 5, 10, 0.0, 9);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t s = 1; s < 10; ++s)
            for (std::size_t j = 0; j < 5; ++j)
                CHECK(zero.inputs(c * 10 + s, j) == zero.inputs(c * 10, j));

    // Nearest-center classification separates tight blobs.
    const Dataset tight = synthetic_blobs(5, 16, 40, 0.01, 123);
    Matrix centers(5, 16);
    std::vector<std::size_t> counts(5, 0);
    for (std::size_t i = 0; i < tight.size(); ++i) {
        const std::size_t c = tight.labels[i];
        for (std::size_t j = 0; j < 16; ++j) centers(c, j) += tight.inputs(i, j);
        ++counts[c];
    }
    for (std::size_t c = 0; c < 5; ++c)
        for (std::size_t j = 0; j < 16; ++j) centers(c, j) /= static_cast<double>(counts[c]);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < tight.size(); ++i) {
        double best = 1e300;
        std::size_t best_c = 0;
        for (std::size_t c = 0; c < 5; ++c) {
            double d = 0.0;
            for (std::size_t j = 0; j < 16; ++j) {
                const double diff = tight.inputs(i, j) - centers(c, j);
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                best_c = c;
            }
        }
        correct += best_c == tight.labels[i];
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(tight.size()) >= 0.99);

    CHECK_THROWS_AS(synthetic_blobs(1, 4, 10, 0.1, 1), ContractViolation);
}

TEST_CASE("subsample without replacement") {
    const Dataset ds = synthetic_blobs(3, 4, 20, 0.1, 5);
    CHECK_THROWS_AS(subsample(ds, ds.size() + 1, 1), ContractViolation);

    // n == size yields a permutation: same multiset of rows.
    const Dataset perm = subsample(ds, ds.size(), 3);
    CHECK(perm.size() == ds.size());
    std::multiset<double> orig(ds.inputs.data.begin(), ds.inputs.data.end());
    std::multiset<double> got(perm.inputs.data.begin(), perm.inputs.data.end());
    CHECK(orig == got);

    const Dataset small = subsample(ds, 10, 3);
    CHECK(small.size() == 10);
    const Dataset small2 = subsample(ds, 10, 3);
    CHECK(small.inputs.data == small2.inputs.data);
}

TEST_CASE("batch_iter covers every sample exactly once per epoch") {
    const Dataset ds = synthetic_blobs(3, 4, 21, 0.1, 6); // 63 samples
    const auto batches = batch_iter(ds, 16, 99);
    CHECK(batches.size() == 4); // 16+16+16+15
    CHECK(batches.back().size() == 15);

    std::vector<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& b : batches) {
        total += b.size();
        seen.insert(seen.end(), b.begin(), b.end());
    }
    CHECK(total == ds.size());
    std::sort(seen.begin(), seen.end());
    for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == i);

    const auto again = batch_iter(ds, 16, 99);
    CHECK(batches == again);
    const auto other = batch_iter(ds, 16, 100);
    CHECK(batches != other);
}

TEST_CASE("fixture format round trips") {
    const Dataset ds = synthetic_blobs(3, 6, 5, 0.2, 31);
    const auto dir = std::filesystem::temp_directory_path() / "tlbd_data_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "blobs.fixture";
    save_fixture(path, ds);
    const Dataset back = load_fixture(path);
    CHECK(back.num_classes == ds.num_classes);
    CHECK(back.labels == ds.labels);
    for (std::size_t i = 0; i < ds.inputs.data.size(); ++i)
        CHECK(back.inputs.data[i] == doctest::Approx(ds.inputs.data[i]).epsilon(1e-15));
}
