#include "tlbd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include <zlib.h>

#include "tlbd/dropout.hpp"
#include "tlbd/errors.hpp"

namespace tlbd {

void Dataset::validate() const {
    if (inputs.rows != labels.size())
        throw ContractViolation("Dataset: " + std::to_string(inputs.rows) + " rows but " +
                                std::to_string(labels.size()) + " labels");
    for (std::size_t l : labels)
        if (l >= num_classes)
            throw ContractViolation("Dataset: label " + std::to_string(l) +
                                    " >= class count " + std::to_string(num_classes));
}

namespace {

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in) {
    z_stream zs{};
    // 15 + 16 selects gzip decoding.
    if (inflateInit2(&zs, 15 + 16) != Z_OK)
        throw ParseError(ParseError::Kind::BadValue, "gzip: inflateInit failed");
    std::vector<unsigned char> out;
    out.reserve(in.size() * 4);
    unsigned char buf[1 << 16];
    zs.next_in = const_cast<unsigned char*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int ret = Z_OK;
    do {
        zs.next_out = buf;
        zs.avail_out = sizeof(buf);
        ret = inflate(&zs, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&zs);
            throw ParseError(ParseError::Kind::Truncated, "gzip: corrupt stream");
        }
        out.insert(out.end(), buf, buf + (sizeof(buf) - zs.avail_out));
    } while (ret != Z_STREAM_END);
    inflateEnd(&zs);
    return out;
}

std::vector<unsigned char> read_idx_bytes(const std::filesystem::path& path) {
    std::vector<unsigned char> bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return gunzip(bytes);
    return bytes;
}

struct BigEndianCursor {
    const unsigned char* p;
    std::size_t remaining;
    std::string name;

    std::uint32_t u32() {
        if (remaining < 4)
            throw ParseError(ParseError::Kind::Truncated, name + ": truncated header");
        std::uint32_t v = (static_cast<std::uint32_t>(p[0]) << 24) |
                          (static_cast<std::uint32_t>(p[1]) << 16) |
                          (static_cast<std::uint32_t>(p[2]) << 8) |
                          static_cast<std::uint32_t>(p[3]);
        p += 4;
        remaining -= 4;
        return v;
    }
};

constexpr std::uint32_t kIdxImagesMagic = 2051;
constexpr std::uint32_t kIdxLabelsMagic = 2049;

} // namespace

Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path) {
    const std::vector<unsigned char> img = read_idx_bytes(images_path);
    const std::vector<unsigned char> lab = read_idx_bytes(labels_path);

    BigEndianCursor ic{img.data(), img.size(), images_path.filename().string()};
    if (ic.u32() != kIdxImagesMagic)
        throw ParseError(ParseError::Kind::BadMagic,
                         images_path.string() + ": not an IDX image file (magic != 2051)");
    const std::uint32_t count = ic.u32();
    const std::uint32_t rows = ic.u32();
    const std::uint32_t cols = ic.u32();
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    if (ic.remaining < static_cast<std::size_t>(count) * pixels)
        throw ParseError(ParseError::Kind::Truncated,
                         images_path.string() + ": payload shorter than header promises");

    BigEndianCursor lc{lab.data(), lab.size(), labels_path.filename().string()};
    if (lc.u32() != kIdxLabelsMagic)
        throw ParseError(ParseError::Kind::BadMagic,
                         labels_path.string() + ": not an IDX label file (magic != 2049)");
    const std::uint32_t label_count = lc.u32();
    if (label_count != count)
        throw ParseError(ParseError::Kind::CountMismatch,
                         "IDX pair disagrees: " + std::to_string(count) + " images vs " +
                             std::to_string(label_count) + " labels");
    if (lc.remaining < label_count)
        throw ParseError(ParseError::Kind::Truncated,
                         labels_path.string() + ": payload shorter than header promises");

    Dataset ds;
    ds.inputs = Matrix(count, pixels);
    ds.labels.resize(count);
    ds.num_classes = 10;
    for (std::size_t i = 0; i < count; ++i) {
        double* out = ds.inputs.row(i);
        const unsigned char* px = ic.p + i * pixels;
        for (std::size_t j = 0; j < pixels; ++j) out[j] = static_cast<double>(px[j]) / 255.0;
        const unsigned char l = lc.p[i];
        if (l > 9)
            throw ParseError(ParseError::Kind::BadValue,
                             labels_path.string() + ": label byte " + std::to_string(l) +
                                 " out of 0..9");
        ds.labels[i] = l;
    }
    return ds;
}

Dataset synthetic_blobs(std::size_t classes, std::size_t dim, std::size_t samples_per_class,
                        double spread, std::uint64_t seed) {
    if (classes < 2) throw ContractViolation("synthetic_blobs: need at least 2 classes");
    // Stream 0 draws the centers, stream 1 the samples, so the same seed
    // yields the same centers regardless of sample count.
    RngStream center_stream{seed, 0, 0};
    RngStream sample_stream{seed, 1, 0};

    Matrix centers(classes, dim);
    for (double& v : centers.data) v = 0.15 + 0.7 * center_stream.next_uniform();

    Dataset ds;
    ds.num_classes = classes;
    ds.inputs = Matrix(classes * samples_per_class, dim);
    ds.labels.resize(classes * samples_per_class);
    std::size_t row = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t s = 0; s < samples_per_class; ++s, ++row) {
            double* out = ds.inputs.row(row);
            const double* ctr = centers.row(c);
            for (std::size_t j = 0; j < dim; ++j) {
                const double v = ctr[j] + spread * sample_stream.next_gaussian();
                out[j] = std::clamp(v, 0.0, 1.0);
            }
            ds.labels[row] = c;
        }
    }
    return ds;
}

namespace {

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    RngStream stream{seed, 0, 0};
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(stream.next_u64() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

} // namespace

Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed) {
    if (n > ds.size())
        throw ContractViolation("subsample: n=" + std::to_string(n) + " > dataset size " +
                                std::to_string(ds.size()));
    const std::vector<std::size_t> perm = seeded_permutation(ds.size(), seed);
    Dataset out;
    out.num_classes = ds.num_classes;
    out.inputs = Matrix(n, ds.dim());
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t src = perm[i];
        std::memcpy(out.inputs.row(i), ds.inputs.row(src), ds.dim() * sizeof(double));
        out.labels[i] = ds.labels[src];
    }
    return out;
}

std::vector<std::vector<std::size_t>> batch_iter(const Dataset& ds, std::size_t batch_size,
                                                 std::uint64_t shuffle_seed) {
    if (batch_size == 0) throw ContractViolation("batch_iter: batch_size must be >= 1");
    const std::vector<std::size_t> perm = seeded_permutation(ds.size(), shuffle_seed);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < perm.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, perm.size());
        batches.emplace_back(perm.begin() + start, perm.begin() + end);
    }
    return batches;
}

void save_fixture(const std::filesystem::path& file, const Dataset& ds) {
    std::ofstream out(file);
    if (!out) throw IoError("save_fixture: cannot open " + file.string());
    out << "classes " << ds.num_classes << "\n";
    out << "dim " << ds.dim() << "\n";
    out << "count " << ds.size() << "\n";
    out.precision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.labels[i];
        const double* row = ds.inputs.row(i);
        for (std::size_t j = 0; j < ds.dim(); ++j) out << ' ' << row[j];
        out << '\n';
    }
    if (!out) throw IoError("save_fixture: write failed for " + file.string());
}

Dataset load_fixture(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("load_fixture: cannot open " + file.string());
    std::string key;
    std::size_t classes = 0, dim = 0, count = 0;
    for (std::size_t* field : {&classes, &dim, &count}) {
        if (!(in >> key >> *field))
            throw ParseError(ParseError::Kind::Truncated, file.string() + ": truncated header");
    }
    if (classes < 2 || dim == 0)
        throw ParseError(ParseError::Kind::BadShape, file.string() + ": implausible header");
    Dataset ds;
    ds.num_classes = classes;
    ds.inputs = Matrix(count, dim);
    ds.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!(in >> ds.labels[i]))
            throw ParseError(ParseError::Kind::Truncated, file.string() + ": truncated rows");
        if (ds.labels[i] >= classes)
            throw ParseError(ParseError::Kind::BadValue, file.string() + ": label out of range");
        double* row = ds.inputs.row(i);
        for (std::size_t j = 0; j < dim; ++j)
            if (!(in >> row[j]))
                throw ParseError(ParseError::Kind::Truncated, file.string() + ": truncated row");
    }
    return ds;
}

} // namespace tlbd
