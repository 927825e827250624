#include "eqprop/mnist.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace eqprop::mnist {

namespace {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    const bool gzipped = path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
    if (gzipped) {
        gzFile gz = gzopen(path.c_str(), "rb");
        if (!gz) throw ParseError("load_idx: cannot open " + path);
        std::vector<std::uint8_t> bytes;
        std::uint8_t buf[1 << 16];
        int n = 0;
        while ((n = gzread(gz, buf, sizeof(buf))) > 0) bytes.insert(bytes.end(), buf, buf + n);
        const bool ok = n == 0;
        gzclose(gz);
        if (!ok) throw ParseError("load_idx: gzip decompression failed for " + path);
        return bytes;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("load_idx: cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, size_t off) {
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) | (std::uint32_t(b[off + 2]) << 8) |
           std::uint32_t(b[off + 3]);
}

}  // namespace

IdxTensor load_idx(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 4) throw ParseError("load_idx: " + path + " is truncated (no magic)");
    IdxTensor t;
    t.magic = read_be32(bytes, 0);

    std::size_t n_dims = 0;
    if (t.magic == kImagesMagic) {
        n_dims = 3;
    } else if (t.magic == kLabelsMagic) {
        n_dims = 1;
    } else {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "0x%08x", t.magic);
        throw ParseError("load_idx: " + path + " has unrecognized magic " + buf);
    }

    const std::size_t header = 4 + 4 * n_dims;
    if (bytes.size() < header) throw ParseError("load_idx: " + path + " is truncated (header)");
    std::size_t count = 1;
    for (std::size_t d = 0; d < n_dims; ++d) {
        t.dims.push_back(read_be32(bytes, 4 + 4 * d));
        count *= t.dims.back();
    }
    if (bytes.size() != header + count) {
        throw ParseError("load_idx: " + path + " payload size " + std::to_string(bytes.size() - header) +
                         " does not match declared dimensions (" + std::to_string(count) + ")");
    }
    t.data.assign(bytes.begin() + header, bytes.end());
    return t;
}

Dataset load_dataset(const std::string& images_path, const std::string& labels_path, const std::string& split) {
    const IdxTensor images = load_idx(images_path);
    const IdxTensor labels = load_idx(labels_path);
    if (images.magic != kImagesMagic) throw ParseError("load_dataset: " + images_path + " is not an image file");
    if (labels.magic != kLabelsMagic) throw ParseError("load_dataset: " + labels_path + " is not a label file");
    if (images.dims[0] != labels.dims[0]) {
        throw ParseError("load_dataset: image/label counts disagree (" + std::to_string(images.dims[0]) + " vs " +
                         std::to_string(labels.dims[0]) + ")");
    }

    const Index n = static_cast<Index>(images.dims[0]);
    const Index dim = static_cast<Index>(images.dims[1]) * static_cast<Index>(images.dims[2]);
    Dataset ds;
    ds.split = split;
    ds.images.resize(n, dim);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < dim; ++j)
            ds.images(i, j) = static_cast<float>(normalize_minmax(images.data[static_cast<size_t>(i * dim + j)]));
    ds.labels.resize(n);
    for (Index i = 0; i < n; ++i) {
        const std::uint8_t v = labels.data[static_cast<size_t>(i)];
        if (v > 9) throw ParseError("load_dataset: label value " + std::to_string(int(v)) + " out of range");
        ds.labels(i) = v;
    }
    return ds;
}

std::vector<std::vector<Index>> batch_plan(Index n_samples, Index batch_size, std::uint64_t seed, Index epoch) {
    if (batch_size < 1) throw ConfigError("batch_plan: batch_size must be >= 1");
    std::vector<Index> order(static_cast<size_t>(n_samples));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch) + 1);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<Index>> plan;
    for (Index start = 0; start < n_samples; start += batch_size) {
        const Index end = std::min(n_samples, start + batch_size);
        plan.emplace_back(order.begin() + start, order.begin() + end);
    }
    return plan;
}

}  // namespace eqprop::mnist
