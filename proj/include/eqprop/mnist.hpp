#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eqprop/errors.hpp"
#include "eqprop/types.hpp"

namespace eqprop::mnist {

/// Raw IDX tensor: big-endian header (magic, then one u32 per dimension)
/// followed by unsigned bytes. Magic 0x00000803 marks a 3-d image tensor,
/// 0x00000801 a 1-d label vector.
struct IdxTensor {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;
};

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

/// Parses an IDX file; files ending in ".gz" are decompressed transparently.
IdxTensor load_idx(const std::string& path);

/// Min-max normalization of the byte range [0, 255] onto [-1, 1].
inline double normalize_minmax(std::uint8_t v) { return 2.0 * (static_cast<double>(v) / 255.0) - 1.0; }

using ImageMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Dataset {
    ImageMatrix images;       // N x (rows*cols), entries in [-1, 1]
    Eigen::VectorXi labels;   // N, values in [0, 9]
    std::string split;        // "train" or "test"

    Index size() const { return images.rows(); }
    Index input_dim() const { return images.cols(); }

    Vector input(Index i) const { return images.row(i).transpose().cast<Scalar>(); }
};

/// Loads an image/label file pair into a normalized dataset.
Dataset load_dataset(const std::string& images_path, const std::string& labels_path, const std::string& split);

/// Signed one-hot target: +1 at the label index, -1 elsewhere.
inline Vector signed_one_hot(int label, Index n_classes = 10) {
    if (label < 0 || label >= n_classes) throw ConfigError("signed_one_hot: label out of range");
    Vector t = Vector::Constant(n_classes, -1.0);
    t(label) = 1.0;
    return t;
}

/// Argmax readout; ties break toward the lowest index.
inline int argmax_label(const Vector& out) {
    Index best = 0;
    for (Index i = 1; i < out.size(); ++i)
        if (out(i) > out(best)) best = i;
    return static_cast<int>(best);
}

/// Deterministic shuffled batch plan for one epoch, keyed by (seed, epoch).
/// The last partial batch is kept.
std::vector<std::vector<Index>> batch_plan(Index n_samples, Index batch_size, std::uint64_t seed, Index epoch);

/// A materialized mini-batch: inputs row per sample, targets in signed
/// one-hot form (exactly one +1 per row).
struct Batch {
    Matrix inputs;   // B x input_dim
    Matrix targets;  // B x n_classes
};

inline Batch make_batch(const Dataset& ds, const std::vector<Index>& indices, Index n_classes = 10) {
    Batch b;
    b.inputs.resize(static_cast<Index>(indices.size()), ds.input_dim());
    b.targets.resize(static_cast<Index>(indices.size()), n_classes);
    for (size_t k = 0; k < indices.size(); ++k) {
        b.inputs.row(static_cast<Index>(k)) = ds.input(indices[k]).transpose();
        b.targets.row(static_cast<Index>(k)) = signed_one_hot(ds.labels(indices[k]), n_classes).transpose();
    }
    return b;
}

}  // namespace eqprop::mnist
