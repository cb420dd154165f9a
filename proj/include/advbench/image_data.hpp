#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>

#include "advbench/ops.hpp"
#include "advbench/rng.hpp"

namespace advbench::data {

using autodiff::Shape;
using autodiff::Tensor;

struct ImageDataset {
    Tensor images;            // [n, c, h, w], pixels in [0, 1]
    std::vector<int> labels;  // length n
    std::string split;

    std::size_t size() const { return images.defined() ? images.dim(0) : 0; }
    std::size_t num_classes() const {
        int mx = -1;
        for (int y : labels) mx = std::max(mx, y);
        return static_cast<std::size_t>(mx + 1);
    }
};

// ---------------------------------------------------------------------------
// IDX binary format (MNIST). Big-endian header; bit-exact decode with pixels
// scaled by 1/255.

namespace idx {

constexpr std::uint32_t kLabelMagic = 0x00000801;
constexpr std::uint32_t kImageMagic = 0x00000803;

inline std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t off) {
    return (std::uint32_t(bytes[off]) << 24) | (std::uint32_t(bytes[off + 1]) << 16) |
           (std::uint32_t(bytes[off + 2]) << 8) | std::uint32_t(bytes[off + 3]);
}

inline std::vector<int> parse_labels(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 8) throw std::invalid_argument("idx: truncated header (" + std::to_string(bytes.size()) + " bytes)");
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != kLabelMagic) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "0x%08x", magic);
        throw std::invalid_argument(std::string("idx: expected label magic 0x00000801, observed ") + buf);
    }
    const std::size_t n = read_be32(bytes, 4);
    if (bytes.size() != 8 + n)
        throw std::invalid_argument("idx: label payload length " + std::to_string(bytes.size() - 8) +
                                    ", expected " + std::to_string(n));
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = bytes[8 + i];
    return labels;
}

inline Tensor parse_images(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 16) throw std::invalid_argument("idx: truncated header (" + std::to_string(bytes.size()) + " bytes)");
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != kImageMagic) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "0x%08x", magic);
        throw std::invalid_argument(std::string("idx: expected image magic 0x00000803, observed ") + buf);
    }
    const std::size_t n = read_be32(bytes, 4), rows = read_be32(bytes, 8), cols = read_be32(bytes, 12);
    if (bytes.size() != 16 + n * rows * cols)
        throw std::invalid_argument("idx: image payload length " + std::to_string(bytes.size() - 16) +
                                    ", expected " + std::to_string(n * rows * cols));
    std::vector<double> px(n * rows * cols);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = bytes[16 + i] / 255.0;
    return Tensor({n, 1, rows, cols}, std::move(px));
}

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::invalid_argument("idx: cannot open " + path);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace idx

/// Load an MNIST-style pair of IDX files, optionally truncated to `limit`
/// samples.
inline ImageDataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                                     std::size_t limit = 0, const std::string& split = "train") {
    ImageDataset ds;
    ds.images = idx::parse_images(idx::read_file(images_path));
    ds.labels = idx::parse_labels(idx::read_file(labels_path));
    ds.split = split;
    if (ds.images.dim(0) != ds.labels.size())
        throw std::invalid_argument("idx: image/label count mismatch " + std::to_string(ds.images.dim(0)) +
                                    " vs " + std::to_string(ds.labels.size()));
    if (limit > 0 && limit < ds.size()) {
        const std::size_t stride = ds.images.size() / ds.images.dim(0);
        Shape shape = ds.images.shape();
        shape[0] = limit;
        std::vector<double> px(ds.images.data().begin(),
                               ds.images.data().begin() + static_cast<std::ptrdiff_t>(limit * stride));
        ds.images = Tensor(std::move(shape), std::move(px));
        ds.labels.resize(limit);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Synthetic blob images: one Gaussian bump location per class plus pixel
// noise whose scale shrinks as `separation` grows.

inline ImageDataset make_blobs(std::size_t n_per_class, std::size_t classes, const Shape& image_shape,
                               double separation, std::uint64_t seed) {
    if (n_per_class == 0) throw std::invalid_argument("make_blobs: empty dataset (n_per_class == 0)");
    if (classes < 2) throw std::invalid_argument("make_blobs: need at least 2 classes");
    if (!(separation > 0.0)) throw std::invalid_argument("make_blobs: separation must be positive");
    if (image_shape.size() != 3) throw std::invalid_argument("make_blobs: image shape must be {c, h, w}");

    const std::size_t c = image_shape[0], h = image_shape[1], w = image_shape[2];
    const std::size_t n = n_per_class * classes;
    Rng rng = derive_rng(seed, "data/blobs");

    // class centers spread on a circle inside the image
    std::vector<std::pair<double, double>> centers(classes);
    for (std::size_t k = 0; k < classes; ++k) {
        const double ang = 6.283185307179586 * static_cast<double>(k) / static_cast<double>(classes);
        centers[k] = {h / 2.0 + 0.3 * h * std::sin(ang), w / 2.0 + 0.3 * w * std::cos(ang)};
    }
    const double sigma = 0.16 * static_cast<double>(std::min(h, w));
    const double noise_sd = 0.5 / separation;

    std::vector<double> px(n * c * h * w);
    std::vector<int> labels(n);
    std::size_t s = 0;
    for (std::size_t k = 0; k < classes; ++k)
        for (std::size_t rep = 0; rep < n_per_class; ++rep, ++s) {
            labels[s] = static_cast<int>(k);
            const double amp = rng.uniform(0.7, 1.0);
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < h; ++i)
                    for (std::size_t j = 0; j < w; ++j) {
                        const double di = static_cast<double>(i) - centers[k].first;
                        const double dj = static_cast<double>(j) - centers[k].second;
                        const double bump = amp * std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
                        const double v = bump + rng.normal(0.0, noise_sd);
                        px[((s * c + ch) * h + i) * w + j] = std::min(1.0, std::max(0.0, v));
                    }
        }
    ImageDataset ds;
    ds.images = Tensor({n, c, h, w}, std::move(px));
    ds.labels = std::move(labels);
    ds.split = "synthetic";
    return ds;
}

/// Shared validator used by tests: every loader output must satisfy these.
inline void validate_image_dataset(const ImageDataset& ds) {
    if (!ds.images.defined() || ds.images.rank() != 4)
        throw std::invalid_argument("image dataset: images must be [n, c, h, w]");
    if (ds.images.dim(0) != ds.labels.size())
        throw std::invalid_argument("image dataset: image/label count mismatch");
    for (double v : ds.images.data())
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("image dataset: pixel outside [0, 1]");
    const std::size_t classes = ds.num_classes();
    for (int y : ds.labels)
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw std::invalid_argument("image dataset: label outside range");
}

}  // namespace advbench::data
