#pragma once

#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bdfl/dataset.hpp"

namespace bdfl {

// IDX binary layout (the public MNIST distribution format): big-endian
// 32-bit magic, then dimension sizes, then raw payload bytes.
constexpr std::uint32_t kIdxImageMagic = 2051;  // 0x00000803
constexpr std::uint32_t kIdxLabelMagic = 2049;  // 0x00000801

struct IdxParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint32_t read_be32(std::ifstream& in, const std::string& path, std::size_t offset) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4)
        throw IdxParseError(path + ": truncated read at offset " + std::to_string(offset));
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

inline void write_be32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

struct IdxImages {
    std::uint32_t count = 0, rows = 0, cols = 0;
    std::vector<std::uint8_t> pixels;  // count*rows*cols bytes
};

inline IdxImages read_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IdxParseError(path + ": cannot open");
    std::uint32_t magic = detail::read_be32(in, path, 0);
    if (magic != kIdxImageMagic)
        throw IdxParseError(path + ": bad image magic " + std::to_string(magic) + " at offset 0");
    IdxImages img;
    img.count = detail::read_be32(in, path, 4);
    img.rows = detail::read_be32(in, path, 8);
    img.cols = detail::read_be32(in, path, 12);
    std::size_t payload = std::size_t(img.count) * img.rows * img.cols;
    img.pixels.resize(payload);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(payload));
    if (static_cast<std::size_t>(in.gcount()) != payload)
        throw IdxParseError(path + ": truncated pixel data at offset " +
                            std::to_string(16 + in.gcount()));
    return img;
}

inline std::vector<std::uint8_t> read_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IdxParseError(path + ": cannot open");
    std::uint32_t magic = detail::read_be32(in, path, 0);
    if (magic != kIdxLabelMagic)
        throw IdxParseError(path + ": bad label magic " + std::to_string(magic) + " at offset 0");
    std::uint32_t count = detail::read_be32(in, path, 4);
    std::vector<std::uint8_t> labels(count);
    in.read(reinterpret_cast<char*>(labels.data()), count);
    if (static_cast<std::size_t>(in.gcount()) != count)
        throw IdxParseError(path + ": truncated label data at offset " +
                            std::to_string(8 + in.gcount()));
    return labels;
}

inline void write_idx_images(const std::string& path, std::uint32_t rows, std::uint32_t cols,
                             const std::vector<std::uint8_t>& pixels) {
    if (rows == 0 || cols == 0 || pixels.size() % (std::size_t(rows) * cols) != 0)
        throw std::invalid_argument("write_idx_images: pixel buffer does not tile rows*cols");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_idx_images: cannot open " + path);
    detail::write_be32(out, kIdxImageMagic);
    detail::write_be32(out, static_cast<std::uint32_t>(pixels.size() / (std::size_t(rows) * cols)));
    detail::write_be32(out, rows);
    detail::write_be32(out, cols);
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
    if (!out) throw std::runtime_error("write_idx_images: write failed: " + path);
}

inline void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_idx_labels: cannot open " + path);
    detail::write_be32(out, kIdxLabelMagic);
    detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
    if (!out) throw std::runtime_error("write_idx_labels: write failed: " + path);
}

// Loads an image/label IDX pair, scales pixels to [0,1], and takes a seeded
// subsample of subset_size items (deterministic for a given seed).
inline Dataset load_mnist(const std::string& image_path, const std::string& label_path,
                          std::size_t subset_size, std::uint64_t seed, int num_classes = 10) {
    IdxImages img = read_idx_images(image_path);
    std::vector<std::uint8_t> labels = read_idx_labels(label_path);
    if (labels.size() != img.count)
        throw IdxParseError(label_path + ": label count " + std::to_string(labels.size()) +
                            " does not match image count " + std::to_string(img.count));
    if (subset_size > img.count)
        throw std::invalid_argument("load_mnist: subset " + std::to_string(subset_size) +
                                    " exceeds file size " + std::to_string(img.count));
    std::vector<Eigen::Index> idx(img.count);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(subset_size);

    const Eigen::Index dim = static_cast<Eigen::Index>(img.rows) * img.cols;
    Dataset ds;
    ds.num_classes = num_classes;
    ds.provenance = Provenance::mnist_subset;
    ds.features.resize(static_cast<Eigen::Index>(subset_size), dim);
    ds.labels.resize(subset_size);
    for (std::size_t i = 0; i < subset_size; ++i) {
        const std::uint8_t* px = img.pixels.data() + static_cast<std::size_t>(idx[i]) * dim;
        for (Eigen::Index d = 0; d < dim; ++d)
            ds.features(static_cast<Eigen::Index>(i), d) = px[d] / 255.0;
        int lbl = labels[static_cast<std::size_t>(idx[i])];
        if (lbl >= num_classes)
            throw IdxParseError(label_path + ": label " + std::to_string(lbl) +
                                " out of range at item " + std::to_string(idx[i]));
        ds.labels[i] = lbl;
    }
    return ds;
}

}  // namespace bdfl
