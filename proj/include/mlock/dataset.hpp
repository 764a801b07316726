#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mlock/digest.hpp"
#include "mlock/tensor.hpp"
#include "mlock/train.hpp"

namespace mlock {

struct ImageShape {
    std::size_t height = 0, width = 0, channels = 0;

    std::size_t pixels() const { return height * width * channels; }
    friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Images as 8-bit intensities, N x H x W x C interleaved, with integer labels.
struct LabeledDataset {
    std::string name;
    std::size_t class_count = 0;
    ImageShape shape;
    std::vector<std::uint8_t> pixels;
    std::vector<std::uint16_t> labels;

    std::size_t size() const { return labels.size(); }
    std::span<std::uint8_t> image(std::size_t i) { return std::span(pixels).subspan(i * shape.pixels(), shape.pixels()); }
    std::span<const std::uint8_t> image(std::size_t i) const {
        return std::span(pixels).subspan(i * shape.pixels(), shape.pixels());
    }

    /// Throws InvalidArgument if any invariant is violated.
    void validate() const;

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

/// IDX image/label pair (MNIST layout). C is 1.
LabeledDataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                         std::size_t class_count = 10, std::string name = "");
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        std::size_t class_count = 10, std::string name = "");

enum class CifarLabels {
    cifar10,  // 1 label byte, 10 classes
    coarse,   // CIFAR-100, first label byte, 20 classes
    fine,     // CIFAR-100, second label byte, 100 classes
};

/// CIFAR binary records (label byte(s) + 1024 R + 1024 G + 1024 B), converted to interleaved HWC.
LabeledDataset parse_cifar_binary(std::span<const std::uint8_t> bytes, CifarLabels labels, std::string name = "");
LabeledDataset load_cifar_binary(std::span<const std::filesystem::path> paths, CifarLabels labels,
                                 std::string name = "");

/// Canonical container, integers little-endian:
///   "MLDS" | u16 version (1) | u16 K | u32 N | u16 H | u16 W | u8 C | N*H*W*C pixels | N labels
/// Labels are one byte each, or u16 when K > 256.
std::vector<std::uint8_t> encode_canonical(const LabeledDataset& dataset);
LabeledDataset decode_canonical(std::span<const std::uint8_t> bytes, std::string name = "");
void save_canonical(const LabeledDataset& dataset, const std::filesystem::path& path);
/// The dataset name is taken from the file stem.
LabeledDataset load_canonical(const std::filesystem::path& path);

LabeledDataset subset(const LabeledDataset& dataset, std::span<const std::size_t> indices);

struct IndexSplit {
    std::vector<std::size_t> first;
    std::vector<std::size_t> second;
};

/// Seeded shuffle then exact split; |first| = ceil(N / 2). Requires N >= 2.
IndexSplit split_half_indices(std::size_t n, std::uint64_t seed);

/// Each index goes to `first` independently with probability p.
IndexSplit split_bernoulli_indices(std::size_t n, double p, std::uint64_t seed);

std::pair<LabeledDataset, LabeledDataset> split_half(const LabeledDataset& dataset, std::uint64_t seed);

/// SHA-256 over shape, class count, pixels and labels.
Digest dataset_digest(const LabeledDataset& dataset);

/// Network input tensor [count, C, H, W] with intensities divided by 255.
Tensor<float> to_input_tensor(const LabeledDataset& dataset, std::size_t begin, std::size_t count);

TrainingData to_training_data(const LabeledDataset& dataset);

}  // namespace mlock
