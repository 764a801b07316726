#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mlock/dataset.hpp"

namespace mlock {

/// A decoded 8-bit image, interleaved H x W x C.
struct Image {
    ImageShape shape;
    std::vector<std::uint8_t> pixels;
};

/// Binary PGM (P5) or PPM (P6) with maxval <= 255.
Image parse_pnm(std::span<const std::uint8_t> bytes);

/// Bilinear resampling with half-pixel centers and edge clamping.
/// Channel count is preserved.
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);

/// Gray -> RGB by replication; RGB -> gray by the BT.601 luma weights.
Image convert_channels(const Image& image, std::size_t channels);

struct ImageImportOptions {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t channels = 3;
    std::size_t class_count = 43;
};

/// Imports images listed in a CSV manifest (GTSRB annotation layout):
/// a header naming at least `Filename` and `ClassId` columns, separated by
/// ';' or ','. Paths are relative to the manifest's directory. Each image is
/// resized to the requested size.
LabeledDataset import_manifest(const std::filesystem::path& manifest, const ImageImportOptions& options,
                               std::string name = "");

}  // namespace mlock
