#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlock/dataset.hpp"
#include "mlock/rng.hpp"

namespace mlock {

struct MotifCell {
    std::size_t dy = 0, dx = 0;
    std::uint8_t intensity = 255;  // applied to every channel
    friend bool operator==(const MotifCell&, const MotifCell&) = default;
};

/// A certificate pattern: sparse cells relative to its top-left origin.
struct CertificateMotif {
    std::string id;
    std::vector<MotifCell> cells;
    std::size_t height = 0, width = 0;  // bounding box

    /// Throws InvalidArgument if there are no cells or a cell lies outside the box.
    void validate() const;
    friend bool operator==(const CertificateMotif&, const CertificateMotif&) = default;
};

enum class PlacementMode { fixed_bottom_right, random_uniform };

struct Placement {
    PlacementMode mode = PlacementMode::fixed_bottom_right;
    std::size_t margin = 1;  // distance from the bottom/right edges; fixed mode only
    friend bool operator==(const Placement&, const Placement&) = default;
};

struct Origin {
    std::size_t y = 0, x = 0;
    friend bool operator==(const Origin&, const Origin&) = default;
};

std::string placement_name(const Placement& placement);
/// "fixed" or "random".
PlacementMode parse_placement_mode(std::string_view text);

/// Motif "I" (four pixels on a 3x3 box) and motif "II" (3x3 ring), both at 255.
std::vector<CertificateMotif> builtin_motifs();

/// Solid h x w block.
CertificateMotif block_motif(std::string id, std::size_t height, std::size_t width, std::uint8_t intensity = 255);
/// h x w checkerboard whose top-left cell is lit.
CertificateMotif checker_motif(std::string id, std::size_t height, std::size_t width, std::uint8_t intensity = 255);

/// Resolves "I", "II", "block:HxW" or "checker:HxW". Throws InvalidArgument if unknown.
CertificateMotif find_motif(std::string_view name);

/// Text format: a header line "motif <id> <h> <w>" followed by "dy dx intensity"
/// lines. Several motifs may share a file; '#' starts a comment.
std::vector<CertificateMotif> parse_motif_file(std::string_view text);
std::vector<CertificateMotif> load_motif_file(const std::filesystem::path& path);
std::string format_motif(const CertificateMotif& motif);

/// Throws InvalidArgument when the motif (plus margin, for fixed mode) cannot fit.
void check_fits(const ImageShape& shape, const CertificateMotif& motif, const Placement& placement);

/// Fixed mode: (H - h - margin, W - w - margin). Random mode: uniform over all
/// origins where the box lies fully inside the image. Fixed mode draws nothing.
Origin choose_origin(const ImageShape& shape, const CertificateMotif& motif, const Placement& placement, Rng& rng);

/// Writes the motif cells at `origin` into every channel.
void stamp_at(std::span<std::uint8_t> image, const ImageShape& shape, const CertificateMotif& motif, Origin origin);

/// Stamps in place and returns the origin used.
Origin stamp_in_place(std::span<std::uint8_t> image, const ImageShape& shape, const CertificateMotif& motif,
                      const Placement& placement, Rng& rng);

std::vector<std::uint8_t> stamp(std::span<const std::uint8_t> image, const ImageShape& shape,
                                const CertificateMotif& motif, const Placement& placement, Rng& rng);

/// Stamps every image; image i uses the generator Rng::derive(seed, stream, i).
LabeledDataset stamp_dataset(const LabeledDataset& dataset, const CertificateMotif& motif, const Placement& placement,
                             std::uint64_t seed, std::uint64_t stream = 0);

/// Fraction of images whose fixed stamping region (the motif box) has mean
/// intensity below `threshold`. Fixed placement only.
double verify_region_dark(const LabeledDataset& dataset, const CertificateMotif& motif, const Placement& placement,
                          double threshold);

}  // namespace mlock
