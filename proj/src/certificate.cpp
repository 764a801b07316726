#include "mlock/certificate.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mlock/error.hpp"

namespace mlock {

namespace {

std::pair<std::size_t, std::size_t> parse_dims(std::string_view text, std::string_view full) {
    const auto x = text.find('x');
    std::size_t h = 0, w = 0;
    if (x == std::string_view::npos) throw InvalidArgument("bad motif size in '" + std::string(full) + "'");
    const auto r1 = std::from_chars(text.data(), text.data() + x, h);
    const auto r2 = std::from_chars(text.data() + x + 1, text.data() + text.size(), w);
    if (r1.ec != std::errc{} || r2.ec != std::errc{} || r1.ptr != text.data() + x ||
        r2.ptr != text.data() + text.size() || h == 0 || w == 0) {
        throw InvalidArgument("bad motif size in '" + std::string(full) + "'");
    }
    return {h, w};
}

}  // namespace

void CertificateMotif::validate() const {
    if (cells.empty()) throw InvalidArgument("motif '" + id + "' has no cells");
    for (const auto& c : cells) {
        if (c.dy >= height || c.dx >= width) {
            throw InvalidArgument("motif '" + id + "': cell (" + std::to_string(c.dy) + "," + std::to_string(c.dx) +
                                  ") outside its " + std::to_string(height) + "x" + std::to_string(width) + " box");
        }
    }
}

std::string placement_name(const Placement& placement) {
    return placement.mode == PlacementMode::fixed_bottom_right ? "fixed" : "random";
}

PlacementMode parse_placement_mode(std::string_view text) {
    if (text == "fixed") return PlacementMode::fixed_bottom_right;
    if (text == "random") return PlacementMode::random_uniform;
    throw InvalidArgument("unknown placement '" + std::string(text) + "' (expected fixed or random)");
}

std::vector<CertificateMotif> builtin_motifs() {
    CertificateMotif multi_pixel{"I", {{0, 0, 255}, {1, 1, 255}, {0, 2, 255}, {2, 0, 255}}, 3, 3};
    CertificateMotif pattern{"II", {}, 3, 3};
    for (std::size_t y = 0; y < 3; ++y) {
        for (std::size_t x = 0; x < 3; ++x) {
            if (y != 1 || x != 1) pattern.cells.push_back({y, x, 255});
        }
    }
    return {multi_pixel, pattern};
}

CertificateMotif block_motif(std::string id, std::size_t height, std::size_t width, std::uint8_t intensity) {
    CertificateMotif m{std::move(id), {}, height, width};
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) m.cells.push_back({y, x, intensity});
    m.validate();
    return m;
}

CertificateMotif checker_motif(std::string id, std::size_t height, std::size_t width, std::uint8_t intensity) {
    CertificateMotif m{std::move(id), {}, height, width};
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            if ((y + x) % 2 == 0) m.cells.push_back({y, x, intensity});
    m.validate();
    return m;
}

CertificateMotif find_motif(std::string_view name) {
    for (auto& m : builtin_motifs()) {
        if (m.id == name) return m;
    }
    for (std::string_view prefix : {"block:", "checker:"}) {
        if (name.starts_with(prefix)) {
            const auto [h, w] = parse_dims(name.substr(prefix.size()), name);
            return prefix == "block:" ? block_motif(std::string(name), h, w) : checker_motif(std::string(name), h, w);
        }
    }
    throw InvalidArgument("unknown motif '" + std::string(name) + "' (expected I, II, block:HxW or checker:HxW)");
}

std::vector<CertificateMotif> parse_motif_file(std::string_view text) {
    std::vector<CertificateMotif> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) -> void {
        throw InvalidArgument("motif file line " + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string first;
        if (!(fields >> first)) continue;
        if (first == "motif") {
            CertificateMotif m;
            long long h = 0, w = 0;
            if (!(fields >> m.id >> h >> w) || h <= 0 || w <= 0) fail("expected 'motif <id> <h> <w>'");
            m.height = static_cast<std::size_t>(h);
            m.width = static_cast<std::size_t>(w);
            out.push_back(std::move(m));
            continue;
        }
        if (out.empty()) fail("cell line before any 'motif' header");
        long long dy = 0, dx = 0, intensity = 0;
        std::istringstream cell(line);
        if (!(cell >> dy >> dx >> intensity)) fail("expected 'dy dx intensity'");
        std::string extra;
        if (cell >> extra) fail("unexpected trailing field '" + extra + "'");
        if (intensity < 0 || intensity > 255) fail("intensity outside [0, 255]");
        auto& m = out.back();
        if (dy < 0 || dx < 0 || static_cast<std::size_t>(dy) >= m.height || static_cast<std::size_t>(dx) >= m.width) {
            fail("cell outside the motif box");
        }
        m.cells.push_back({static_cast<std::size_t>(dy), static_cast<std::size_t>(dx),
                           static_cast<std::uint8_t>(intensity)});
    }
    for (const auto& m : out) m.validate();
    if (out.empty()) throw InvalidArgument("motif file defines no motifs");
    return out;
}

std::vector<CertificateMotif> load_motif_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open motif file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_motif_file(buffer.str());
}

std::string format_motif(const CertificateMotif& motif) {
    std::string s = "motif " + motif.id + " " + std::to_string(motif.height) + " " + std::to_string(motif.width) + "\n";
    for (const auto& c : motif.cells) {
        s += std::to_string(c.dy) + " " + std::to_string(c.dx) + " " + std::to_string(c.intensity) + "\n";
    }
    return s;
}

void check_fits(const ImageShape& shape, const CertificateMotif& motif, const Placement& placement) {
    motif.validate();
    const std::size_t margin = placement.mode == PlacementMode::fixed_bottom_right ? placement.margin : 0;
    if (motif.height + margin > shape.height || motif.width + margin > shape.width) {
        throw InvalidArgument("motif '" + motif.id + "' (" + std::to_string(motif.height) + "x" +
                              std::to_string(motif.width) + ", margin " + std::to_string(margin) +
                              ") does not fit a " + std::to_string(shape.height) + "x" +
                              std::to_string(shape.width) + " image");
    }
}

Origin choose_origin(const ImageShape& shape, const CertificateMotif& motif, const Placement& placement, Rng& rng) {
    check_fits(shape, motif, placement);
    if (placement.mode == PlacementMode::fixed_bottom_right) {
        return {shape.height - motif.height - placement.margin, shape.width - motif.width - placement.margin};
    }
    const std::size_t rows = shape.height - motif.height + 1;
    const std::size_t cols = shape.width - motif.width + 1;
    const auto k = static_cast<std::size_t>(rng.uniform_index(rows * cols));
    return {k / cols, k % cols};
}

void stamp_at(std::span<std::uint8_t> image, const ImageShape& shape, const CertificateMotif& motif, Origin origin) {
    if (image.size() != shape.pixels()) throw ShapeError("image buffer does not match its shape");
    if (origin.y + motif.height > shape.height || origin.x + motif.width > shape.width) {
        throw InvalidArgument("motif origin places cells outside the image");
    }
    for (const auto& cell : motif.cells) {
        const std::size_t base = ((origin.y + cell.dy) * shape.width + origin.x + cell.dx) * shape.channels;
        for (std::size_t c = 0; c < shape.channels; ++c) image[base + c] = cell.intensity;
    }
}

Origin stamp_in_place(std::span<std::uint8_t> image, const ImageShape& shape, const CertificateMotif& motif,
                      const Placement& placement, Rng& rng) {
    const Origin origin = choose_origin(shape, motif, placement, rng);
    stamp_at(image, shape, motif, origin);
    return origin;
}

std::vector<std::uint8_t> stamp(std::span<const std::uint8_t> image, const ImageShape& shape,
                                const CertificateMotif& motif, const Placement& placement, Rng& rng) {
    std::vector<std::uint8_t> out(image.begin(), image.end());
    stamp_in_place(out, shape, motif, placement, rng);
    return out;
}

LabeledDataset stamp_dataset(const LabeledDataset& dataset, const CertificateMotif& motif, const Placement& placement,
                             std::uint64_t seed, std::uint64_t stream) {
    check_fits(dataset.shape, motif, placement);
    LabeledDataset out = dataset;
    const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        Rng rng = Rng::derive(seed, stream, static_cast<std::uint64_t>(i));
        stamp_in_place(out.image(static_cast<std::size_t>(i)), out.shape, motif, placement, rng);
    }
    return out;
}

double verify_region_dark(const LabeledDataset& dataset, const CertificateMotif& motif, const Placement& placement,
                          double threshold) {
    if (placement.mode != PlacementMode::fixed_bottom_right) {
        throw InvalidArgument("verify_region_dark requires fixed placement");
    }
    if (dataset.size() == 0) return 1.0;
    Rng unused(0);
    const Origin o = choose_origin(dataset.shape, motif, placement, unused);
    const auto& s = dataset.shape;
    std::size_t dark = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto img = dataset.image(i);
        double sum = 0.0;
        for (std::size_t y = o.y; y < o.y + motif.height; ++y)
            for (std::size_t x = o.x; x < o.x + motif.width; ++x)
                for (std::size_t c = 0; c < s.channels; ++c) sum += img[(y * s.width + x) * s.channels + c];
        const double mean = sum / static_cast<double>(motif.height * motif.width * s.channels);
        dark += mean < threshold;
    }
    return static_cast<double>(dark) / static_cast<double>(dataset.size());
}

}  // namespace mlock
