#include "mlock/image_import.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mlock/checkpoint.hpp"
#include "mlock/error.hpp"

namespace mlock {

namespace {

// Parses the next whitespace-delimited header integer, skipping '#' comments.
std::size_t pnm_header_int(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    for (;;) {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        if (pos < bytes.size() && bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
        v = v * 10 + (bytes[pos] - '0');
        if (v > (1u << 24)) throw FormatError("pnm: header value too large", start);
        ++pos;
    }
    if (pos == start) throw FormatError("pnm: expected an integer in header", start);
    return v;
}

std::vector<std::string> split_row(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, sep)) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        out.push_back(cell);
    }
    return out;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace

Image parse_pnm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw FormatError("pnm: only binary P5/P6 images are supported", 0);
    }
    const std::size_t channels = bytes[1] == '5' ? 1 : 3;
    std::size_t pos = 2;
    const std::size_t width = pnm_header_int(bytes, pos);
    const std::size_t height = pnm_header_int(bytes, pos);
    const std::size_t maxval_at = pos;
    const std::size_t maxval = pnm_header_int(bytes, pos);
    if (width == 0 || height == 0) throw FormatError("pnm: zero dimension", 2);
    if (maxval == 0 || maxval > 255) throw FormatError("pnm: only 8-bit maxval is supported", maxval_at);
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("pnm: malformed header", pos);
    ++pos;
    Image img{{height, width, channels}, {}};
    const std::size_t need = img.shape.pixels();
    if (bytes.size() - pos < need) {
        throw FormatError("pnm: truncated pixel data, need " + std::to_string(need) + " bytes", bytes.size());
    }
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    if (maxval != 255) {
        for (auto& v : img.pixels) v = static_cast<std::uint8_t>(std::lround(v * 255.0 / static_cast<double>(maxval)));
    }
    return img;
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw InvalidArgument("resize target must be non-empty");
    const auto [ih, iw, c] = image.shape;
    Image out{{height, width, c}, std::vector<std::uint8_t>(height * width * c)};
    const double sy = static_cast<double>(ih) / static_cast<double>(height);
    const double sx = static_cast<double>(iw) / static_cast<double>(width);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(ih - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, ih - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx =
                std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(iw - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, iw - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                auto at = [&](std::size_t yy, std::size_t xx) {
                    return static_cast<double>(image.pixels[(yy * iw + xx) * c + ch]);
                };
                const double top = at(y0, x0) * (1 - wx) + at(y0, x1) * wx;
                const double bottom = at(y1, x0) * (1 - wx) + at(y1, x1) * wx;
                out.pixels[(y * width + x) * c + ch] =
                    static_cast<std::uint8_t>(std::lround(std::clamp(top * (1 - wy) + bottom * wy, 0.0, 255.0)));
            }
        }
    }
    return out;
}

Image convert_channels(const Image& image, std::size_t channels) {
    const std::size_t from = image.shape.channels;
    if (from == channels) return image;
    const std::size_t n = image.shape.height * image.shape.width;
    Image out{{image.shape.height, image.shape.width, channels}, std::vector<std::uint8_t>(n * channels)};
    if (from == 1 && channels == 3) {
        for (std::size_t i = 0; i < n; ++i) std::fill_n(out.pixels.data() + i * 3, 3, image.pixels[i]);
    } else if (from == 3 && channels == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint8_t* p = image.pixels.data() + i * 3;
            out.pixels[i] = static_cast<std::uint8_t>(std::lround(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]));
        }
    } else {
        throw InvalidArgument("unsupported channel conversion " + std::to_string(from) + " -> " +
                              std::to_string(channels));
    }
    return out;
}

LabeledDataset import_manifest(const std::filesystem::path& manifest, const ImageImportOptions& options,
                               std::string name) {
    std::ifstream in(manifest);
    if (!in) throw IoError("cannot open manifest " + manifest.string());
    std::string header;
    if (!std::getline(in, header)) throw FormatError(manifest.string() + ": empty manifest", 0);
    const char sep = header.find(';') != std::string::npos ? ';' : ',';
    const auto columns = split_row(header, sep);
    std::size_t file_col = columns.size(), class_col = columns.size();
    for (std::size_t i = 0; i < columns.size(); ++i) {
        const auto c = lower(columns[i]);
        if (c == "filename" || c == "path") file_col = i;
        if (c == "classid" || c == "label") class_col = i;
    }
    if (file_col == columns.size() || class_col == columns.size()) {
        throw FormatError(manifest.string() + ": header needs Filename and ClassId columns", 0);
    }

    LabeledDataset ds;
    ds.name = std::move(name);
    ds.class_count = options.class_count;
    ds.shape = {options.height, options.width, options.channels};
    const auto base = manifest.parent_path();
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_row(line, sep);
        const std::string where = manifest.string() + " line " + std::to_string(line_no);
        if (cells.size() <= std::max(file_col, class_col)) throw InvalidArgument(where + ": missing columns");
        std::size_t label = 0;
        try {
            label = std::stoul(cells[class_col]);
        } catch (const std::exception&) {
            throw InvalidArgument(where + ": bad class id '" + cells[class_col] + "'");
        }
        if (label >= options.class_count) throw InvalidArgument(where + ": class id out of range");
        Image img;
        try {
            img = parse_pnm(read_file(base / cells[file_col]));
        } catch (const FormatError& e) {
            throw FormatError(where + ": " + e.what(), e.offset());
        }
        img = convert_channels(resize_bilinear(img, options.height, options.width), options.channels);
        ds.pixels.insert(ds.pixels.end(), img.pixels.begin(), img.pixels.end());
        ds.labels.push_back(static_cast<std::uint16_t>(label));
    }
    return ds;
}

}  // namespace mlock
