#include "mlock/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "byte_io.hpp"
#include "mlock/checkpoint.hpp"
#include "mlock/error.hpp"
#include "mlock/rng.hpp"

namespace mlock {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr char kCanonicalMagic[4] = {'M', 'L', 'D', 'S'};
constexpr std::uint16_t kCanonicalVersion = 1;
constexpr std::size_t kCifarPixels = 3072;

std::string hex32(std::uint32_t v) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s = "0x";
    for (int i = 7; i >= 0; --i) s.push_back(kHex[(v >> (4 * i)) & 0xF]);
    return s;
}

}  // namespace

void LabeledDataset::validate() const {
    if (class_count == 0) throw InvalidArgument("dataset '" + name + "': class_count must be positive");
    if (shape.height == 0 || shape.width == 0 || shape.channels == 0) {
        throw InvalidArgument("dataset '" + name + "': image dimensions must be positive");
    }
    if (pixels.size() != labels.size() * shape.pixels()) {
        throw InvalidArgument("dataset '" + name + "': pixel payload length " + std::to_string(pixels.size()) +
                              " != N*H*W*C = " + std::to_string(labels.size() * shape.pixels()));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= class_count) {
            throw InvalidArgument("dataset '" + name + "': label " + std::to_string(labels[i]) + " at index " +
                                  std::to_string(i) + " outside [0, " + std::to_string(class_count) + ")");
        }
    }
}

LabeledDataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                         std::size_t class_count, std::string name) {
    detail::ByteReader ir(images, "idx images");
    const std::uint32_t imagic = ir.u32_be();
    if (imagic != kIdxImagesMagic) {
        ir.fail("magic " + hex32(imagic) + " is not an IDX image file (expected 0x00000803)", 0);
    }
    const std::uint32_t n = ir.u32_be();
    const std::uint32_t h = ir.u32_be();
    const std::uint32_t w = ir.u32_be();
    if (h == 0 || w == 0) ir.fail("zero image dimension", 8);

    detail::ByteReader lr(labels, "idx labels");
    const std::uint32_t lmagic = lr.u32_be();
    if (lmagic != kIdxLabelsMagic) {
        lr.fail("magic " + hex32(lmagic) + " is not an IDX label file (expected 0x00000801)", 0);
    }
    const std::uint32_t ln = lr.u32_be();
    if (ln != n) lr.fail("label count " + std::to_string(ln) + " != image count " + std::to_string(n), 4);

    LabeledDataset ds;
    ds.name = std::move(name);
    ds.class_count = class_count;
    ds.shape = {h, w, 1};
    const std::size_t payload = std::size_t{n} * h * w;
    const auto px = ir.bytes(payload);
    if (ir.remaining() != 0) ir.fail(std::to_string(ir.remaining()) + " trailing bytes", ir.offset());
    ds.pixels.assign(px.begin(), px.end());

    const std::size_t label_base = lr.offset();
    const auto lb = lr.bytes(n);
    if (lr.remaining() != 0) lr.fail(std::to_string(lr.remaining()) + " trailing bytes", lr.offset());
    ds.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (lb[i] >= class_count) {
            lr.fail("label " + std::to_string(lb[i]) + " outside [0, " + std::to_string(class_count) + ")",
                    label_base + i);
        }
        ds.labels.push_back(lb[i]);
    }
    return ds;
}

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        std::size_t class_count, std::string name) {
    return parse_idx(read_file(images), read_file(labels), class_count, std::move(name));
}

LabeledDataset parse_cifar_binary(std::span<const std::uint8_t> bytes, CifarLabels labels, std::string name) {
    const std::size_t label_bytes = labels == CifarLabels::cifar10 ? 1 : 2;
    const std::size_t record = label_bytes + kCifarPixels;
    if (bytes.empty() || bytes.size() % record != 0) {
        throw FormatError("cifar: file length " + std::to_string(bytes.size()) + " is not a positive multiple of " +
                              std::to_string(record) + "-byte records",
                          bytes.size() - bytes.size() % record);
    }
    const std::size_t n = bytes.size() / record;
    LabeledDataset ds;
    ds.name = std::move(name);
    ds.class_count = labels == CifarLabels::cifar10 ? 10 : labels == CifarLabels::coarse ? 20 : 100;
    ds.shape = {32, 32, 3};
    ds.pixels.resize(n * kCifarPixels);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* rec = bytes.data() + i * record;
        const std::size_t label_at = labels == CifarLabels::fine ? 1 : 0;
        const std::uint8_t y = rec[label_at];
        if (y >= ds.class_count) {
            throw FormatError("cifar: label " + std::to_string(y) + " outside [0, " + std::to_string(ds.class_count) +
                                  ")",
                              i * record + label_at);
        }
        ds.labels[i] = y;
        const std::uint8_t* planes = rec + label_bytes;
        std::uint8_t* dst = ds.pixels.data() + i * kCifarPixels;
        for (std::size_t p = 0; p < 1024; ++p) {
            for (std::size_t c = 0; c < 3; ++c) dst[p * 3 + c] = planes[c * 1024 + p];
        }
    }
    return ds;
}

LabeledDataset load_cifar_binary(std::span<const std::filesystem::path> paths, CifarLabels labels, std::string name) {
    if (paths.empty()) throw InvalidArgument("cifar: no input files");
    LabeledDataset all;
    for (const auto& path : paths) {
        LabeledDataset part;
        try {
            part = parse_cifar_binary(read_file(path), labels, name);
        } catch (const FormatError& e) {
            throw FormatError(path.string() + ": " + e.what(), e.offset());
        }
        if (all.labels.empty()) {
            all = std::move(part);
        } else {
            all.pixels.insert(all.pixels.end(), part.pixels.begin(), part.pixels.end());
            all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
        }
    }
    return all;
}

std::vector<std::uint8_t> encode_canonical(const LabeledDataset& dataset) {
    dataset.validate();
    if (dataset.size() == 0) throw InvalidArgument("dataset '" + dataset.name + "' is empty");
    if (dataset.class_count > 0xFFFF || dataset.size() > 0xFFFFFFFFu || dataset.shape.height > 0xFFFF ||
        dataset.shape.width > 0xFFFF || dataset.shape.channels > 0xFF) {
        throw InvalidArgument("dataset '" + dataset.name + "' exceeds canonical header limits");
    }
    detail::ByteWriter w;
    w.text(std::string_view(kCanonicalMagic, 4));
    w.u16(kCanonicalVersion);
    w.u16(static_cast<std::uint16_t>(dataset.class_count));
    w.u32(static_cast<std::uint32_t>(dataset.size()));
    w.u16(static_cast<std::uint16_t>(dataset.shape.height));
    w.u16(static_cast<std::uint16_t>(dataset.shape.width));
    w.u8(static_cast<std::uint8_t>(dataset.shape.channels));
    w.bytes(dataset.pixels);
    const bool wide = dataset.class_count > 256;
    for (auto y : dataset.labels) {
        if (wide) {
            w.u16(y);
        } else {
            w.u8(static_cast<std::uint8_t>(y));
        }
    }
    return w.take();
}

LabeledDataset decode_canonical(std::span<const std::uint8_t> bytes, std::string name) {
    detail::ByteReader r(bytes, "canonical dataset");
    if (bytes.size() < 4 || !std::equal(kCanonicalMagic, kCanonicalMagic + 4, bytes.begin())) {
        throw FormatError("not a canonical dataset file: bad magic", 0);
    }
    r.bytes(4);
    const std::uint16_t version = r.u16();
    if (version != kCanonicalVersion) r.fail("unsupported version " + std::to_string(version), 4);
    LabeledDataset ds;
    ds.name = std::move(name);
    ds.class_count = r.u16();
    const std::uint32_t n = r.u32();
    ds.shape.height = r.u16();
    ds.shape.width = r.u16();
    ds.shape.channels = r.u8();
    if (ds.class_count == 0) r.fail("class count is zero", 6);
    if (n == 0) r.fail("dataset is empty", 8);
    if (ds.shape.pixels() == 0) r.fail("zero image dimension", 12);

    const std::size_t payload = std::size_t{n} * ds.shape.pixels();
    const bool wide = ds.class_count > 256;
    const std::size_t label_payload = std::size_t{n} * (wide ? 2 : 1);
    if (r.remaining() != payload + label_payload) {
        r.fail("payload length " + std::to_string(r.remaining()) + " != expected " +
                   std::to_string(payload + label_payload),
               r.offset());
    }
    const auto px = r.bytes(payload);
    ds.pixels.assign(px.begin(), px.end());
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t at = r.offset();
        ds.labels[i] = wide ? r.u16() : r.u8();
        if (ds.labels[i] >= ds.class_count) {
            r.fail("label " + std::to_string(ds.labels[i]) + " outside [0, " + std::to_string(ds.class_count) + ")",
                   at);
        }
    }
    return ds;
}

void save_canonical(const LabeledDataset& dataset, const std::filesystem::path& path) {
    write_file_atomic(path, encode_canonical(dataset));
}

LabeledDataset load_canonical(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return decode_canonical(bytes, path.stem().string());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
}

LabeledDataset subset(const LabeledDataset& dataset, std::span<const std::size_t> indices) {
    LabeledDataset out;
    out.name = dataset.name;
    out.class_count = dataset.class_count;
    out.shape = dataset.shape;
    const std::size_t px = dataset.shape.pixels();
    out.pixels.resize(indices.size() * px);
    out.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        if (src >= dataset.size()) throw InvalidArgument("subset index out of range");
        std::copy_n(dataset.pixels.data() + src * px, px, out.pixels.data() + i * px);
        out.labels[i] = dataset.labels[src];
    }
    return out;
}

IndexSplit split_half_indices(std::size_t n, std::uint64_t seed) {
    if (n < 2) throw InvalidArgument("split_half needs at least 2 samples, got " + std::to_string(n));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span(order));
    const std::size_t half = (n + 1) / 2;
    return {std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half)),
            std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(half), order.end())};
}

IndexSplit split_bernoulli_indices(std::size_t n, double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("bernoulli split probability must be in [0, 1]");
    IndexSplit split;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) (rng.uniform01() < p ? split.first : split.second).push_back(i);
    return split;
}

std::pair<LabeledDataset, LabeledDataset> split_half(const LabeledDataset& dataset, std::uint64_t seed) {
    const auto split = split_half_indices(dataset.size(), seed);
    return {subset(dataset, split.first), subset(dataset, split.second)};
}

Digest dataset_digest(const LabeledDataset& dataset) {
    Sha256 h;
    h.update("mlock-dataset-v1");
    for (std::uint64_t v : {std::uint64_t(dataset.class_count), std::uint64_t(dataset.shape.height),
                            std::uint64_t(dataset.shape.width), std::uint64_t(dataset.shape.channels),
                            std::uint64_t(dataset.size())}) {
        h.update_pod(v);
    }
    h.update(dataset.pixels);
    detail::ByteWriter labels;
    for (auto y : dataset.labels) labels.u16(y);
    h.update(labels.buffer());
    return h.finish();
}

Tensor<float> to_input_tensor(const LabeledDataset& dataset, std::size_t begin, std::size_t count) {
    if (begin + count > dataset.size() || count == 0) throw InvalidArgument("to_input_tensor: range out of bounds");
    const auto [h, w, c] = dataset.shape;
    Tensor<float> out(Shape{count, c, h, w});
    const std::size_t plane = h * w;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint8_t* src = dataset.pixels.data() + (begin + i) * dataset.shape.pixels();
        float* dst = out.data() + i * dataset.shape.pixels();
        for (std::size_t p = 0; p < plane; ++p) {
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch * plane + p] = static_cast<float>(src[p * c + ch]) / 255.0f;
        }
    }
    return out;
}

TrainingData to_training_data(const LabeledDataset& dataset) {
    return {to_input_tensor(dataset, 0, dataset.size()), dataset.labels};
}

}  // namespace mlock
