#include "mlock/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "byte_io.hpp"
#include "mlock/error.hpp"

namespace mlock {

namespace {

constexpr char kMagic[4] = {'M', 'L', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

// Guards against absurd allocations from corrupted headers.
constexpr std::uint32_t kMaxLayers = 4096;
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxDim = 1u << 28;

enum Tag : std::uint8_t { kDense = 1, kReLU = 2, kConv2D = 3, kMaxPool2D = 4, kFlatten = 5 };

void write_layer(detail::ByteWriter& w, const Layer& layer) {
    if (const auto* d = std::get_if<layer::Dense>(&layer)) {
        w.u8(kDense);
        w.u32(static_cast<std::uint32_t>(d->in));
        w.u32(static_cast<std::uint32_t>(d->out));
    } else if (std::holds_alternative<layer::ReLU>(layer)) {
        w.u8(kReLU);
    } else if (const auto* c = std::get_if<layer::Conv2D>(&layer)) {
        w.u8(kConv2D);
        for (auto v : {c->in_channels, c->out_channels, c->kernel, c->stride, c->padding}) {
            w.u32(static_cast<std::uint32_t>(v));
        }
    } else if (const auto* m = std::get_if<layer::MaxPool2D>(&layer)) {
        w.u8(kMaxPool2D);
        w.u32(static_cast<std::uint32_t>(m->kernel));
        w.u32(static_cast<std::uint32_t>(m->stride));
    } else {
        w.u8(kFlatten);
    }
}

std::size_t read_dim(detail::ByteReader& r) {
    const std::size_t at = r.offset();
    const std::uint32_t v = r.u32();
    if (v > kMaxDim) r.fail("dimension " + std::to_string(v) + " exceeds limit", at);
    return v;
}

Layer read_layer(detail::ByteReader& r) {
    const std::size_t at = r.offset();
    switch (r.u8()) {
        case kDense: {
            layer::Dense d;
            d.in = read_dim(r);
            d.out = read_dim(r);
            return d;
        }
        case kReLU:
            return layer::ReLU{};
        case kConv2D: {
            layer::Conv2D c;
            c.in_channels = read_dim(r);
            c.out_channels = read_dim(r);
            c.kernel = read_dim(r);
            c.stride = read_dim(r);
            c.padding = read_dim(r);
            return c;
        }
        case kMaxPool2D: {
            layer::MaxPool2D m;
            m.kernel = read_dim(r);
            m.stride = read_dim(r);
            return m;
        }
        case kFlatten:
            return layer::Flatten{};
        default:
            r.fail("unknown layer tag", at);
    }
}

void write_spec(detail::ByteWriter& w, const NetworkSpec& spec) {
    w.u32(static_cast<std::uint32_t>(spec.class_count));
    w.u32(static_cast<std::uint32_t>(spec.input.size()));
    for (auto d : spec.input) w.u32(static_cast<std::uint32_t>(d));
    w.u32(static_cast<std::uint32_t>(spec.layers.size()));
    for (const auto& l : spec.layers) write_layer(w, l);
}

}  // namespace

std::vector<std::uint8_t> serialize_spec(const NetworkSpec& spec) {
    detail::ByteWriter w;
    write_spec(w, spec);
    return w.take();
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    validate(ckpt.spec);
    check_parameters(ckpt.spec, ckpt.params);
    detail::ByteWriter w;
    w.text(std::string_view(kMagic, 4));
    w.u16(kVersion);
    write_spec(w, ckpt.spec);
    for (const auto& t : ckpt.params.tensors) {
        for (float v : t.values()) w.f32(v);
    }
    w.u64(ckpt.metadata.seed);
    w.u32(ckpt.metadata.epochs);
    w.bytes(ckpt.metadata.config_digest);
    return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "checkpoint");
    if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
        throw FormatError("not a checkpoint: bad magic", 0);
    }
    r.bytes(4);
    const std::size_t version_at = r.offset();
    const std::uint16_t version = r.u16();
    if (version != kVersion) r.fail("unsupported version " + std::to_string(version), version_at);

    Checkpoint ckpt;
    ckpt.spec.class_count = read_dim(r);
    const std::size_t rank_at = r.offset();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > kMaxRank) r.fail("invalid input rank " + std::to_string(rank), rank_at);
    for (std::uint32_t i = 0; i < rank; ++i) ckpt.spec.input.push_back(read_dim(r));
    const std::size_t count_at = r.offset();
    const std::uint32_t count = r.u32();
    if (count == 0 || count > kMaxLayers) r.fail("invalid layer count " + std::to_string(count), count_at);
    for (std::uint32_t i = 0; i < count; ++i) ckpt.spec.layers.push_back(read_layer(r));

    const std::size_t spec_end = r.offset();
    std::vector<Shape> shapes;
    try {
        validate(ckpt.spec);
        shapes = parameter_shapes(ckpt.spec);
    } catch (const ShapeError& e) {
        r.fail(std::string("inconsistent network spec: ") + e.what(), spec_end);
    }
    std::size_t total = 0;
    for (const auto& s : shapes) total += shape_size(s);
    r.need(total * 4);
    for (const auto& s : shapes) {
        Tensor<float> t(s);
        for (auto& v : t.values()) v = r.f32();
        ckpt.params.tensors.push_back(std::move(t));
    }
    ckpt.metadata.seed = r.u64();
    ckpt.metadata.epochs = r.u32();
    const auto digest = r.bytes(ckpt.metadata.config_digest.size());
    std::copy(digest.begin(), digest.end(), ckpt.metadata.config_digest.begin());
    if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes", r.offset());
    return ckpt;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename into " + path.string());
    }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

Digest checkpoint_digest(const Checkpoint& ckpt) { return sha256(serialize_checkpoint(ckpt)); }

}  // namespace mlock
