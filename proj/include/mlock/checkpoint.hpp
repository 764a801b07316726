#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mlock/digest.hpp"
#include "mlock/network.hpp"

namespace mlock {

struct CheckpointMetadata {
    std::uint64_t seed = 0;
    std::uint32_t epochs = 0;
    Digest config_digest{};

    friend bool operator==(const CheckpointMetadata&, const CheckpointMetadata&) = default;
};

/// A trained (or freshly initialized) network.
struct Checkpoint {
    NetworkSpec spec;
    Parameters<float> params;
    CheckpointMetadata metadata;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Binary layout, all integers little-endian:
///
///   "MLCK" | u16 version (1)
///   u32 class_count | u32 input rank | u32 input dims...
///   u32 layer count | per layer: u8 tag + u32 dims
///       Dense=1 (in, out), ReLU=2 (), Conv2D=3 (in_ch, out_ch, kernel, stride, padding),
///       MaxPool2D=4 (kernel, stride), Flatten=5 ()
///   parameter tensors in layer order as f32 (weight then bias)
///   u64 seed | u32 epochs | 32-byte config digest
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);

/// The network-spec section of the checkpoint encoding (class count, input shape, layers).
std::vector<std::uint8_t> serialize_spec(const NetworkSpec& spec);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

inline Tensor<float> forward(const Checkpoint& ckpt, const Tensor<float>& batch) {
    return forward(ckpt.spec, ckpt.params, batch);
}

inline LossAndGrad<float> loss_and_grad(const Checkpoint& ckpt, const Tensor<float>& batch,
                                        std::span<const std::uint16_t> labels) {
    return loss_and_grad(ckpt.spec, ckpt.params, batch, labels);
}

/// SHA-256 of the serialized byte stream.
Digest checkpoint_digest(const Checkpoint& ckpt);

/// Atomic whole-file write (temporary file + rename). Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace mlock
