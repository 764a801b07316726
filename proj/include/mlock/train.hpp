#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mlock/checkpoint.hpp"
#include "mlock/network.hpp"

namespace mlock {

/// Momentum buffers, one per parameter tensor.
template <typename T>
struct SgdState {
    Parameters<T> velocity;
};

/// v <- momentum * v + grad; param <- param - lr * v.
/// Throws TrainingDiverged on a non-finite gradient, leaving params untouched.
template <typename T>
void sgd_step(Parameters<T>& params, const Parameters<T>& grads, double lr, double momentum, SgdState<T>& state);

/// Checkpoint overload of sgd_step.
void sgd_step(Checkpoint& ckpt, const Parameters<float>& grads, double lr, double momentum, SgdState<float>& state);

/// In-memory training set: normalized inputs [N, input...] plus labels.
struct TrainingData {
    Tensor<float> inputs;
    std::vector<std::uint16_t> labels;
};

struct TrainConfig {
    std::uint32_t epochs = 30;
    std::size_t batch_size = 64;
    double lr = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 0;
};

struct EpochStats {
    std::uint32_t epoch;  // 1-based
    double mean_loss;
    double train_accuracy;  // percent, measured on the fly over the epoch's batches
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Stable digest of a training configuration (plus any extra context bytes).
Digest train_config_digest(const NetworkSpec& spec, const TrainConfig& config, std::span<const std::uint8_t> extra = {});

/// Mini-batch SGD with per-epoch seeded shuffling. Single-threaded control
/// flow; identical (spec, data, config) gives a bit-identical checkpoint.
///
/// `config_digest` is stored in the checkpoint metadata.
/// Throws TrainingDiverged when the loss becomes non-finite.
Checkpoint train(const NetworkSpec& spec, const TrainingData& data, const TrainConfig& config,
                 const Digest& config_digest = {}, const EpochCallback& on_epoch = {});

/// Central finite differences against backpropagation in 64-bit arithmetic
/// on a randomly initialized copy of `spec`. Returns the maximum over
/// `sample_count` randomly chosen parameters of
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
/// Parameters whose +-epsilon perturbation changes a ReLU or max-pool branch
/// are not differentiable there and are redrawn.
double gradient_check(const NetworkSpec& spec, std::size_t sample_count, std::uint64_t seed = 0,
                      std::size_t batch = 3, double epsilon = 1e-4);

/// Small networks for gradient checking.
NetworkSpec mlp_mini();
NetworkSpec cnn_mini();

}  // namespace mlock
