#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mlock/tensor.hpp"

namespace mlock {

namespace layer {

struct Dense {
    std::size_t in = 0, out = 0;
    friend bool operator==(const Dense&, const Dense&) = default;
};
struct ReLU {
    friend bool operator==(const ReLU&, const ReLU&) = default;
};
struct Conv2D {
    std::size_t in_channels = 0, out_channels = 0, kernel = 0, stride = 1, padding = 0;
    friend bool operator==(const Conv2D&, const Conv2D&) = default;
};
struct MaxPool2D {
    std::size_t kernel = 2, stride = 2;
    friend bool operator==(const MaxPool2D&, const MaxPool2D&) = default;
};
struct Flatten {
    friend bool operator==(const Flatten&, const Flatten&) = default;
};

}  // namespace layer

using Layer = std::variant<layer::Dense, layer::ReLU, layer::Conv2D, layer::MaxPool2D, layer::Flatten>;

std::string layer_name(const Layer& layer);

/// Layer topology. `input` is the per-sample shape: {features} or {C, H, W}.
struct NetworkSpec {
    Shape input;
    std::vector<Layer> layers;
    std::size_t class_count = 0;

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Per-sample activation shapes: element 0 is the input, element i+1 the
/// output of layer i. Throws ShapeError naming the first incompatible layer.
std::vector<Shape> infer_shapes(const NetworkSpec& spec);

/// Throws ShapeError unless layer shapes chain and the output width equals class_count.
void validate(const NetworkSpec& spec);

/// Flatten, then `hidden_layers` x (Dense(width) + ReLU), then Dense(classes).
NetworkSpec mlp_preset(const Shape& input, std::size_t class_count, std::size_t hidden_width = 900,
                       std::size_t hidden_layers = 4);

/// Conv(C,32)-ReLU-Conv(32,32)-ReLU-Pool-Conv(32,64)-ReLU-Pool-Flatten-Dense(512)-ReLU-Dense(K),
/// all convolutions 3x3 with padding 1. `width` scales the channel and dense sizes.
NetworkSpec cnn_preset(const Shape& input, std::size_t class_count, std::size_t width = 32,
                       std::size_t dense_units = 512);

/// Learnable tensors in layer order: weight then bias for each Dense/Conv2D layer.
/// Dense weight is [out, in]; Conv2D weight is [out_ch, in_ch, k, k].
template <typename T>
struct Parameters {
    std::vector<Tensor<T>> tensors;

    template <typename U>
    Parameters<U> cast() const {
        Parameters<U> out;
        for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
        return out;
    }
    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += t.size();
        return n;
    }
    friend bool operator==(const Parameters&, const Parameters&) = default;
};

/// Expected parameter tensor shapes for `spec`, in storage order.
std::vector<Shape> parameter_shapes(const NetworkSpec& spec);

/// Throws ShapeError if `params` does not match parameter_shapes(spec).
template <typename T>
void check_parameters(const NetworkSpec& spec, const Parameters<T>& params);

/// Weights uniform in (-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases zero.
template <typename T>
Parameters<T> init_parameters(const NetworkSpec& spec, std::uint64_t seed);

template <typename T>
Parameters<T> zero_like(const Parameters<T>& params);

/// Logits [N, class_count] for a batch of shape [N, input...].
template <typename T>
Tensor<T> forward(const NetworkSpec& spec, const Parameters<T>& params, const Tensor<T>& batch);

template <typename T>
struct LossAndGrad {
    double loss = 0.0;
    Parameters<T> grads;
    Tensor<T> logits;
};

/// Mean softmax cross-entropy over the batch and its exact gradient.
template <typename T>
LossAndGrad<T> loss_and_grad(const NetworkSpec& spec, const Parameters<T>& params, const Tensor<T>& batch,
                             std::span<const std::uint16_t> labels);

/// Same, writing into `out` and reusing its gradient storage when the shapes match.
template <typename T>
void loss_and_grad(const NetworkSpec& spec, const Parameters<T>& params, const Tensor<T>& batch,
                   std::span<const std::uint16_t> labels, LossAndGrad<T>& out);

/// Branch taken by every ReLU (input > 0) and MaxPool2D (argmax) element on
/// this batch. Within a region of equal patterns the network is smooth.
template <typename T>
std::vector<std::uint32_t> activation_pattern(const NetworkSpec& spec, const Parameters<T>& params,
                                              const Tensor<T>& batch);

/// Row-wise softmax with the row maximum subtracted first.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

/// Mean cross-entropy of logits against labels, computed with a stable log-sum-exp.
template <typename T>
double cross_entropy(const Tensor<T>& logits, std::span<const std::uint16_t> labels);

/// Index of the largest logit in each row; ties resolve to the lowest index.
template <typename T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& logits);

}  // namespace mlock
