#include "mlock/train.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "byte_io.hpp"
#include "mlock/error.hpp"
#include "mlock/rng.hpp"

namespace mlock {

namespace {

// Stream ids for Rng::derive.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

template <typename T>
bool all_finite(const Parameters<T>& p) {
    for (const auto& t : p.tensors) {
        for (T v : t.values()) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

void check_config(const TrainConfig& c) {
    if (c.epochs == 0) throw InvalidArgument("epochs must be positive");
    if (c.batch_size == 0) throw InvalidArgument("batch_size must be positive");
    if (!(c.lr > 0.0) || !std::isfinite(c.lr)) throw InvalidArgument("lr must be positive");
    if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
}

}  // namespace

template <typename T>
void sgd_step(Parameters<T>& params, const Parameters<T>& grads, double lr, double momentum, SgdState<T>& state) {
    if (!(lr > 0.0)) throw InvalidArgument("lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
    if (grads.tensors.size() != params.tensors.size()) throw ShapeError("gradient/parameter count mismatch");
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        if (grads.tensors[i].shape() != params.tensors[i].shape()) {
            throw ShapeError("gradient " + std::to_string(i) + " shape mismatch");
        }
    }
    if (!all_finite(grads)) throw TrainingDiverged("non-finite gradient", 0);
    if (state.velocity.tensors.empty()) state.velocity = zero_like(params);

    const T mu = static_cast<T>(momentum);
    const T rate = static_cast<T>(lr);
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        auto p = params.tensors[i].values();
        auto v = state.velocity.tensors[i].values();
        const auto g = grads.tensors[i].values();
        for (std::size_t j = 0; j < p.size(); ++j) {
            v[j] = mu * v[j] + g[j];
            p[j] -= rate * v[j];
        }
    }
}

void sgd_step(Checkpoint& ckpt, const Parameters<float>& grads, double lr, double momentum, SgdState<float>& state) {
    sgd_step(ckpt.params, grads, lr, momentum, state);
}

Digest train_config_digest(const NetworkSpec& spec, const TrainConfig& config, std::span<const std::uint8_t> extra) {
    detail::ByteWriter w;
    w.text("mlock-train-v1");
    w.bytes(serialize_spec(spec));
    w.u32(config.epochs);
    w.u64(config.batch_size);
    w.u64(std::bit_cast<std::uint64_t>(config.lr));
    w.u64(std::bit_cast<std::uint64_t>(config.momentum));
    w.u64(config.seed);
    w.bytes(extra);
    return sha256(w.buffer());
}

Checkpoint train(const NetworkSpec& spec, const TrainingData& data, const TrainConfig& config,
                 const Digest& config_digest, const EpochCallback& on_epoch) {
    validate(spec);
    check_config(config);
    const std::size_t n = data.labels.size();
    if (n == 0) throw InvalidArgument("training set is empty");
    if (data.inputs.dim(0) != n) throw ShapeError("training inputs and labels disagree on sample count");
    Shape expected{n};
    expected.insert(expected.end(), spec.input.begin(), spec.input.end());
    if (data.inputs.shape() != expected) {
        throw ShapeError("training inputs " + shape_string(data.inputs.shape()) + " do not match network input " +
                         shape_string(spec.input));
    }

    Checkpoint ckpt{spec, init_parameters<float>(spec, Rng::derive(config.seed, kInitStream).next()),
                    {config.seed, config.epochs, config_digest}};
    SgdState<float> state;
    Rng shuffle_rng = Rng::derive(config.seed, kShuffleStream);
    const std::size_t sample = data.inputs.size() / n;
    std::vector<std::size_t> order(n);
    LossAndGrad<float> lg;

    for (std::uint32_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle_rng.shuffle(std::span(order));
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t b0 = 0; b0 < n; b0 += config.batch_size) {
            const std::size_t bn = std::min(config.batch_size, n - b0);
            Shape shape = expected;
            shape[0] = bn;
            Tensor<float> batch(shape);
            std::vector<std::uint16_t> labels(bn);
            for (std::size_t i = 0; i < bn; ++i) {
                const std::size_t src = order[b0 + i];
                std::memcpy(batch.data() + i * sample, data.inputs.data() + src * sample, sample * sizeof(float));
                labels[i] = data.labels[src];
            }
            loss_and_grad(spec, ckpt.params, batch, labels, lg);
            if (!std::isfinite(lg.loss)) {
                throw TrainingDiverged("non-finite loss in epoch " + std::to_string(epoch), static_cast<int>(epoch) - 1);
            }
            try {
                sgd_step(ckpt.params, lg.grads, config.lr, config.momentum, state);
            } catch (const TrainingDiverged&) {
                throw TrainingDiverged("non-finite gradient in epoch " + std::to_string(epoch),
                                       static_cast<int>(epoch) - 1);
            }
            loss_sum += lg.loss * static_cast<double>(bn);
            const auto pred = argmax_rows(lg.logits);
            for (std::size_t i = 0; i < bn; ++i) correct += pred[i] == labels[i];
        }
        if (on_epoch) {
            on_epoch({epoch, loss_sum / static_cast<double>(n),
                      100.0 * static_cast<double>(correct) / static_cast<double>(n)});
        }
    }
    return ckpt;
}

double gradient_check(const NetworkSpec& spec, std::size_t sample_count, std::uint64_t seed, std::size_t batch,
                      double epsilon) {
    validate(spec);
    Rng rng(seed);
    auto params = init_parameters<double>(spec, rng.next());
    // Nonzero biases so that bias paths are exercised away from symmetric points.
    for (std::size_t i = 1; i < params.tensors.size(); i += 2) {
        for (auto& v : params.tensors[i].values()) v = 0.2 * rng.uniform01() - 0.1;
    }
    Shape shape{batch};
    shape.insert(shape.end(), spec.input.begin(), spec.input.end());
    Tensor<double> inputs(shape);
    for (auto& v : inputs.values()) v = rng.uniform01();
    std::vector<std::uint16_t> labels(batch);
    for (auto& y : labels) y = static_cast<std::uint16_t>(rng.uniform_index(spec.class_count));

    const auto analytic = loss_and_grad(spec, params, inputs, labels);
    const std::size_t total = params.scalar_count();

    // Central differences are only an oracle where the loss is smooth on
    // [v - eps, v + eps]. Parameters whose perturbation flips a ReLU or
    // pooling branch are skipped and, when sampling, replaced by another draw.
    const auto pattern = activation_pattern(spec, params, inputs);
    double worst = 0.0;
    auto check_one = [&](std::size_t flat) {
        std::size_t ti = 0;
        while (flat >= params.tensors[ti].size()) flat -= params.tensors[ti++].size();
        double& value = params.tensors[ti][flat];
        const double saved = value;
        value = saved + epsilon;
        const double up = cross_entropy(forward(spec, params, inputs), labels);
        const bool smooth_up = activation_pattern(spec, params, inputs) == pattern;
        value = saved - epsilon;
        const double down = cross_entropy(forward(spec, params, inputs), labels);
        const bool smooth_down = activation_pattern(spec, params, inputs) == pattern;
        value = saved;
        if (!smooth_up || !smooth_down) return false;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double exact = analytic.grads.tensors[ti][flat];
        const double err = std::abs(exact - numeric) / std::max({std::abs(exact), std::abs(numeric), 1e-12});
        worst = std::max(worst, err);
        return true;
    };

    if (sample_count >= total) {
        for (std::size_t i = 0; i < total; ++i) check_one(i);
    } else {
        std::size_t checked = 0;
        for (std::size_t attempt = 0; checked < sample_count && attempt < 20 * sample_count; ++attempt) {
            checked += check_one(rng.uniform_index(total));
        }
    }
    return worst;
}

NetworkSpec mlp_mini() { return mlp_preset({1, 8, 8}, 10, 16, 4); }

NetworkSpec cnn_mini() { return cnn_preset({3, 8, 8}, 5, 4, 16); }

template void sgd_step<float>(Parameters<float>&, const Parameters<float>&, double, double, SgdState<float>&);
template void sgd_step<double>(Parameters<double>&, const Parameters<double>&, double, double, SgdState<double>&);

}  // namespace mlock
