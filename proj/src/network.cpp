#include "mlock/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mlock/error.hpp"
#include "mlock/kernels.hpp"
#include "mlock/rng.hpp"

namespace mlock {

namespace {

template <class... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

using kernels::MatrixView;
using kernels::Op;

// Upper bound on im2col buffer elements (about 2 MB of floats, so chunks stay in L2).
constexpr std::size_t kMaxColumnElements = std::size_t{1} << 19;

bool has_parameters(const Layer& layer) {
    return std::holds_alternative<layer::Dense>(layer) || std::holds_alternative<layer::Conv2D>(layer);
}

kernels::ConvGeometry conv_geometry(const layer::Conv2D& c, const Shape& in) {
    return {in[0], in[1], in[2], c.kernel, c.stride, c.padding};
}

kernels::PoolGeometry pool_geometry(const layer::MaxPool2D& p, const Shape& in) {
    return {in[0], in[1], in[2], p.kernel, p.stride};
}

std::string describe(std::size_t index, const Layer& layer) {
    return "layer " + std::to_string(index) + " (" + layer_name(layer) + ")";
}

Shape output_shape(std::size_t index, const Layer& layer, const Shape& in) {
    return std::visit(
        Overloaded{
            [&](const layer::Dense& d) -> Shape {
                if (d.in == 0 || d.out == 0) throw ShapeError(describe(index, layer) + ": zero-sized dimension");
                if (in.size() != 1 || in[0] != d.in) {
                    throw ShapeError(describe(index, layer) + ": expects input [" + std::to_string(d.in) +
                                     "], got " + shape_string(in));
                }
                return {d.out};
            },
            [&](const layer::ReLU&) -> Shape { return in; },
            [&](const layer::Flatten&) -> Shape { return {shape_size(in)}; },
            [&](const layer::Conv2D& c) -> Shape {
                if (c.in_channels == 0 || c.out_channels == 0 || c.kernel == 0 || c.stride == 0) {
                    throw ShapeError(describe(index, layer) + ": zero-sized dimension");
                }
                if (in.size() != 3 || in[0] != c.in_channels) {
                    throw ShapeError(describe(index, layer) + ": expects input [" + std::to_string(c.in_channels) +
                                     "xHxW], got " + shape_string(in));
                }
                if (in[1] + 2 * c.padding < c.kernel || in[2] + 2 * c.padding < c.kernel) {
                    throw ShapeError(describe(index, layer) + ": kernel larger than padded input " +
                                     shape_string(in));
                }
                const auto g = conv_geometry(c, in);
                return {c.out_channels, g.out_height(), g.out_width()};
            },
            [&](const layer::MaxPool2D& p) -> Shape {
                if (p.kernel == 0 || p.stride == 0) throw ShapeError(describe(index, layer) + ": zero-sized window");
                if (in.size() != 3 || in[1] < p.kernel || in[2] < p.kernel) {
                    throw ShapeError(describe(index, layer) + ": window does not fit input " + shape_string(in));
                }
                const auto g = pool_geometry(p, in);
                return {in[0], g.out_height(), g.out_width()};
            },
        },
        layer);
}

Shape with_batch(std::size_t n, const Shape& sample) {
    Shape s{n};
    s.insert(s.end(), sample.begin(), sample.end());
    return s;
}

template <typename T>
MatrixView<const T> as_matrix(const Tensor<T>& t, std::size_t rows) {
    return {t.data(), rows, t.size() / rows};
}
template <typename T>
MatrixView<T> as_matrix(Tensor<T>& t, std::size_t rows) {
    return {t.data(), rows, t.size() / rows};
}

// Activations recorded during the forward pass for backpropagation.
template <typename T>
struct Trace {
    std::vector<Tensor<T>> activations;  // [0] is the input, [i + 1] the output of layer i
    std::vector<std::vector<std::uint32_t>> argmax;  // per layer; used by MaxPool2D only
};

template <typename T>
std::size_t conv_chunk(std::size_t batch, const kernels::ConvGeometry& g) {
    const std::size_t per_sample = g.patch_size() * g.out_height() * g.out_width();
    return std::clamp<std::size_t>(kMaxColumnElements / std::max<std::size_t>(per_sample, 1), 1, batch);
}

template <typename T>
void conv_forward(const layer::Conv2D& c, const Shape& in_shape, const Tensor<T>& weight, const Tensor<T>& bias,
                  const Tensor<T>& in, Tensor<T>& out) {
    const std::size_t batch = in.dim(0);
    const auto g = conv_geometry(c, in_shape);
    const std::size_t out_plane = g.out_height() * g.out_width();
    const std::size_t in_sample = shape_size(in_shape);
    const std::size_t out_sample = c.out_channels * out_plane;
    const std::size_t chunk = conv_chunk<T>(batch, g);
    std::vector<T> cols(g.patch_size() * chunk * out_plane);
    std::vector<T> result(c.out_channels * chunk * out_plane);
    const MatrixView<const T> w(weight.data(), c.out_channels, g.patch_size());

    for (std::size_t n0 = 0; n0 < batch; n0 += chunk) {
        const std::size_t nb = std::min(chunk, batch - n0);
        const std::size_t width = nb * out_plane;
        kernels::im2col<T>(std::span(in.data() + n0 * in_sample, nb * in_sample), nb, g,
                           std::span(cols.data(), g.patch_size() * width));
        kernels::gemm<T>(w, Op::none, MatrixView<const T>(cols.data(), g.patch_size(), width), Op::none,
                         MatrixView<T>(result.data(), c.out_channels, width));
        for (std::size_t n = 0; n < nb; ++n) {
            for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
                const T* src = result.data() + oc * width + n * out_plane;
                T* dst = out.data() + (n0 + n) * out_sample + oc * out_plane;
                const T b = bias[oc];
                for (std::size_t s = 0; s < out_plane; ++s) dst[s] = src[s] + b;
            }
        }
    }
}

template <typename T>
void conv_backward(const layer::Conv2D& c, const Shape& in_shape, const Tensor<T>& weight, const Tensor<T>& in,
                   const Tensor<T>& grad_out, Tensor<T>* grad_in, Tensor<T>& grad_weight, Tensor<T>& grad_bias) {
    const std::size_t batch = in.dim(0);
    const auto g = conv_geometry(c, in_shape);
    const std::size_t out_plane = g.out_height() * g.out_width();
    const std::size_t in_sample = shape_size(in_shape);
    const std::size_t out_sample = c.out_channels * out_plane;
    const std::size_t patch = g.patch_size();
    const std::size_t chunk = conv_chunk<T>(batch, g);
    std::vector<T> cols(patch * chunk * out_plane);
    std::vector<T> grad_cols(grad_in ? patch * chunk * out_plane : 0);
    std::vector<T> grad_matrix(c.out_channels * chunk * out_plane);
    const MatrixView<const T> w(weight.data(), c.out_channels, patch);
    const MatrixView<T> gw(grad_weight.data(), c.out_channels, patch);
    grad_bias.fill(T{});

    for (std::size_t n0 = 0; n0 < batch; n0 += chunk) {
        const std::size_t nb = std::min(chunk, batch - n0);
        const std::size_t width = nb * out_plane;
        // [N, OC, S] -> [OC, N*S]
        for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
            for (std::size_t n = 0; n < nb; ++n) {
                const T* src = grad_out.data() + (n0 + n) * out_sample + oc * out_plane;
                std::copy_n(src, out_plane, grad_matrix.data() + oc * width + n * out_plane);
            }
        }
        const MatrixView<const T> gy(grad_matrix.data(), c.out_channels, width);
        for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
            T sum{};
            for (std::size_t j = 0; j < width; ++j) sum += gy(oc, j);
            grad_bias[oc] += sum;
        }
        kernels::im2col<T>(std::span(in.data() + n0 * in_sample, nb * in_sample), nb, g,
                           std::span(cols.data(), patch * width));
        kernels::gemm<T>(gy, Op::none, MatrixView<const T>(cols.data(), patch, width), Op::transpose, gw,
                         /*accumulate=*/n0 != 0);
        if (grad_in == nullptr) continue;
        kernels::gemm<T>(w, Op::transpose, gy, Op::none, MatrixView<T>(grad_cols.data(), patch, width));
        kernels::col2im<T>(std::span<const T>(grad_cols.data(), patch * width), nb, g,
                           std::span(grad_in->data() + n0 * in_sample, nb * in_sample));
    }
}

template <typename T>
Trace<T> run_forward(const NetworkSpec& spec, const std::vector<Shape>& shapes, const Parameters<T>& params,
                     const Tensor<T>& batch) {
    const std::size_t n = batch.dim(0);
    Trace<T> trace;
    trace.activations.reserve(spec.layers.size() + 1);
    trace.activations.push_back(batch);
    trace.argmax.resize(spec.layers.size());
    std::size_t p = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const Tensor<T>& in = trace.activations.back();
        Tensor<T> out(with_batch(n, shapes[i + 1]));
        std::visit(Overloaded{
                       [&](const layer::Dense& d) {
                           const auto& w = params.tensors[p];
                           const auto& b = params.tensors[p + 1];
                           p += 2;
                           kernels::gemm<T>(as_matrix(in, n), Op::none, MatrixView<const T>(w.data(), d.out, d.in),
                                            Op::transpose, as_matrix(out, n));
                           kernels::add_row_bias<T>(as_matrix(out, n), b.values());
                       },
                       [&](const layer::ReLU&) { kernels::relu_forward<T>(in.values(), out.values()); },
                       [&](const layer::Flatten&) { std::copy_n(in.data(), in.size(), out.data()); },
                       [&](const layer::Conv2D& c) {
                           conv_forward(c, shapes[i], params.tensors[p], params.tensors[p + 1], in, out);
                           p += 2;
                       },
                       [&](const layer::MaxPool2D& mp) {
                           auto& arg = trace.argmax[i];
                           arg.resize(out.size());
                           kernels::maxpool_forward<T>(in.values(), n, pool_geometry(mp, shapes[i]), out.values(),
                                                       arg);
                       },
                   },
                   spec.layers[i]);
        trace.activations.push_back(std::move(out));
    }
    return trace;
}

template <typename T>
void check_batch(const NetworkSpec& spec, const Tensor<T>& batch) {
    if (batch.rank() != spec.input.size() + 1 ||
        !std::equal(spec.input.begin(), spec.input.end(), batch.shape().begin() + 1)) {
        throw ShapeError("input batch " + shape_string(batch.shape()) + " does not match per-sample input " +
                         shape_string(spec.input));
    }
}

}  // namespace

std::string layer_name(const Layer& layer) {
    return std::visit(Overloaded{
                          [](const layer::Dense& d) {
                              return "Dense(" + std::to_string(d.in) + "," + std::to_string(d.out) + ")";
                          },
                          [](const layer::ReLU&) { return std::string("ReLU"); },
                          [](const layer::Flatten&) { return std::string("Flatten"); },
                          [](const layer::Conv2D& c) {
                              return "Conv2D(" + std::to_string(c.in_channels) + "," +
                                     std::to_string(c.out_channels) + ",k" + std::to_string(c.kernel) + ",s" +
                                     std::to_string(c.stride) + ",p" + std::to_string(c.padding) + ")";
                          },
                          [](const layer::MaxPool2D& m) {
                              return "MaxPool2D(k" + std::to_string(m.kernel) + ",s" + std::to_string(m.stride) +
                                     ")";
                          },
                      },
                      layer);
}

std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
    if (spec.input.empty() || shape_size(spec.input) == 0) {
        throw ShapeError("network input shape " + shape_string(spec.input) + " is empty");
    }
    std::vector<Shape> shapes{spec.input};
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        shapes.push_back(output_shape(i, spec.layers[i], shapes.back()));
    }
    return shapes;
}

void validate(const NetworkSpec& spec) {
    if (spec.class_count == 0) throw ShapeError("class_count must be positive");
    if (spec.layers.empty()) throw ShapeError("network has no layers");
    const auto shapes = infer_shapes(spec);
    const Shape& last = shapes.back();
    if (last.size() != 1 || last[0] != spec.class_count) {
        throw ShapeError(describe(spec.layers.size() - 1, spec.layers.back()) + ": output " + shape_string(last) +
                         " does not equal class_count " + std::to_string(spec.class_count));
    }
}

NetworkSpec mlp_preset(const Shape& input, std::size_t class_count, std::size_t hidden_width,
                       std::size_t hidden_layers) {
    NetworkSpec spec{input, {}, class_count};
    spec.layers.push_back(layer::Flatten{});
    std::size_t width = shape_size(input);
    for (std::size_t i = 0; i < hidden_layers; ++i) {
        spec.layers.push_back(layer::Dense{width, hidden_width});
        spec.layers.push_back(layer::ReLU{});
        width = hidden_width;
    }
    spec.layers.push_back(layer::Dense{width, class_count});
    validate(spec);
    return spec;
}

NetworkSpec cnn_preset(const Shape& input, std::size_t class_count, std::size_t width, std::size_t dense_units) {
    if (input.size() != 3) throw ShapeError("cnn preset needs a [C, H, W] input, got " + shape_string(input));
    NetworkSpec spec{input, {}, class_count};
    spec.layers = {
        layer::Conv2D{input[0], width, 3, 1, 1},
        layer::ReLU{},
        layer::Conv2D{width, width, 3, 1, 1},
        layer::ReLU{},
        layer::MaxPool2D{2, 2},
        layer::Conv2D{width, 2 * width, 3, 1, 1},
        layer::ReLU{},
        layer::MaxPool2D{2, 2},
        layer::Flatten{},
    };
    const auto shapes = infer_shapes(spec);
    spec.layers.push_back(layer::Dense{shape_size(shapes.back()), dense_units});
    spec.layers.push_back(layer::ReLU{});
    spec.layers.push_back(layer::Dense{dense_units, class_count});
    validate(spec);
    return spec;
}

std::vector<Shape> parameter_shapes(const NetworkSpec& spec) {
    std::vector<Shape> out;
    for (const auto& l : spec.layers) {
        if (const auto* d = std::get_if<layer::Dense>(&l)) {
            out.push_back({d->out, d->in});
            out.push_back({d->out});
        } else if (const auto* c = std::get_if<layer::Conv2D>(&l)) {
            out.push_back({c->out_channels, c->in_channels, c->kernel, c->kernel});
            out.push_back({c->out_channels});
        }
    }
    return out;
}

template <typename T>
void check_parameters(const NetworkSpec& spec, const Parameters<T>& params) {
    const auto shapes = parameter_shapes(spec);
    if (shapes.size() != params.tensors.size()) {
        throw ShapeError("expected " + std::to_string(shapes.size()) + " parameter tensors, got " +
                         std::to_string(params.tensors.size()));
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (params.tensors[i].shape() != shapes[i]) {
            throw ShapeError("parameter tensor " + std::to_string(i) + " has shape " +
                             shape_string(params.tensors[i].shape()) + ", expected " + shape_string(shapes[i]));
        }
    }
}

template <typename T>
Parameters<T> init_parameters(const NetworkSpec& spec, std::uint64_t seed) {
    validate(spec);
    Rng rng(seed);
    Parameters<T> params;
    for (const auto& l : spec.layers) {
        if (!has_parameters(l)) continue;
        std::size_t fan_in = 0, fan_out = 0;
        Shape wshape;
        std::size_t out = 0;
        if (const auto* d = std::get_if<layer::Dense>(&l)) {
            fan_in = d->in;
            fan_out = d->out;
            wshape = {d->out, d->in};
            out = d->out;
        } else {
            const auto& c = std::get<layer::Conv2D>(l);
            fan_in = c.in_channels * c.kernel * c.kernel;
            fan_out = c.out_channels * c.kernel * c.kernel;
            wshape = {c.out_channels, c.in_channels, c.kernel, c.kernel};
            out = c.out_channels;
        }
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Tensor<T> w(wshape);
        for (auto& v : w.values()) v = static_cast<T>((2.0 * rng.uniform01() - 1.0) * bound);
        params.tensors.push_back(std::move(w));
        params.tensors.push_back(Tensor<T>(Shape{out}));
    }
    return params;
}

template <typename T>
Parameters<T> zero_like(const Parameters<T>& params) {
    Parameters<T> out;
    for (const auto& t : params.tensors) out.tensors.emplace_back(t.shape());
    return out;
}

template <typename T>
Tensor<T> forward(const NetworkSpec& spec, const Parameters<T>& params, const Tensor<T>& batch) {
    validate(spec);
    check_parameters(spec, params);
    check_batch(spec, batch);
    const auto shapes = infer_shapes(spec);
    auto trace = run_forward(spec, shapes, params, batch);
    return std::move(trace.activations.back());
}

template <typename T>
std::vector<std::uint32_t> activation_pattern(const NetworkSpec& spec, const Parameters<T>& params,
                                              const Tensor<T>& batch) {
    validate(spec);
    check_parameters(spec, params);
    check_batch(spec, batch);
    const auto trace = run_forward(spec, infer_shapes(spec), params, batch);
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (std::holds_alternative<layer::ReLU>(spec.layers[i])) {
            for (const T v : trace.activations[i].values()) out.push_back(v > T(0));
        } else if (std::holds_alternative<layer::MaxPool2D>(spec.layers[i])) {
            out.insert(out.end(), trace.argmax[i].begin(), trace.argmax[i].end());
        }
    }
    return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    const std::size_t n = logits.dim(0);
    const std::size_t k = logits.size() / n;
    Tensor<T> out(logits.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = logits.data() + i * k;
        T* dst = out.data() + i * k;
        const T mx = *std::max_element(row, row + k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double e = std::exp(static_cast<double>(row[j] - mx));
            dst[j] = static_cast<T>(e);
            sum += e;
        }
        for (std::size_t j = 0; j < k; ++j) dst[j] = static_cast<T>(static_cast<double>(dst[j]) / sum);
    }
    return out;
}

template <typename T>
double cross_entropy(const Tensor<T>& logits, std::span<const std::uint16_t> labels) {
    const std::size_t n = logits.dim(0);
    const std::size_t k = logits.size() / n;
    if (labels.size() != n) throw ShapeError("label count does not match batch size");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= k) {
            throw InvalidArgument("label " + std::to_string(labels[i]) + " out of range [0, " + std::to_string(k) +
                                  ")");
        }
        const T* row = logits.data() + i * k;
        const double mx = static_cast<double>(*std::max_element(row, row + k));
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
        total += std::log(sum) + mx - static_cast<double>(row[labels[i]]);
    }
    return total / static_cast<double>(n);
}

template <typename T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& logits) {
    const std::size_t n = logits.dim(0);
    const std::size_t k = logits.size() / n;
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = logits.data() + i * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (row[j] > row[best]) best = j;
        }
        out[i] = best;
    }
    return out;
}

template <typename T>
LossAndGrad<T> loss_and_grad(const NetworkSpec& spec, const Parameters<T>& params, const Tensor<T>& batch,
                             std::span<const std::uint16_t> labels) {
    LossAndGrad<T> result;
    loss_and_grad(spec, params, batch, labels, result);
    return result;
}

template <typename T>
void loss_and_grad(const NetworkSpec& spec, const Parameters<T>& params, const Tensor<T>& batch,
                   std::span<const std::uint16_t> labels, LossAndGrad<T>& result) {
    validate(spec);
    check_parameters(spec, params);
    check_batch(spec, batch);
    const std::size_t n = batch.dim(0);
    if (labels.size() != n) throw ShapeError("label count does not match batch size");
    for (auto y : labels) {
        if (y >= spec.class_count) {
            throw InvalidArgument("label " + std::to_string(y) + " out of range [0, " +
                                  std::to_string(spec.class_count) + ")");
        }
    }

    const auto shapes = infer_shapes(spec);
    auto trace = run_forward(spec, shapes, params, batch);
    result.logits = std::move(trace.activations.back());
    const Tensor<T>& logits = result.logits;
    result.loss = cross_entropy(logits, labels);
    // every gradient tensor is fully overwritten below, so old storage can be reused
    bool reusable = result.grads.tensors.size() == params.tensors.size();
    for (std::size_t i = 0; reusable && i < params.tensors.size(); ++i) {
        reusable = result.grads.tensors[i].shape() == params.tensors[i].shape();
    }
    if (!reusable) result.grads = zero_like(params);

    // d(mean CE)/d(logits) = (softmax - onehot) / N
    Tensor<T> grad = softmax(logits);
    const std::size_t k = spec.class_count;
    const T inv_n = T{1} / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
        grad[i * k + labels[i]] -= T{1};
        for (std::size_t j = 0; j < k; ++j) grad[i * k + j] *= inv_n;
    }

    // input gradients below the first parametrized layer are never used
    std::size_t first_param = 0;
    while (first_param < spec.layers.size() && !has_parameters(spec.layers[first_param])) ++first_param;

    std::size_t p = params.tensors.size();
    for (std::size_t li = spec.layers.size(); li-- > first_param;) {
        const Tensor<T>& in = trace.activations[li];
        const bool need_grad_in = li > first_param;
        Tensor<T> grad_in = need_grad_in ? Tensor<T>(in.shape()) : Tensor<T>();
        std::visit(Overloaded{
                       [&](const layer::Dense& d) {
                           p -= 2;
                           const auto& w = params.tensors[p];
                           auto& gw = result.grads.tensors[p];
                           auto& gb = result.grads.tensors[p + 1];
                           const auto gy = as_matrix(std::as_const(grad), n);
                           kernels::gemm<T>(gy, Op::transpose, as_matrix(in, n), Op::none,
                                            MatrixView<T>(gw.data(), d.out, d.in));
                           kernels::column_sums<T>(gy, gb.values());
                           if (!need_grad_in) return;
                           kernels::gemm<T>(gy, Op::none, MatrixView<const T>(w.data(), d.out, d.in), Op::none,
                                            as_matrix(grad_in, n));
                       },
                       [&](const layer::ReLU&) {
                           kernels::relu_backward<T>(in.values(), std::as_const(grad).values(), grad_in.values());
                       },
                       [&](const layer::Flatten&) { std::copy_n(grad.data(), grad.size(), grad_in.data()); },
                       [&](const layer::Conv2D& c) {
                           p -= 2;
                           conv_backward(c, shapes[li], params.tensors[p], in, grad,
                                         need_grad_in ? &grad_in : nullptr, result.grads.tensors[p],
                                         result.grads.tensors[p + 1]);
                       },
                       [&](const layer::MaxPool2D& mp) {
                           kernels::maxpool_backward<T>(std::as_const(grad).values(), trace.argmax[li], n,
                                                        pool_geometry(mp, shapes[li]), grad_in.values());
                       },
                   },
                   spec.layers[li]);
        grad = std::move(grad_in);
        // Activations of this layer are no longer needed.
        trace.activations[li + 1] = Tensor<T>();
    }
}

#define MLOCK_INSTANTIATE_NETWORK(T)                                                                          \
    template void check_parameters<T>(const NetworkSpec&, const Parameters<T>&);                              \
    template Parameters<T> init_parameters<T>(const NetworkSpec&, std::uint64_t);                             \
    template Parameters<T> zero_like<T>(const Parameters<T>&);                                                \
    template Tensor<T> forward<T>(const NetworkSpec&, const Parameters<T>&, const Tensor<T>&);                \
    template LossAndGrad<T> loss_and_grad<T>(const NetworkSpec&, const Parameters<T>&, const Tensor<T>&,      \
                                             std::span<const std::uint16_t>);                                 \
    template void loss_and_grad<T>(const NetworkSpec&, const Parameters<T>&, const Tensor<T>&,                \
                                   std::span<const std::uint16_t>, LossAndGrad<T>&);                          \
    template std::vector<std::uint32_t> activation_pattern<T>(const NetworkSpec&, const Parameters<T>&,       \
                                                              const Tensor<T>&);                              \
    template Tensor<T> softmax<T>(const Tensor<T>&);                                                          \
    template double cross_entropy<T>(const Tensor<T>&, std::span<const std::uint16_t>);                       \
    template std::vector<std::size_t> argmax_rows<T>(const Tensor<T>&);

MLOCK_INSTANTIATE_NETWORK(float)
MLOCK_INSTANTIATE_NETWORK(double)

#undef MLOCK_INSTANTIATE_NETWORK

}  // namespace mlock
