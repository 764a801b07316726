#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace mlock::kernels {

/// Non-owning view of a row-major matrix with an explicit row stride.
template <typename T>
struct MatrixView {
    T* data;
    std::size_t rows;
    std::size_t cols;
    std::size_t stride;

    MatrixView(T* d, std::size_t r, std::size_t c) : data(d), rows(r), cols(c), stride(c) {}
    MatrixView(T* d, std::size_t r, std::size_t c, std::size_t s) : data(d), rows(r), cols(c), stride(s) {}
    template <typename U>
    MatrixView(const MatrixView<U>& other)  // NOLINT: T* from U* conversion
        : data(other.data), rows(other.rows), cols(other.cols), stride(other.stride) {}

    T& operator()(std::size_t r, std::size_t c) const { return data[r * stride + c]; }
};

enum class Op { none, transpose };

/// C = op(A) * op(B), or C += op(A) * op(B) when `accumulate` is set.
///
/// Parallelized over column panels of C with OpenMP. Each element of C is
/// reduced over k in a fixed order, so the result does not depend on the
/// number of threads.
template <typename T>
void gemm(MatrixView<const T> a, Op op_a, MatrixView<const T> b, Op op_b, MatrixView<T> c,
          bool accumulate = false);

/// dst[i] = max(src[i], 0)
template <typename T>
void relu_forward(std::span<const T> src, std::span<T> dst);

/// grad_in[i] = activation_in[i] > 0 ? grad_out[i] : 0
template <typename T>
void relu_backward(std::span<const T> activation_in, std::span<const T> grad_out, std::span<T> grad_in);

/// Adds `bias[j]` to every row of `m`.
template <typename T>
void add_row_bias(MatrixView<T> m, std::span<const T> bias);

/// bias_grad[j] = sum_i m(i, j), summed in row order.
template <typename T>
void column_sums(MatrixView<const T> m, std::span<T> out);

struct ConvGeometry {
    std::size_t channels, height, width;
    std::size_t kernel, stride, padding;

    std::size_t out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
    std::size_t out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
    std::size_t patch_size() const { return channels * kernel * kernel; }
};

/// Patch-flattens a batch of NCHW images into `cols`, a
/// (C*k*k) x (N*OH*OW) row-major matrix. Padding reads as zero.
template <typename T>
void im2col(std::span<const T> images, std::size_t batch, const ConvGeometry& g, std::span<T> cols);

/// Scatter-adds the columns back into NCHW image gradients (adjoint of im2col).
/// `images` is overwritten.
template <typename T>
void col2im(std::span<const T> cols, std::size_t batch, const ConvGeometry& g, std::span<T> images);

struct PoolGeometry {
    std::size_t channels, height, width;
    std::size_t kernel, stride;

    std::size_t out_height() const { return (height - kernel) / stride + 1; }
    std::size_t out_width() const { return (width - kernel) / stride + 1; }
};

/// Max pooling over NCHW. Records the flat input offset (within one sample)
/// of each selected maximum; ties go to the first element in scan order.
template <typename T>
void maxpool_forward(std::span<const T> in, std::size_t batch, const PoolGeometry& g, std::span<T> out,
                     std::span<std::uint32_t> argmax);

template <typename T>
void maxpool_backward(std::span<const T> grad_out, std::span<const std::uint32_t> argmax, std::size_t batch,
                      const PoolGeometry& g, std::span<T> grad_in);

/// Straightforward serial implementations used as test oracles and as the
/// benchmark baseline. Not used on the training path.
namespace reference {

template <typename T>
void gemm(MatrixView<const T> a, Op op_a, MatrixView<const T> b, Op op_b, MatrixView<T> c,
          bool accumulate = false);

/// Direct (non-im2col) convolution of NCHW input with weights
/// [out_ch, in_ch, k, k] and bias [out_ch]. Output is NCHW.
template <typename T>
void conv2d_direct(std::span<const T> in, std::size_t batch, const ConvGeometry& g, std::span<const T> weight,
                   std::span<const T> bias, std::size_t out_channels, std::span<T> out);

template <typename T>
void maxpool(std::span<const T> in, std::size_t batch, const PoolGeometry& g, std::span<T> out);

}  // namespace reference

}  // namespace mlock::kernels
