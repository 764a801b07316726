#include <algorithm>
#include <string>

#include "mlock/error.hpp"
#include "mlock/kernels.hpp"

namespace mlock::kernels::reference {

template <typename T>
void gemm(MatrixView<const T> a, Op op_a, MatrixView<const T> b, Op op_b, MatrixView<T> c, bool accumulate) {
    const std::size_t m = op_a == Op::none ? a.rows : a.cols;
    const std::size_t k = op_a == Op::none ? a.cols : a.rows;
    const std::size_t kb = op_b == Op::none ? b.rows : b.cols;
    const std::size_t n = op_b == Op::none ? b.cols : b.rows;
    if (k != kb || c.rows != m || c.cols != n) throw ShapeError("reference::gemm: incompatible shapes");
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T sum{};
            for (std::size_t p = 0; p < k; ++p) {
                const T av = op_a == Op::none ? a(i, p) : a(p, i);
                const T bv = op_b == Op::none ? b(p, j) : b(j, p);
                sum += av * bv;
            }
            c(i, j) = accumulate ? c(i, j) + sum : sum;
        }
    }
}

template <typename T>
void conv2d_direct(std::span<const T> in, std::size_t batch, const ConvGeometry& g, std::span<const T> weight,
                   std::span<const T> bias, std::size_t out_channels, std::span<T> out) {
    const std::size_t oh = g.out_height(), ow = g.out_width();
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t oc = 0; oc < out_channels; ++oc) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    T sum = bias[oc];
                    for (std::size_t ic = 0; ic < g.channels; ++ic) {
                        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
                            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                                static_cast<std::ptrdiff_t>(g.padding);
                                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                                static_cast<std::ptrdiff_t>(g.padding);
                                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.height) ||
                                    ix >= static_cast<std::ptrdiff_t>(g.width)) {
                                    continue;
                                }
                                const T x = in[((n * g.channels + ic) * g.height + static_cast<std::size_t>(iy)) *
                                                   g.width +
                                               static_cast<std::size_t>(ix)];
                                const T w = weight[((oc * g.channels + ic) * g.kernel + ky) * g.kernel + kx];
                                sum += x * w;
                            }
                        }
                    }
                    out[((n * out_channels + oc) * oh + oy) * ow + ox] = sum;
                }
            }
        }
    }
}

template <typename T>
void maxpool(std::span<const T> in, std::size_t batch, const PoolGeometry& g, std::span<T> out) {
    const std::size_t oh = g.out_height(), ow = g.out_width();
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t c = 0; c < g.channels; ++c) {
            const T* plane = in.data() + (n * g.channels + c) * g.height * g.width;
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    T best = plane[oy * g.stride * g.width + ox * g.stride];
                    for (std::size_t ky = 0; ky < g.kernel; ++ky)
                        for (std::size_t kx = 0; kx < g.kernel; ++kx)
                            best = std::max(best, plane[(oy * g.stride + ky) * g.width + ox * g.stride + kx]);
                    out[((n * g.channels + c) * oh + oy) * ow + ox] = best;
                }
            }
        }
    }
}

template void gemm<float>(MatrixView<const float>, Op, MatrixView<const float>, Op, MatrixView<float>, bool);
template void gemm<double>(MatrixView<const double>, Op, MatrixView<const double>, Op, MatrixView<double>, bool);
template void conv2d_direct<float>(std::span<const float>, std::size_t, const ConvGeometry&, std::span<const float>,
                                   std::span<const float>, std::size_t, std::span<float>);
template void conv2d_direct<double>(std::span<const double>, std::size_t, const ConvGeometry&,
                                    std::span<const double>, std::span<const double>, std::size_t,
                                    std::span<double>);
template void maxpool<float>(std::span<const float>, std::size_t, const PoolGeometry&, std::span<float>);
template void maxpool<double>(std::span<const double>, std::size_t, const PoolGeometry&, std::span<double>);

}  // namespace mlock::kernels::reference
