#include "mlock/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "mlock/error.hpp"

namespace mlock::kernels {

namespace {

// Register tile of C and depth of one packed block.
constexpr std::size_t kMr = 8;
constexpr std::size_t kNr = 32;
constexpr std::size_t kKc = 512;

// Below this many elements the OpenMP fork costs more than the loop.
constexpr std::size_t kParallelThreshold = 1 << 15;

template <typename T>
T element(MatrixView<const T> m, Op op, std::size_t r, std::size_t c) {
    return op == Op::none ? m(r, c) : m(c, r);
}

// dst[p * kMr + r] = op(A)(i0 + r, p0 + p); rows past `rows` are zero.
template <typename T>
void pack_a(MatrixView<const T> a, Op op, std::size_t i0, std::size_t rows, std::size_t p0, std::size_t kc, T* dst) {
    if (op == Op::none) {
        for (std::size_t r = 0; r < kMr; ++r) {
            if (r < rows) {
                const T* src = a.data + (i0 + r) * a.stride + p0;
                for (std::size_t p = 0; p < kc; ++p) dst[p * kMr + r] = src[p];
            } else {
                for (std::size_t p = 0; p < kc; ++p) dst[p * kMr + r] = T{};
            }
        }
    } else {
        for (std::size_t p = 0; p < kc; ++p) {
            const T* src = a.data + (p0 + p) * a.stride + i0;
            std::size_t r = 0;
            for (; r < rows; ++r) dst[p * kMr + r] = src[r];
            for (; r < kMr; ++r) dst[p * kMr + r] = T{};
        }
    }
}

#if defined(__AVX512F__)
// In-register transpose of a 16x16 float block: after the call r[q][i] is the old r[i][q].
// Each stage swaps the off-diagonal s x s sub-blocks.
inline void transpose16(__m512 r[16]) {
    auto stage = [&](int s) {
        alignas(64) std::int32_t lo[16], hi[16];
        for (int j = 0; j < 16; ++j) {
            lo[j] = (j & s) ? 16 + j - s : j;
            hi[j] = (j & s) ? 16 + j : j + s;
        }
        const __m512i il = _mm512_load_si512(lo), ih = _mm512_load_si512(hi);
        for (int i = 0; i < 16; ++i) {
            if (i & s) continue;
            const __m512 a = r[i], b = r[i + s];
            r[i] = _mm512_permutex2var_ps(a, il, b);
            r[i + s] = _mm512_permutex2var_ps(a, ih, b);
        }
    };
    stage(8);
    stage(4);
    stage(2);
    stage(1);
}

// pack_b for a transposed float B: rows of the stored matrix become packed columns.
void pack_b_transposed(MatrixView<const float> b, std::size_t j0, std::size_t cols, std::size_t p0, std::size_t kc,
                       float* dst) {
    static_assert(kNr == 32);
    for (std::size_t cb = 0; cb < kNr; cb += 16) {
        for (std::size_t p = 0; p < kc; p += 16) {
            const std::size_t len = std::min<std::size_t>(16, kc - p);
            const auto mask = static_cast<__mmask16>((1u << len) - 1);
            __m512 r[16];
            for (std::size_t i = 0; i < 16; ++i) {
                const std::size_t c = cb + i;
                r[i] = c < cols ? _mm512_maskz_loadu_ps(mask, b.data + (j0 + c) * b.stride + p0 + p)
                                : _mm512_setzero_ps();
            }
            transpose16(r);
            for (std::size_t q = 0; q < len; ++q) _mm512_storeu_ps(dst + (p + q) * kNr + cb, r[q]);
        }
    }
}
#endif

// dst[p * kNr + c] = op(B)(p0 + p, j0 + c); columns past `cols` are zero.
template <typename T>
void pack_b(MatrixView<const T> b, Op op, std::size_t j0, std::size_t cols, std::size_t p0, std::size_t kc, T* dst) {
#if defined(__AVX512F__)
    if constexpr (std::is_same_v<T, float>) {
        if (op == Op::transpose) {
            pack_b_transposed(b, j0, cols, p0, kc, dst);
            return;
        }
    }
#endif
    if (op == Op::none) {
        for (std::size_t p = 0; p < kc; ++p) {
            const T* src = b.data + (p0 + p) * b.stride + j0;
            std::size_t c = 0;
            for (; c < cols; ++c) dst[p * kNr + c] = src[c];
            for (; c < kNr; ++c) dst[p * kNr + c] = T{};
        }
    } else {
        for (std::size_t c = 0; c < kNr; ++c) {
            if (c < cols) {
                const T* src = b.data + (j0 + c) * b.stride + p0;
                for (std::size_t p = 0; p < kc; ++p) dst[p * kNr + c] = src[p];
            } else {
                for (std::size_t p = 0; p < kc; ++p) dst[p * kNr + c] = T{};
            }
        }
    }
}

// tile[r * kNr + c] = sum_p ap[p * kMr + r] * bp[p * kNr + c]
template <typename T>
void micro_kernel(std::size_t kc, const T* ap, const T* bp, T* tile) {
    T acc[kMr][kNr] = {};
    for (std::size_t p = 0; p < kc; ++p) {
        const T* brow = bp + p * kNr;
        for (std::size_t r = 0; r < kMr; ++r) {
            const T av = ap[p * kMr + r];
            for (std::size_t c = 0; c < kNr; ++c) acc[r][c] += av * brow[c];
        }
    }
    for (std::size_t r = 0; r < kMr; ++r) std::memcpy(tile + r * kNr, acc[r], sizeof(acc[r]));
}

#if defined(__AVX512F__)
template <>
void micro_kernel<float>(std::size_t kc, const float* ap, const float* bp, float* tile) {
    static_assert(kMr == 8 && kNr == 32);
    __m512 c00 = _mm512_setzero_ps(), c01 = _mm512_setzero_ps();
    __m512 c10 = _mm512_setzero_ps(), c11 = _mm512_setzero_ps();
    __m512 c20 = _mm512_setzero_ps(), c21 = _mm512_setzero_ps();
    __m512 c30 = _mm512_setzero_ps(), c31 = _mm512_setzero_ps();
    __m512 c40 = _mm512_setzero_ps(), c41 = _mm512_setzero_ps();
    __m512 c50 = _mm512_setzero_ps(), c51 = _mm512_setzero_ps();
    __m512 c60 = _mm512_setzero_ps(), c61 = _mm512_setzero_ps();
    __m512 c70 = _mm512_setzero_ps(), c71 = _mm512_setzero_ps();
    for (std::size_t p = 0; p < kc; ++p) {
        const __m512 b0 = _mm512_loadu_ps(bp + p * kNr);
        const __m512 b1 = _mm512_loadu_ps(bp + p * kNr + 16);
        const float* a = ap + p * kMr;
        __m512 av = _mm512_set1_ps(a[0]);
        c00 = _mm512_fmadd_ps(av, b0, c00);
        c01 = _mm512_fmadd_ps(av, b1, c01);
        av = _mm512_set1_ps(a[1]);
        c10 = _mm512_fmadd_ps(av, b0, c10);
        c11 = _mm512_fmadd_ps(av, b1, c11);
        av = _mm512_set1_ps(a[2]);
        c20 = _mm512_fmadd_ps(av, b0, c20);
        c21 = _mm512_fmadd_ps(av, b1, c21);
        av = _mm512_set1_ps(a[3]);
        c30 = _mm512_fmadd_ps(av, b0, c30);
        c31 = _mm512_fmadd_ps(av, b1, c31);
        av = _mm512_set1_ps(a[4]);
        c40 = _mm512_fmadd_ps(av, b0, c40);
        c41 = _mm512_fmadd_ps(av, b1, c41);
        av = _mm512_set1_ps(a[5]);
        c50 = _mm512_fmadd_ps(av, b0, c50);
        c51 = _mm512_fmadd_ps(av, b1, c51);
        av = _mm512_set1_ps(a[6]);
        c60 = _mm512_fmadd_ps(av, b0, c60);
        c61 = _mm512_fmadd_ps(av, b1, c61);
        av = _mm512_set1_ps(a[7]);
        c70 = _mm512_fmadd_ps(av, b0, c70);
        c71 = _mm512_fmadd_ps(av, b1, c71);
    }
    _mm512_storeu_ps(tile + 0 * kNr, c00);
    _mm512_storeu_ps(tile + 0 * kNr + 16, c01);
    _mm512_storeu_ps(tile + 1 * kNr, c10);
    _mm512_storeu_ps(tile + 1 * kNr + 16, c11);
    _mm512_storeu_ps(tile + 2 * kNr, c20);
    _mm512_storeu_ps(tile + 2 * kNr + 16, c21);
    _mm512_storeu_ps(tile + 3 * kNr, c30);
    _mm512_storeu_ps(tile + 3 * kNr + 16, c31);
    _mm512_storeu_ps(tile + 4 * kNr, c40);
    _mm512_storeu_ps(tile + 4 * kNr + 16, c41);
    _mm512_storeu_ps(tile + 5 * kNr, c50);
    _mm512_storeu_ps(tile + 5 * kNr + 16, c51);
    _mm512_storeu_ps(tile + 6 * kNr, c60);
    _mm512_storeu_ps(tile + 6 * kNr + 16, c61);
    _mm512_storeu_ps(tile + 7 * kNr, c70);
    _mm512_storeu_ps(tile + 7 * kNr + 16, c71);
}
#endif

template <typename T>
std::pair<std::size_t, std::size_t> op_shape(MatrixView<const T> m, Op op) {
    return op == Op::none ? std::pair{m.rows, m.cols} : std::pair{m.cols, m.rows};
}

}  // namespace

template <typename T>
void gemm(MatrixView<const T> a, Op op_a, MatrixView<const T> b, Op op_b, MatrixView<T> c, bool accumulate) {
    const auto [m, k] = op_shape(a, op_a);
    const auto [kb, n] = op_shape(b, op_b);
    if (k != kb || c.rows != m || c.cols != n) {
        throw ShapeError("gemm: incompatible shapes " + std::to_string(m) + "x" + std::to_string(k) + " * " +
                         std::to_string(kb) + "x" + std::to_string(n) + " -> " + std::to_string(c.rows) + "x" +
                         std::to_string(c.cols));
    }
    if (!accumulate) {
        for (std::size_t i = 0; i < m; ++i) std::fill_n(c.data + i * c.stride, n, T{});
    }
    if (m == 0 || n == 0 || k == 0) return;

    const std::size_t row_blocks = (m + kMr - 1) / kMr;
    const std::size_t col_panels = (n + kNr - 1) / kNr;
    std::vector<T> a_packed(row_blocks * kMr * std::min(k, kKc));
    const bool parallel = m * n * k >= kParallelThreshold;

    for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
        const std::size_t kc = std::min(kKc, k - p0);

#pragma omp parallel for schedule(static) if (parallel)
        for (std::size_t ib = 0; ib < row_blocks; ++ib) {
            const std::size_t i0 = ib * kMr;
            pack_a(a, op_a, i0, std::min(kMr, m - i0), p0, kc, a_packed.data() + ib * kMr * kc);
        }

#pragma omp parallel if (parallel)
        {
            std::vector<T> b_packed(kc * kNr);
            alignas(64) T tile[kMr * kNr];
#pragma omp for schedule(static)
            for (std::size_t jp = 0; jp < col_panels; ++jp) {
                const std::size_t j0 = jp * kNr;
                const std::size_t cols = std::min(kNr, n - j0);
                pack_b(b, op_b, j0, cols, p0, kc, b_packed.data());
                for (std::size_t ib = 0; ib < row_blocks; ++ib) {
                    const std::size_t i0 = ib * kMr;
                    const std::size_t rows = std::min(kMr, m - i0);
                    micro_kernel(kc, a_packed.data() + ib * kMr * kc, b_packed.data(), tile);
                    for (std::size_t r = 0; r < rows; ++r) {
                        T* crow = c.data + (i0 + r) * c.stride + j0;
                        const T* trow = tile + r * kNr;
                        for (std::size_t cc = 0; cc < cols; ++cc) crow[cc] += trow[cc];
                    }
                }
            }
        }
    }
}

template <typename T>
void relu_forward(std::span<const T> src, std::span<T> dst) {
    const std::size_t n = src.size();
#pragma omp parallel for schedule(static) if (n >= kParallelThreshold)
    for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] > T{} ? src[i] : T{};
}

template <typename T>
void relu_backward(std::span<const T> activation_in, std::span<const T> grad_out, std::span<T> grad_in) {
    const std::size_t n = activation_in.size();
#pragma omp parallel for schedule(static) if (n >= kParallelThreshold)
    for (std::size_t i = 0; i < n; ++i) grad_in[i] = activation_in[i] > T{} ? grad_out[i] : T{};
}

template <typename T>
void add_row_bias(MatrixView<T> m, std::span<const T> bias) {
#pragma omp parallel for schedule(static) if (m.rows * m.cols >= kParallelThreshold)
    for (std::size_t i = 0; i < m.rows; ++i) {
        T* row = m.data + i * m.stride;
        for (std::size_t j = 0; j < m.cols; ++j) row[j] += bias[j];
    }
}

template <typename T>
void column_sums(MatrixView<const T> m, std::span<T> out) {
    constexpr std::size_t kChunk = 256;
    const std::size_t chunks = (m.cols + kChunk - 1) / kChunk;
#pragma omp parallel for schedule(static) if (m.rows * m.cols >= kParallelThreshold)
    for (std::size_t ch = 0; ch < chunks; ++ch) {
        const std::size_t j0 = ch * kChunk;
        const std::size_t j1 = std::min(m.cols, j0 + kChunk);
        for (std::size_t j = j0; j < j1; ++j) out[j] = T{};
        for (std::size_t i = 0; i < m.rows; ++i) {
            const T* row = m.data + i * m.stride;
            for (std::size_t j = j0; j < j1; ++j) out[j] += row[j];
        }
    }
}

template <typename T>
void im2col(std::span<const T> images, std::size_t batch, const ConvGeometry& g, std::span<T> cols) {
    const std::size_t oh = g.out_height(), ow = g.out_width();
    const std::size_t plane = g.height * g.width;
    const std::size_t out_plane = oh * ow;
    const std::size_t width = batch * out_plane;
    const std::size_t rows = g.patch_size();
    const auto pad = static_cast<std::ptrdiff_t>(g.padding);
#pragma omp parallel for schedule(static) if (rows * width >= kParallelThreshold)
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t ch = r / (g.kernel * g.kernel);
        const std::size_t ky = (r / g.kernel) % g.kernel;
        const std::size_t kx = r % g.kernel;
        T* dst = cols.data() + r * width;
        for (std::size_t n = 0; n < batch; ++n) {
            const T* src = images.data() + (n * g.channels + ch) * plane;
            for (std::size_t oy = 0; oy < oh; ++oy) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
                T* out = dst + n * out_plane + oy * ow;
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
                    std::fill_n(out, ow, T{});
                    continue;
                }
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
                    out[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                                  ? T{}
                                  : src[static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)];
                }
            }
        }
    }
}

template <typename T>
void col2im(std::span<const T> cols, std::size_t batch, const ConvGeometry& g, std::span<T> images) {
    const std::size_t oh = g.out_height(), ow = g.out_width();
    const std::size_t plane = g.height * g.width;
    const std::size_t out_plane = oh * ow;
    const std::size_t width = batch * out_plane;
    const auto pad = static_cast<std::ptrdiff_t>(g.padding);
    const std::size_t planes = batch * g.channels;
#pragma omp parallel for schedule(static) if (planes * plane * g.kernel * g.kernel >= kParallelThreshold)
    for (std::size_t pi = 0; pi < planes; ++pi) {
        const std::size_t n = pi / g.channels;
        const std::size_t ch = pi % g.channels;
        T* dst = images.data() + pi * plane;
        std::fill_n(dst, plane, T{});
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const std::size_t r = (ch * g.kernel + ky) * g.kernel + kx;
                const T* src = cols.data() + r * width + n * out_plane;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
                        dst[static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)] +=
                            src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

template <typename T>
void maxpool_forward(std::span<const T> in, std::size_t batch, const PoolGeometry& g, std::span<T> out,
                     std::span<std::uint32_t> argmax) {
    const std::size_t oh = g.out_height(), ow = g.out_width();
    const std::size_t plane = g.height * g.width;
    const std::size_t planes = batch * g.channels;
#pragma omp parallel for schedule(static) if (planes * plane >= kParallelThreshold)
    for (std::size_t pi = 0; pi < planes; ++pi) {
        const std::size_t ch = pi % g.channels;
        const T* src = in.data() + pi * plane;
        T* dst = out.data() + pi * oh * ow;
        std::uint32_t* arg = argmax.data() + pi * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = (oy * g.stride) * g.width + ox * g.stride;
                for (std::size_t ky = 0; ky < g.kernel; ++ky) {
                    for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                        const std::size_t idx = (oy * g.stride + ky) * g.width + ox * g.stride + kx;
                        if (src[idx] > src[best]) best = idx;
                    }
                }
                dst[oy * ow + ox] = src[best];
                arg[oy * ow + ox] = static_cast<std::uint32_t>(ch * plane + best);
            }
        }
    }
}

template <typename T>
void maxpool_backward(std::span<const T> grad_out, std::span<const std::uint32_t> argmax, std::size_t batch,
                      const PoolGeometry& g, std::span<T> grad_in) {
    const std::size_t out_sample = g.channels * g.out_height() * g.out_width();
    const std::size_t in_sample = g.channels * g.height * g.width;
#pragma omp parallel for schedule(static) if (batch * in_sample >= kParallelThreshold)
    for (std::size_t n = 0; n < batch; ++n) {
        T* dst = grad_in.data() + n * in_sample;
        std::fill_n(dst, in_sample, T{});
        const T* go = grad_out.data() + n * out_sample;
        const std::uint32_t* arg = argmax.data() + n * out_sample;
        for (std::size_t i = 0; i < out_sample; ++i) dst[arg[i]] += go[i];
    }
}

#define MLOCK_INSTANTIATE_KERNELS(T)                                                                        \
    template void gemm<T>(MatrixView<const T>, Op, MatrixView<const T>, Op, MatrixView<T>, bool);           \
    template void relu_forward<T>(std::span<const T>, std::span<T>);                                        \
    template void relu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);                   \
    template void add_row_bias<T>(MatrixView<T>, std::span<const T>);                                       \
    template void column_sums<T>(MatrixView<const T>, std::span<T>);                                        \
    template void im2col<T>(std::span<const T>, std::size_t, const ConvGeometry&, std::span<T>);           \
    template void col2im<T>(std::span<const T>, std::size_t, const ConvGeometry&, std::span<T>);           \
    template void maxpool_forward<T>(std::span<const T>, std::size_t, const PoolGeometry&, std::span<T>,    \
                                     std::span<std::uint32_t>);                                             \
    template void maxpool_backward<T>(std::span<const T>, std::span<const std::uint32_t>, std::size_t,      \
                                      const PoolGeometry&, std::span<T>);

MLOCK_INSTANTIATE_KERNELS(float)
MLOCK_INSTANTIATE_KERNELS(double)

#undef MLOCK_INSTANTIATE_KERNELS

}  // namespace mlock::kernels
