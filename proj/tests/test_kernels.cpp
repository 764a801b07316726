#include <gtest/gtest.h>

#include <cmath>
#include <tuple>
#include <string>
#include <vector>

#include "mlock/error.hpp"
#include "mlock/kernels.hpp"
#include "mlock/rng.hpp"

namespace {

using namespace mlock;
using kernels::MatrixView;
using kernels::Op;

template <typename T>
std::vector<T> random_vector(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(rng.uniform01() * 2.0 - 1.0);
    return v;
}

template <typename T>
void expect_close(const std::vector<T>& got, const std::vector<T>& want, double tol) {
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        ASSERT_NEAR(got[i], want[i], tol * (1.0 + std::abs(static_cast<double>(want[i])))) << "at " << i;
    }
}

// sizes straddle the 8x32 register tile and the 512-deep k blocks
class GemmShapes : public ::testing::TestWithParam<std::tuple<std::size_t, std::size_t, std::size_t, int>> {};

TEST_P(GemmShapes, MatchesReferenceForAllTransposes) {
    const auto [m, n, k, op_bits] = GetParam();
    const Op op_a = (op_bits & 1) ? Op::transpose : Op::none;
    const Op op_b = (op_bits & 2) ? Op::transpose : Op::none;
    const auto a = random_vector<float>(m * k, 1);
    const auto b = random_vector<float>(k * n, 2);
    const MatrixView<const float> av(a.data(), op_a == Op::none ? m : k, op_a == Op::none ? k : m);
    const MatrixView<const float> bv(b.data(), op_b == Op::none ? k : n, op_b == Op::none ? n : k);
    for (bool accumulate : {false, true}) {
        std::vector<float> c = random_vector<float>(m * n, 3), ref = c;
        kernels::gemm<float>(av, op_a, bv, op_b, MatrixView<float>(c.data(), m, n), accumulate);
        kernels::reference::gemm<float>(av, op_a, bv, op_b, MatrixView<float>(ref.data(), m, n), accumulate);
        expect_close(c, ref, 1e-4 * std::sqrt(static_cast<double>(k)));
    }
}

INSTANTIATE_TEST_SUITE_P(Kernels, GemmShapes,
                         ::testing::Combine(::testing::Values(1, 7, 8, 9, 64), ::testing::Values(1, 31, 33, 100),
                                            ::testing::Values(1, 17, 513, 1100), ::testing::Values(0, 1, 2, 3)));

TEST(Gemm, DoubleMatchesReferenceClosely) {
    const std::size_t m = 13, n = 45, k = 70;
    const auto a = random_vector<double>(m * k, 4), b = random_vector<double>(n * k, 5);
    std::vector<double> c(m * n), ref(m * n);
    kernels::gemm<double>(MatrixView<const double>(a.data(), m, k), Op::none,
                          MatrixView<const double>(b.data(), n, k), Op::transpose, MatrixView<double>(c.data(), m, n));
    kernels::reference::gemm<double>(MatrixView<const double>(a.data(), m, k), Op::none,
                                     MatrixView<const double>(b.data(), n, k), Op::transpose,
                                     MatrixView<double>(ref.data(), m, n));
    expect_close(c, ref, 1e-12);
}

TEST(Gemm, RespectsStrides) {
    // 2x2 block inside a 3-wide buffer
    const std::vector<float> a{1, 2, 99, 3, 4, 99};
    const std::vector<float> b{5, 6, 99, 7, 8, 99};
    std::vector<float> c(6, -1.0f);
    kernels::gemm<float>(MatrixView<const float>(a.data(), 2, 2, 3), Op::none,
                         MatrixView<const float>(b.data(), 2, 2, 3), Op::none, MatrixView<float>(c.data(), 2, 2, 3));
    EXPECT_EQ(c, (std::vector<float>{19, 22, -1, 43, 50, -1}));
}

TEST(Gemm, RejectsMismatchedShapes) {
    std::vector<float> a(6), b(6), c(4);
    EXPECT_THROW(kernels::gemm<float>(MatrixView<const float>(a.data(), 2, 3), Op::none,
                                      MatrixView<const float>(b.data(), 2, 3), Op::none,
                                      MatrixView<float>(c.data(), 2, 2)),
                 ShapeError);
}

TEST(Gemm, RepeatedCallsAreBitIdentical) {
    const std::size_t m = 64, n = 300, k = 800;
    const auto a = random_vector<float>(m * k, 6), b = random_vector<float>(n * k, 7);
    std::vector<float> c1(m * n), c2(m * n);
    kernels::gemm<float>(MatrixView<const float>(a.data(), m, k), Op::none, MatrixView<const float>(b.data(), n, k),
                         Op::transpose, MatrixView<float>(c1.data(), m, n));
    kernels::gemm<float>(MatrixView<const float>(a.data(), m, k), Op::none, MatrixView<const float>(b.data(), n, k),
                         Op::transpose, MatrixView<float>(c2.data(), m, n));
    EXPECT_EQ(c1, c2);
}

TEST(Relu, ForwardAndBackward) {
    const std::vector<float> x{-2, 0, 3, -0.5f, 7};
    std::vector<float> y(5), g(5);
    kernels::relu_forward<float>(x, y);
    EXPECT_EQ(y, (std::vector<float>{0, 0, 3, 0, 7}));
    const std::vector<float> gy{1, 2, 3, 4, 5};
    kernels::relu_backward<float>(x, gy, g);
    EXPECT_EQ(g, (std::vector<float>{0, 0, 3, 0, 5}));
}

TEST(BiasAndColumnSums, Basic) {
    std::vector<float> m{1, 2, 3, 4, 5, 6};
    const std::vector<float> bias{10, 20, 30};
    kernels::add_row_bias<float>(MatrixView<float>(m.data(), 2, 3), bias);
    EXPECT_EQ(m, (std::vector<float>{11, 22, 33, 14, 25, 36}));
    std::vector<float> sums(3);
    kernels::column_sums<float>(MatrixView<const float>(m.data(), 2, 3), sums);
    EXPECT_EQ(sums, (std::vector<float>{25, 47, 69}));
}

struct ConvCase {
    std::size_t batch, channels, height, width, kernel, stride, padding, out_channels;
};

class ConvCases : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvCases, Im2colGemmMatchesDirectConvolution) {
    const auto p = GetParam();
    const kernels::ConvGeometry g{p.channels, p.height, p.width, p.kernel, p.stride, p.padding};
    const std::size_t spatial = g.out_height() * g.out_width();
    const auto in = random_vector<double>(p.batch * p.channels * p.height * p.width, 8);
    const auto w = random_vector<double>(p.out_channels * g.patch_size(), 9);
    const auto bias = random_vector<double>(p.out_channels, 10);

    std::vector<double> cols(g.patch_size() * p.batch * spatial);
    kernels::im2col<double>(in, p.batch, g, cols);
    std::vector<double> prod(p.out_channels * p.batch * spatial);
    kernels::gemm<double>(MatrixView<const double>(w.data(), p.out_channels, g.patch_size()), Op::none,
                          MatrixView<const double>(cols.data(), g.patch_size(), p.batch * spatial), Op::none,
                          MatrixView<double>(prod.data(), p.out_channels, p.batch * spatial));
    std::vector<double> got(p.batch * p.out_channels * spatial);
    for (std::size_t n = 0; n < p.batch; ++n)
        for (std::size_t oc = 0; oc < p.out_channels; ++oc)
            for (std::size_t s = 0; s < spatial; ++s)
                got[(n * p.out_channels + oc) * spatial + s] = prod[oc * p.batch * spatial + n * spatial + s] + bias[oc];

    std::vector<double> want(got.size());
    kernels::reference::conv2d_direct<double>(in, p.batch, g, w, bias, p.out_channels, want);
    expect_close(got, want, 1e-12);
}

TEST_P(ConvCases, Col2imIsAdjointOfIm2col) {
    // <im2col(x), y> == <x, col2im(y)>
    const auto p = GetParam();
    const kernels::ConvGeometry g{p.channels, p.height, p.width, p.kernel, p.stride, p.padding};
    const std::size_t cols_size = g.patch_size() * p.batch * g.out_height() * g.out_width();
    const auto x = random_vector<double>(p.batch * p.channels * p.height * p.width, 11);
    const auto y = random_vector<double>(cols_size, 12);
    std::vector<double> cx(cols_size), ty(x.size(), 123.0);
    kernels::im2col<double>(x, p.batch, g, cx);
    kernels::col2im<double>(y, p.batch, g, ty);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cols_size; ++i) lhs += cx[i] * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * ty[i];
    EXPECT_NEAR(lhs, rhs, 1e-9 * (1 + std::abs(lhs)));
}

INSTANTIATE_TEST_SUITE_P(Kernels, ConvCases,
                         ::testing::Values(ConvCase{2, 3, 8, 8, 3, 1, 1, 4}, ConvCase{1, 1, 5, 7, 3, 1, 0, 2},
                                           ConvCase{3, 2, 9, 9, 3, 2, 1, 5}, ConvCase{2, 4, 6, 6, 1, 1, 0, 3},
                                           ConvCase{1, 2, 7, 5, 5, 2, 2, 2}),
                         [](const ::testing::TestParamInfo<ConvCase>& info) {
                             const auto& c = info.param;
                             return "n" + std::to_string(c.batch) + "c" + std::to_string(c.channels) + "_" +
                                    std::to_string(c.height) + "x" + std::to_string(c.width) + "_k" +
                                    std::to_string(c.kernel) + "s" + std::to_string(c.stride) + "p" +
                                    std::to_string(c.padding) + "o" + std::to_string(c.out_channels);
                         });

TEST(MaxPool, MatchesReferenceAndRoutesGradients) {
    const kernels::PoolGeometry g{3, 6, 8, 2, 2};
    const std::size_t batch = 2;
    const auto in = random_vector<float>(batch * 3 * 6 * 8, 13);
    const std::size_t out_size = batch * 3 * g.out_height() * g.out_width();
    std::vector<float> out(out_size), ref(out_size);
    std::vector<std::uint32_t> arg(out_size);
    kernels::maxpool_forward<float>(in, batch, g, out, arg);
    kernels::reference::maxpool<float>(in, batch, g, ref);
    EXPECT_EQ(out, ref);

    std::vector<float> gy(out_size, 1.0f), gx(in.size(), 5.0f);
    kernels::maxpool_backward<float>(gy, arg, batch, g, gx);
    double total = 0;
    for (std::size_t i = 0; i < gx.size(); ++i) {
        total += gx[i];
        if (gx[i] != 0.0f) {
            EXPECT_EQ(gx[i], 1.0f);
        }
    }
    EXPECT_EQ(total, static_cast<double>(out_size));
}

TEST(MaxPool, TiesGoToFirstElement) {
    const kernels::PoolGeometry g{1, 2, 2, 2, 2};
    const std::vector<float> in{4, 4, 4, 4};
    std::vector<float> out(1);
    std::vector<std::uint32_t> arg(1);
    kernels::maxpool_forward<float>(in, 1, g, out, arg);
    EXPECT_EQ(arg[0], 0u);
}

}  // namespace
