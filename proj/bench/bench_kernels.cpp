#include <benchmark/benchmark.h>

#include <vector>

#include "mlock/kernels.hpp"
#include "mlock/network.hpp"
#include "mlock/rng.hpp"

namespace {

using namespace mlock;
using kernels::MatrixView;
using kernels::Op;

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform01() * 2.0 - 1.0);
    return v;
}

// args: m, n, k. C[m,n] = A[m,k] * B[n,k]^T, the dense-layer forward shape
template <bool Reference>
void BM_Gemm(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const auto n = static_cast<std::size_t>(state.range(1));
    const auto k = static_cast<std::size_t>(state.range(2));
    const auto a = random_values(m * k, 1), b = random_values(n * k, 2);
    std::vector<float> c(m * n);
    for (auto _ : state) {
        MatrixView<const float> av(a.data(), m, k), bv(b.data(), n, k);
        MatrixView<float> cv(c.data(), m, n);
        if constexpr (Reference) {
            kernels::reference::gemm<float>(av, Op::none, bv, Op::transpose, cv);
        } else {
            kernels::gemm<float>(av, Op::none, bv, Op::transpose, cv);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.counters["GFLOP/s"] = benchmark::Counter(2.0 * static_cast<double>(m * n * k),
                                                   benchmark::Counter::kIsIterationInvariantRate,
                                                   benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Gemm<false>)->Args({64, 900, 784})->Args({64, 900, 900})->Args({256, 256, 256})->Args({64, 10, 900});
BENCHMARK(BM_Gemm<true>)->Args({64, 900, 784})->Args({256, 256, 256})->Args({64, 10, 900});

// args: batch, in channels, out channels, size
template <bool Reference>
void BM_Conv3x3(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const auto ic = static_cast<std::size_t>(state.range(1));
    const auto oc = static_cast<std::size_t>(state.range(2));
    const auto hw = static_cast<std::size_t>(state.range(3));
    const kernels::ConvGeometry g{ic, hw, hw, 3, 1, 1};
    const std::size_t spatial = g.out_height() * g.out_width();
    const auto in = random_values(batch * ic * hw * hw, 3);
    const auto w = random_values(oc * g.patch_size(), 4);
    const std::vector<float> bias(oc, 0.0f);
    std::vector<float> out(batch * oc * spatial), cols(g.patch_size() * batch * spatial), tmp(oc * batch * spatial);
    for (auto _ : state) {
        if constexpr (Reference) {
            kernels::reference::conv2d_direct<float>(in, batch, g, w, bias, oc, out);
        } else {
            kernels::im2col<float>(in, batch, g, cols);
            kernels::gemm<float>(MatrixView<const float>(w.data(), oc, g.patch_size()), Op::none,
                                 MatrixView<const float>(cols.data(), g.patch_size(), batch * spatial), Op::none,
                                 MatrixView<float>(tmp.data(), oc, batch * spatial));
        }
        benchmark::DoNotOptimize(out.data());
        benchmark::DoNotOptimize(tmp.data());
    }
    state.counters["GFLOP/s"] = benchmark::Counter(2.0 * static_cast<double>(oc * g.patch_size() * batch * spatial),
                                                   benchmark::Counter::kIsIterationInvariantRate,
                                                   benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Conv3x3<false>)->Args({16, 32, 32, 28})->Args({16, 3, 32, 32});
BENCHMARK(BM_Conv3x3<true>)->Args({16, 32, 32, 28})->Args({16, 3, 32, 32});

void BM_TrainStep(benchmark::State& state) {
    const bool cnn = state.range(0) != 0;
    const NetworkSpec spec = cnn ? cnn_preset({1, 28, 28}, 10) : mlp_preset({1, 28, 28}, 10);
    const auto params = init_parameters<float>(spec, 0);
    Tensor<float> batch(Shape{64, 1, 28, 28});
    const auto values = random_values(batch.size(), 5);
    std::copy(values.begin(), values.end(), batch.data());
    std::vector<std::uint16_t> labels(64);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint16_t>(i % 10);
    for (auto _ : state) {
        auto lg = loss_and_grad(spec, params, batch, labels);
        benchmark::DoNotOptimize(lg.loss);
    }
    state.SetLabel(cnn ? "cnn batch 64" : "mlp batch 64");
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
