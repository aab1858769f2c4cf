#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "vton/kernels.hpp"

namespace k = vton::kernels;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

template <bool Parallel>
void BM_Dilate(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    std::mt19937_64 rng(1);
    std::bernoulli_distribution on(0.05);
    std::vector<std::uint8_t> in(static_cast<std::size_t>(side) * side), out(in.size());
    for (auto& v : in) v = on(rng);
    const std::vector<std::uint8_t> element(9, 1);
    for (auto _ : state) {
        if constexpr (Parallel)
            k::parallel::dilate_once(in, out, side, side, element, 1);
        else
            k::serial::dilate_once(in, out, side, side, element, 1);
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void BM_Conv(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const k::ConvShape s{16, 16, side, side, 3};
    const auto x = randn(16 * side * side, 2);
    const auto w = randn(16 * 16 * 9, 3);
    const auto b = randn(16, 4);
    std::vector<double> out(16 * side * side);
    for (auto _ : state) {
        if constexpr (Parallel)
            k::parallel::conv2d_forward(x, w, b, out, s);
        else
            k::serial::conv2d_forward(x, w, b, out, s);
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto a = randn(static_cast<std::size_t>(n) * n, 5);
    const auto b = randn(static_cast<std::size_t>(n) * n, 6);
    std::vector<double> c(static_cast<std::size_t>(n) * n);
    for (auto _ : state) {
        if constexpr (Parallel)
            k::parallel::matmul(a, b, c, n, n, n, false, true);
        else
            k::serial::matmul(a, b, c, n, n, n, false, true);
        benchmark::DoNotOptimize(c.data());
    }
}

template <bool Parallel>
void BM_Ssim(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const auto a = randn(static_cast<std::size_t>(side) * side, 7);
    const auto b = randn(static_cast<std::size_t>(side) * side, 8);
    const k::SsimParams p{11, 1.5, 1e-4, 9e-4};
    for (auto _ : state) {
        double v = Parallel ? k::parallel::ssim_channel(a, b, side, side, p) : k::serial::ssim_channel(a, b, side, side, p);
        benchmark::DoNotOptimize(v);
    }
}

}  // namespace

BENCHMARK(BM_Dilate<false>)->Name("dilate/serial")->Arg(256)->Arg(1024);
BENCHMARK(BM_Dilate<true>)->Name("dilate/omp")->Arg(256)->Arg(1024);
BENCHMARK(BM_Conv<false>)->Name("conv2d/serial")->Arg(32)->Arg(64);
BENCHMARK(BM_Conv<true>)->Name("conv2d/omp")->Arg(32)->Arg(64);
BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(128)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/omp")->Arg(128)->Arg(256);
BENCHMARK(BM_Ssim<false>)->Name("ssim/serial")->Arg(256)->Arg(512);
BENCHMARK(BM_Ssim<true>)->Name("ssim/omp")->Arg(256)->Arg(512);

BENCHMARK_MAIN();
