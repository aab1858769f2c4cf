#include <doctest.h>

#include <random>
#include <vector>

#include "vton/kernels.hpp"

namespace k = vton::kernels;

namespace {

std::vector<double> randn(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

}  // namespace

TEST_CASE("dilate_once: parallel equals serial") {
    std::mt19937_64 rng(11);
    std::bernoulli_distribution on(0.2);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = 5 + trial, w = 40 - trial;
        std::vector<std::uint8_t> in(static_cast<std::size_t>(h) * w);
        for (auto& v : in) v = on(rng);
        const int radius = 1 + trial % 2;
        std::vector<std::uint8_t> element((2 * radius + 1) * (2 * radius + 1));
        for (auto& v : element) v = on(rng) || on(rng);
        element[element.size() / 2] = 1;
        std::vector<std::uint8_t> a(in.size()), b(in.size());
        k::serial::dilate_once(in, a, h, w, element, radius);
        k::parallel::dilate_once(in, b, h, w, element, radius);
        CHECK(a == b);
    }
}

TEST_CASE("conv2d forward matches a direct loop and parallel equals serial") {
    std::mt19937_64 rng(3);
    const k::ConvShape s{3, 5, 7, 6, 3};
    const auto x = randn(rng, 3 * 7 * 6);
    const auto w = randn(rng, 5 * 3 * 9);
    const auto bias = randn(rng, 5);
    std::vector<double> a(5 * 7 * 6), b(a.size());
    k::serial::conv2d_forward(x, w, bias, a, s);
    k::parallel::conv2d_forward(x, w, bias, b, s);
    CHECK(a == b);

    for (int o = 0; o < 5; ++o)
        for (int y = 0; y < 7; ++y)
            for (int xx = 0; xx < 6; ++xx) {
                double acc = bias[o];
                for (int c = 0; c < 3; ++c)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int iy = y + ky - 1, ix = xx + kx - 1;
                            if (iy < 0 || iy >= 7 || ix < 0 || ix >= 6) continue;
                            acc += w[((o * 3 + c) * 3 + ky) * 3 + kx] * x[(c * 7 + iy) * 6 + ix];
                        }
                CHECK(a[(o * 7 + y) * 6 + xx] == doctest::Approx(acc).epsilon(1e-12));
            }
}

TEST_CASE("conv2d backward: parallel equals serial") {
    std::mt19937_64 rng(4);
    const k::ConvShape s{4, 6, 8, 5, 3};
    const auto x = randn(rng, 4 * 8 * 5);
    const auto w = randn(rng, 6 * 4 * 9);
    const auto g = randn(rng, 6 * 8 * 5);
    std::vector<double> gx1(x.size()), gx2(x.size()), gw1(w.size()), gw2(w.size()), gb1(6), gb2(6);
    k::serial::conv2d_backward_input(g, w, gx1, s);
    k::parallel::conv2d_backward_input(g, w, gx2, s);
    k::serial::conv2d_backward_weight(g, x, gw1, gb1, s);
    k::parallel::conv2d_backward_weight(g, x, gw2, gb2, s);
    CHECK(gx1 == gx2);
    CHECK(gw1 == gw2);
    CHECK(gb1 == gb2);
}

TEST_CASE("matmul: all transpose variants, parallel equals serial and a loop oracle") {
    std::mt19937_64 rng(5);
    const int m = 7, kk = 5, n = 9;
    for (bool ta : {false, true})
        for (bool tb : {false, true}) {
            const auto a = randn(rng, m * kk);
            const auto b = randn(rng, kk * n);
            std::vector<double> c1(m * n), c2(m * n);
            k::serial::matmul(a, b, c1, m, kk, n, ta, tb);
            k::parallel::matmul(a, b, c2, m, kk, n, ta, tb);
            CHECK(c1 == c2);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (int p = 0; p < kk; ++p)
                        acc += (ta ? a[p * m + i] : a[i * kk + p]) * (tb ? b[j * kk + p] : b[p * n + j]);
                    CHECK(c1[i * n + j] == doctest::Approx(acc).epsilon(1e-12));
                }
        }
}

TEST_CASE("ssim_channel: parallel equals serial") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int h = 24, w = 19;
    std::vector<double> a(h * w), b(h * w);
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    const k::SsimParams p{11, 1.5, 1e-4, 9e-4};
    CHECK(k::serial::ssim_channel(a, b, h, w, p) == k::parallel::ssim_channel(a, b, h, w, p));
}

TEST_CASE("thread_count is positive") { CHECK(k::thread_count() >= 1); }
