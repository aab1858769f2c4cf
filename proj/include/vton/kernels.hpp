#pragma once

// Hot loops shared by the mask engine, the toy denoiser and the metrics.
//
// Every kernel exists twice: `serial` is the straightforward reference kept for
// testing, `parallel` distributes independent output elements over OpenMP
// threads. Each output element is accumulated in the same order in both, so the
// two are bit-identical; tests assert exact equality.

#include <cstdint>
#include <span>

namespace vton::kernels {

struct ConvShape {
    int in_channels = 0;
    int out_channels = 0;
    int height = 0;
    int width = 0;
    int kernel = 3;  // odd; zero "same" padding of kernel / 2
};

struct SsimParams {
    int window = 11;
    double gaussian_sigma = 1.5;
    double c1 = 0.0;
    double c2 = 0.0;
};

#define VTON_KERNEL_SET                                                                                         \
    /* out(y, x) = OR over set element offsets (dy, dx) of in(y - dy, x - dx): one Minkowski dilation. */        \
    void dilate_once(std::span<const std::uint8_t> in, std::span<std::uint8_t> out, int height, int width,      \
                     std::span<const std::uint8_t> element, int radius);                                        \
    /* x: [C, H, W], w: [O, C, k, k], bias: [O] (may be empty), out: [O, H, W]. */                               \
    void conv2d_forward(std::span<const double> x, std::span<const double> w, std::span<const double> bias,      \
                        std::span<double> out, const ConvShape& shape);                                         \
    /* Accumulates d(loss)/dx into grad_x given grad_out. */                                                     \
    void conv2d_backward_input(std::span<const double> grad_out, std::span<const double> w,                     \
                               std::span<double> grad_x, const ConvShape& shape);                               \
    /* Accumulates d(loss)/dw and d(loss)/dbias. grad_bias may be empty. */                                      \
    void conv2d_backward_weight(std::span<const double> grad_out, std::span<const double> x,                    \
                                std::span<double> grad_w, std::span<double> grad_bias, const ConvShape& shape); \
    /* c[M, N] = a[M, K] * b[K, N], optionally transposing a (stored [K, M]) or b (stored [N, K]). */            \
    void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, int m, int k, int n, \
                bool transpose_a, bool transpose_b);                                                            \
    /* Mean SSIM of one channel over all valid window positions; a, b are [H, W]. */                             \
    double ssim_channel(std::span<const double> a, std::span<const double> b, int height, int width,            \
                        const SsimParams& params);

namespace serial {
VTON_KERNEL_SET
}  // namespace serial

namespace parallel {
VTON_KERNEL_SET
}  // namespace parallel

#undef VTON_KERNEL_SET

/// Number of OpenMP threads the parallel kernels use (1 without OpenMP).
int thread_count();

}  // namespace vton::kernels
