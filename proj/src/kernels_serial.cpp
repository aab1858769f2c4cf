#include <cmath>
#include <vector>

#include "vton/kernels.hpp"

namespace vton::kernels::serial {

void dilate_once(std::span<const std::uint8_t> in, std::span<std::uint8_t> out, int height, int width,
                 std::span<const std::uint8_t> element, int radius) {
    const int side = 2 * radius + 1;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            std::uint8_t hit = 0;
            for (int dy = -radius; dy <= radius && !hit; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    if (!element[(dy + radius) * side + (dx + radius)]) continue;
                    const int sy = y - dy;
                    const int sx = x - dx;
                    if (sy < 0 || sy >= height || sx < 0 || sx >= width) continue;
                    if (in[sy * width + sx]) {
                        hit = 1;
                        break;
                    }
                }
            }
            out[y * width + x] = hit;
        }
    }
}

void conv2d_forward(std::span<const double> x, std::span<const double> w, std::span<const double> bias,
                    std::span<double> out, const ConvShape& s) {
    const int k = s.kernel;
    const int pad = k / 2;
    for (int o = 0; o < s.out_channels; ++o) {
        for (int y = 0; y < s.height; ++y) {
            for (int xx = 0; xx < s.width; ++xx) {
                double acc = bias.empty() ? 0.0 : bias[o];
                for (int c = 0; c < s.in_channels; ++c) {
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = y + ky - pad;
                        if (iy < 0 || iy >= s.height) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = xx + kx - pad;
                            if (ix < 0 || ix >= s.width) continue;
                            acc += w[((o * s.in_channels + c) * k + ky) * k + kx] * x[(c * s.height + iy) * s.width + ix];
                        }
                    }
                }
                out[(o * s.height + y) * s.width + xx] = acc;
            }
        }
    }
}

void conv2d_backward_input(std::span<const double> grad_out, std::span<const double> w, std::span<double> grad_x,
                           const ConvShape& s) {
    const int k = s.kernel;
    const int pad = k / 2;
    for (int c = 0; c < s.in_channels; ++c) {
        for (int y = 0; y < s.height; ++y) {
            for (int xx = 0; xx < s.width; ++xx) {
                double acc = 0.0;
                for (int o = 0; o < s.out_channels; ++o) {
                    for (int ky = 0; ky < k; ++ky) {
                        const int oy = y - ky + pad;
                        if (oy < 0 || oy >= s.height) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ox = xx - kx + pad;
                            if (ox < 0 || ox >= s.width) continue;
                            acc += w[((o * s.in_channels + c) * k + ky) * k + kx] *
                                   grad_out[(o * s.height + oy) * s.width + ox];
                        }
                    }
                }
                grad_x[(c * s.height + y) * s.width + xx] += acc;
            }
        }
    }
}

void conv2d_backward_weight(std::span<const double> grad_out, std::span<const double> x, std::span<double> grad_w,
                            std::span<double> grad_bias, const ConvShape& s) {
    const int k = s.kernel;
    const int pad = k / 2;
    for (int o = 0; o < s.out_channels; ++o) {
        for (int c = 0; c < s.in_channels; ++c) {
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    double acc = 0.0;
                    for (int y = 0; y < s.height; ++y) {
                        const int iy = y + ky - pad;
                        if (iy < 0 || iy >= s.height) continue;
                        for (int xx = 0; xx < s.width; ++xx) {
                            const int ix = xx + kx - pad;
                            if (ix < 0 || ix >= s.width) continue;
                            acc += grad_out[(o * s.height + y) * s.width + xx] * x[(c * s.height + iy) * s.width + ix];
                        }
                    }
                    grad_w[((o * s.in_channels + c) * k + ky) * k + kx] += acc;
                }
            }
        }
        if (!grad_bias.empty()) {
            double acc = 0.0;
            for (int i = 0; i < s.height * s.width; ++i) acc += grad_out[o * s.height * s.width + i];
            grad_bias[o] += acc;
        }
    }
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, int m, int k, int n,
            bool transpose_a, bool transpose_b) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                const double av = transpose_a ? a[p * m + i] : a[i * k + p];
                const double bv = transpose_b ? b[j * k + p] : b[p * n + j];
                acc += av * bv;
            }
            c[i * n + j] = acc;
        }
    }
}

double ssim_channel(std::span<const double> a, std::span<const double> b, int height, int width,
                    const SsimParams& p) {
    const int win = p.window;
    std::vector<double> g(static_cast<std::size_t>(win) * win);
    double total = 0.0;
    const int r = win / 2;
    for (int dy = 0; dy < win; ++dy)
        for (int dx = 0; dx < win; ++dx) {
            const double d2 = double((dy - r) * (dy - r) + (dx - r) * (dx - r));
            g[dy * win + dx] = std::exp(-d2 / (2.0 * p.gaussian_sigma * p.gaussian_sigma));
            total += g[dy * win + dx];
        }
    for (double& v : g) v /= total;

    double sum = 0.0;
    const int rows = height - win + 1;
    const int cols = width - win + 1;
    for (int y = 0; y < rows; ++y) {
        for (int x = 0; x < cols; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int dy = 0; dy < win; ++dy)
                for (int dx = 0; dx < win; ++dx) {
                    const double wgt = g[dy * win + dx];
                    const double va = a[(y + dy) * width + x + dx];
                    const double vb = b[(y + dy) * width + x + dx];
                    ma += wgt * va;
                    mb += wgt * vb;
                    saa += wgt * va * va;
                    sbb += wgt * vb * vb;
                    sab += wgt * va * vb;
                }
            const double var_a = saa - ma * ma;
            const double var_b = sbb - mb * mb;
            const double cov = sab - ma * mb;
            sum += ((2 * ma * mb + p.c1) * (2 * cov + p.c2)) / ((ma * ma + mb * mb + p.c1) * (var_a + var_b + p.c2));
        }
    }
    return sum / (static_cast<double>(rows) * cols);
}

}  // namespace vton::kernels::serial
